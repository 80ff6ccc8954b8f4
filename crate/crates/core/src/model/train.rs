use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::GeolocationMode;
use super::network::{station_coords, Model, SampleInput};
use crate::error::{Error, Result};
use crate::geoenc::GeoCoord;
use crate::nncore::{adam_step, AdamConfig, OptimizerState, Parameterized};
use crate::scalar::Scalar;
use crate::spatialdata::{SampleWindow, ScalerParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLoss>,
    pub steps: u64,
    /// Epoch whose parameters were kept when early stopping is on.
    pub best_epoch: Option<usize>,
}

impl TrainReport {
    /// `epoch,train_loss,val_loss` with an empty cell when there is no
    /// validation set.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            let val = e.val_loss.map(|v| format!("{v:.8}")).unwrap_or_default();
            let _ = writeln!(s, "{},{:.8},{}", e.epoch, e.train_loss, val);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn first_loss(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.train_loss)
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }
}

/// Model-ready inputs for every window; embeddings are computed once per
/// station.
pub fn prepare_inputs<F: Scalar>(
    model: &Model<F>,
    windows: &[SampleWindow],
    stations: &[GeoCoord],
) -> Result<Vec<SampleInput<F>>> {
    let coords = station_coords(windows, stations)?;
    let mut cache: BTreeMap<usize, Option<Vec<F>>> = BTreeMap::new();
    windows
        .iter()
        .zip(&coords)
        .map(|(w, c)| {
            let geo = match cache.get(&w.station) {
                Some(g) => g.clone(),
                None => {
                    let g = model.embedding(c)?;
                    cache.insert(w.station, g.clone());
                    g
                }
            };
            model.prepare_with(w, c, geo)
        })
        .collect()
}

/// Fits the model on `train` (windows located through `stations`) with
/// Adam, the configured learning-rate schedule and Huber loss. Dropout is
/// active during training only; the location encoder is never updated.
pub fn train<F: Scalar>(
    model: &mut Model<F>,
    train: &[SampleWindow],
    stations: &[GeoCoord],
    val: Option<&[SampleWindow]>,
) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    model.config.validate()?;
    if model.config.mode == GeolocationMode::Raw {
        let coords = station_coords(train, stations)?;
        let rows: Vec<[Option<f64>; 2]> = coords.iter().map(|c| [Some(c.lat), Some(c.lon)]).collect();
        model.set_coord_scaler(ScalerParams::fit(2, rows)?)?;
    }
    let inputs = prepare_inputs(model, train, stations)?;
    let val_inputs = match val {
        Some(v) if !v.is_empty() => Some(prepare_inputs(model, v, stations)?),
        _ => None,
    };

    let tc = model.config.train.clone();
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    dropout_rng.set_stream(2);
    let mut opt = OptimizerState::for_params(&model.params.param_slices(), AdamConfig::default());
    let mut report = TrainReport::default();
    let mut best: Option<(f64, usize, super::network::ModelParams<F>)> = None;
    let mut grads = model.params.zeroed();

    for epoch in 1..=tc.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_total = 0.0;
        for chunk in order.chunks(tc.batch_size) {
            grads.zero();
            let batch: Vec<&SampleInput<F>> = chunk.iter().map(|&i| &inputs[i]).collect();
            let seed = rand::Rng::random::<u64>(&mut dropout_rng);
            let dropout = (model.config.dropout > 0.0).then_some(seed);
            let loss = model.objective_refs(&model.params, &batch, dropout, Some(&mut grads))?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            epoch_total += loss * chunk.len() as f64;
            let lr = tc.schedule.lr_at_step(report.steps);
            adam_step(&mut model.params.param_slices_mut(), &grads.param_slices(), &mut opt, lr)?;
            report.steps += 1;
        }
        let val_loss = match &val_inputs {
            Some(v) => Some(model.objective(&model.params, v, None, None)?),
            None => None,
        };
        report.epochs.push(EpochLoss {
            epoch,
            train_loss: epoch_total / inputs.len() as f64,
            val_loss,
        });
        log::debug!("epoch {epoch}: train {:.6} val {:?}", epoch_total / inputs.len() as f64, val_loss);

        if let (Some(patience), Some(v)) = (tc.patience, val_loss) {
            match &best {
                Some((b, _, _)) if v >= *b => {
                    let since = epoch - best.as_ref().map_or(epoch, |x| x.1);
                    if since >= patience {
                        break;
                    }
                }
                _ => best = Some((v, epoch, model.params.clone())),
            }
        }
    }
    if let Some((_, epoch, params)) = best {
        model.params = params;
        report.best_epoch = Some(epoch);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble, ModelConfig};
    use crate::nncore::Tensor2;

    fn toy(n: usize) -> (Vec<SampleWindow>, Vec<GeoCoord>) {
        let stations: Vec<GeoCoord> = (0..4).map(|i| GeoCoord::new(30.0 + 3.0 * i as f64, -100.0).unwrap()).collect();
        let windows = (0..n)
            .map(|k| {
                let mut f = Tensor2::zeros(4, 2);
                let a = ((k * 37) % 11) as f64 / 11.0 - 0.5;
                for t in 0..4 {
                    f[(t, 0)] = a;
                    f[(t, 1)] = (t as f64 / 4.0) - 0.5;
                }
                SampleWindow {
                    station: k % 4,
                    end_day: k as u32,
                    features: f,
                    mask: vec![true; 8],
                    target: 0.8 * a,
                }
            })
            .collect();
        (windows, stations)
    }

    fn cfg() -> ModelConfig {
        let mut c = ModelConfig::new(GeolocationMode::Raw, 2);
        c.window = 4;
        c.hidden = 4;
        c.layers = 1;
        c.train.epochs = 15;
        c.train.batch_size = 8;
        c.train.schedule.initial = 1e-2;
        c
    }

    #[test]
    fn loss_decreases_and_is_reproducible() {
        let (w, s) = toy(40);
        let mut a = assemble::<f64>(&cfg(), None).unwrap();
        let ra = train(&mut a, &w, &s, Some(&w[..8])).unwrap();
        assert!(ra.last_loss().unwrap() < ra.first_loss().unwrap());
        let mut b = assemble::<f64>(&cfg(), None).unwrap();
        let rb = train(&mut b, &w, &s, Some(&w[..8])).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
        assert!(ra.to_csv().starts_with("epoch,train_loss,val_loss\n1,"));
        assert_eq!(ra.steps, 15 * 5);
    }

    #[test]
    fn empty_training_set() {
        let mut m = assemble::<f64>(&cfg(), None).unwrap();
        assert!(matches!(train(&mut m, &[], &[], None), Err(Error::Empty(_))));
    }

    #[test]
    fn early_stopping_keeps_best() {
        let (w, s) = toy(40);
        let mut c = cfg();
        c.train.patience = Some(2);
        c.train.epochs = 60;
        let mut m = assemble::<f64>(&c, None).unwrap();
        let r = train(&mut m, &w[8..], &s, Some(&w[..8])).unwrap();
        let best = r.best_epoch.unwrap();
        assert!(r.epochs.len() == 60 || r.epochs.len() == best + 2);
        let min = r.epochs.iter().filter_map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(r.epochs[best - 1].val_loss, Some(min));
        let kept = m.objective(&m.params, &prepare_inputs(&m, &w[..8], &s).unwrap(), None, None).unwrap();
        assert_eq!(kept, min);
    }

    #[test]
    fn works_in_f32() {
        let (w, s) = toy(16);
        let mut m = assemble::<f32>(&cfg(), None).unwrap();
        let r = train(&mut m, &w, &s, None).unwrap();
        assert!(r.last_loss().unwrap().is_finite());
    }
}
