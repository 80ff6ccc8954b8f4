use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Fusion, GeolocationMode, ModelConfig};
use crate::error::{Error, Result};
use crate::geoenc::{featurize_sinusoidal, GeoCoord, LocationEncoder};
use crate::nncore::{
    dropout_mask_from, huber_loss, Attention, AttentionCache, BiLstm, BiLstmCache, Dense, LayerNorm, LayerNormCache,
    LossConfig, Parameterized, Tensor2,
};
use crate::scalar::Scalar;
use crate::spatialdata::{ScalerParams, SampleWindow, CONUS_LAT, CONUS_LON};

/// `kind` applied to `e_ts` and `e_proj`.
pub fn fuse<F: Scalar>(e_ts: &[F], e_proj: &[F], kind: Fusion) -> Result<Vec<F>> {
    match kind {
        Fusion::Hadamard => {
            if e_ts.len() != e_proj.len() {
                return Err(Error::dim("hadamard fusion", e_ts.len(), e_proj.len()));
            }
            Ok(e_ts.iter().zip(e_proj).map(|(&a, &b)| a * b).collect())
        }
        Fusion::Concat => Ok(e_ts.iter().chain(e_proj).copied().collect()),
    }
}

/// Trainable arrays of the estimator. The location encoder is not part of
/// it.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<F> {
    pub lstm: Vec<BiLstm<F>>,
    pub norms: Vec<LayerNorm<F>>,
    pub attention: Attention<F>,
    pub projection: Option<Dense<F>>,
    pub head: Dense<F>,
}

impl<F: Scalar> ModelParams<F> {
    fn init(cfg: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let h = cfg.hidden;
        let mut lstm = Vec::with_capacity(cfg.layers);
        let mut input = cfg.input_width();
        for _ in 0..cfg.layers {
            let mut layer = BiLstm::new(input, h, &mut rng);
            for cell in [&mut layer.forward, &mut layer.backward] {
                cell.bias[h..2 * h].iter_mut().for_each(|b| *b = F::one());
            }
            lstm.push(layer);
            input = 2 * h;
        }
        let norms = (0..cfg.layers).map(|_| LayerNorm::new(2 * h)).collect();
        let attention = Attention::new(2 * h, &mut rng);
        let projection = match (cfg.mode, cfg.fusion) {
            (GeolocationMode::Encoder, Fusion::Hadamard) => Some(2 * h),
            (GeolocationMode::Encoder, Fusion::Concat) if cfg.concat_projection => Some(2 * h),
            _ => None,
        }
        .map(|out| {
            let mut p = Dense::new(cfg.embedding_dim.unwrap_or(1), out, &mut rng);
            if cfg.fusion == Fusion::Hadamard {
                // start near the identity element of the product
                p.bias.iter_mut().for_each(|b| *b = F::one());
            }
            p
        });
        let head = Dense::new(cfg.fused_dim(), 1, &mut rng);
        ModelParams {
            lstm,
            norms,
            attention,
            projection,
            head,
        }
    }

    /// `[rows, cols]` of every array, in visiting order.
    pub fn shapes(&self) -> Vec<[usize; 2]> {
        let mut v = Vec::new();
        for l in &self.lstm {
            for c in [&l.forward, &l.backward] {
                v.push([c.input_weights.rows(), c.input_weights.cols()]);
                v.push([c.recurrent_weights.rows(), c.recurrent_weights.cols()]);
                v.push([1, c.bias.len()]);
            }
        }
        for n in &self.norms {
            v.push([1, n.dim()]);
            v.push([1, n.dim()]);
        }
        v.push([self.attention.dim(), self.attention.dim()]);
        for d in self.projection.iter().chain(std::iter::once(&self.head)) {
            v.push([d.input_dim(), d.output_dim()]);
            v.push([1, d.output_dim()]);
        }
        v
    }

    fn hidden(&self) -> usize {
        self.lstm[0].hidden_dim()
    }
}

impl<F: Scalar> Parameterized<F> for ModelParams<F> {
    fn param_slices(&self) -> Vec<&[F]> {
        let mut v = Vec::new();
        for l in &self.lstm {
            v.extend(l.param_slices());
        }
        for n in &self.norms {
            v.extend(n.param_slices());
        }
        v.extend(self.attention.param_slices());
        if let Some(p) = &self.projection {
            v.extend(p.param_slices());
        }
        v.extend(self.head.param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut v = Vec::new();
        for l in &mut self.lstm {
            v.extend(l.param_slices_mut());
        }
        for n in &mut self.norms {
            v.extend(n.param_slices_mut());
        }
        v.extend(self.attention.param_slices_mut());
        if let Some(p) = &mut self.projection {
            v.extend(p.param_slices_mut());
        }
        v.extend(self.head.param_slices_mut());
        v
    }

    fn param_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (i, l) in self.lstm.iter().enumerate() {
            v.extend(l.param_names().into_iter().map(|n| format!("lstm{i}.{n}")));
        }
        for (i, n) in self.norms.iter().enumerate() {
            v.extend(n.param_names().into_iter().map(|s| format!("norm{i}.{s}")));
        }
        v.push("attention.score".into());
        if let Some(p) = &self.projection {
            v.extend(p.param_names().into_iter().map(|n| format!("projection.{n}")));
        }
        v.extend(self.head.param_names().into_iter().map(|n| format!("head.{n}")));
        v
    }
}

struct LayerCache<F> {
    lstm: BiLstmCache<F>,
    norms: Vec<LayerNormCache<F>>,
    dropout: Option<Vec<F>>,
}

pub(crate) struct ForwardCache<F> {
    layers: Vec<LayerCache<F>>,
    states: Tensor2<F>,
    attention: AttentionCache<F>,
    ets: Vec<F>,
    proj: Option<Vec<F>>,
    fused: Vec<F>,
}

impl<F: Scalar> ForwardCache<F> {
    pub(crate) fn time_series_embedding(&self) -> &[F] {
        &self.ets
    }

    pub(crate) fn fused(&self) -> &[F] {
        &self.fused
    }

    pub(crate) fn attention_weights(&self) -> &[F] {
        self.attention.weights()
    }
}

/// Model-ready sample: per-step inputs, step mask and an optional location
/// embedding.
#[derive(Clone, Debug)]
pub struct SampleInput<F> {
    pub x: Tensor2<F>,
    pub mask: Vec<bool>,
    pub geo: Option<Vec<F>>,
    pub target: F,
}

impl<F: Scalar> ModelParams<F> {
    pub(crate) fn forward(
        &self,
        cfg: &ModelConfig,
        x: &Tensor2<F>,
        mask: &[bool],
        geo: Option<&[F]>,
        dropout: Option<&[Vec<F>]>,
    ) -> Result<(F, ForwardCache<F>)> {
        let h = self.hidden();
        let t_len = x.rows();
        let mut cur = x.clone();
        let mut layers = Vec::with_capacity(self.lstm.len());
        for (l, (lstm, norm)) in self.lstm.iter().zip(&self.norms).enumerate() {
            let (out, lc) = lstm.forward_pass(&cur, Some(mask))?;
            let mut y = Tensor2::zeros(t_len, 2 * h);
            let mut ncs = Vec::with_capacity(t_len);
            for t in 0..t_len {
                let (r, c) = norm.forward(out.row(t));
                y.row_mut(t).copy_from_slice(&r);
                ncs.push(c);
            }
            let drop = dropout.map(|d| d[l].clone());
            if let Some(m) = &drop {
                y.data_mut().iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
            }
            layers.push(LayerCache {
                lstm: lc,
                norms: ncs,
                dropout: drop,
            });
            cur = y;
        }
        let mut query = vec![F::zero(); 2 * h];
        query[..h].copy_from_slice(&cur.row(t_len - 1)[..h]);
        query[h..].copy_from_slice(&cur.row(0)[h..]);
        let (ets, attention) = self.attention.forward(&cur, &query, Some(mask))?;

        let (fused, proj) = if cfg.mode == GeolocationMode::Encoder {
            let e = geo.ok_or_else(|| Error::InvalidParameter("encoder mode needs a location embedding".into()))?;
            let p = match &self.projection {
                Some(pr) => {
                    if e.len() != pr.input_dim() {
                        return Err(Error::dim("location embedding", pr.input_dim(), e.len()));
                    }
                    pr.forward_vec(e)
                }
                None => e.to_vec(),
            };
            (fuse(&ets, &p, cfg.fusion)?, Some(p))
        } else {
            (ets.clone(), None)
        };
        if fused.len() != self.head.input_dim() {
            return Err(Error::dim("fused embedding", self.head.input_dim(), fused.len()));
        }
        let pred = self.head.forward_vec(&fused)[0];
        Ok((
            pred,
            ForwardCache {
                layers,
                states: cur,
                attention,
                ets,
                proj,
                fused,
            },
        ))
    }

    /// Accumulates parameter gradients for `d loss / d pred` into `grads`
    /// and returns the gradient with respect to the per-step inputs.
    pub(crate) fn backward(
        &self,
        cfg: &ModelConfig,
        cache: &ForwardCache<F>,
        geo: Option<&[F]>,
        d_pred: F,
        grads: &mut ModelParams<F>,
    ) -> Tensor2<F> {
        let h = self.hidden();
        let d_fused = self.head.backward_vec(&cache.fused, &[d_pred], &mut grads.head);
        let d_ets = match (cfg.mode, cfg.fusion, &cache.proj) {
            (GeolocationMode::Encoder, Fusion::Hadamard, Some(p)) => {
                let d_p: Vec<F> = d_fused.iter().zip(&cache.ets).map(|(&d, &e)| d * e).collect();
                if let (Some(pr), Some(gp), Some(e)) = (&self.projection, grads.projection.as_mut(), geo) {
                    pr.backward_vec(e, &d_p, gp);
                }
                d_fused.iter().zip(p).map(|(&d, &pv)| d * pv).collect()
            }
            (GeolocationMode::Encoder, Fusion::Concat, _) => {
                if let (Some(pr), Some(gp), Some(e)) = (&self.projection, grads.projection.as_mut(), geo) {
                    pr.backward_vec(e, &d_fused[2 * h..], gp);
                }
                d_fused[..2 * h].to_vec()
            }
            _ => d_fused,
        };
        let (mut d_states, d_query) =
            self.attention
                .backward(&cache.states, &cache.attention, &d_ets, &mut grads.attention);
        let last = d_states.rows() - 1;
        for k in 0..h {
            d_states[(last, k)] += d_query[k];
            d_states[(0, h + k)] += d_query[h + k];
        }
        for l in (0..self.lstm.len()).rev() {
            let lc = &cache.layers[l];
            if let Some(m) = &lc.dropout {
                d_states.data_mut().iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
            }
            let mut d_out = Tensor2::zeros(d_states.rows(), 2 * h);
            for t in 0..d_states.rows() {
                let dx = self.norms[l].backward(&lc.norms[t], d_states.row(t), &mut grads.norms[l]);
                d_out.row_mut(t).copy_from_slice(&dx);
            }
            d_states = self.lstm[l].backward_pass(&lc.lstm, &d_out, &mut grads.lstm[l]);
        }
        d_states
    }
}

/// Bi-LSTM + attention regressor with an optional location pathway.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<F> {
    pub(crate) config: ModelConfig,
    pub params: ModelParams<F>,
    pub(crate) encoder: Option<LocationEncoder<F>>,
    /// Raw-mode coordinate scaling; refitted on the training stations.
    pub(crate) coord_scaler: ScalerParams,
    pub(crate) feature_scaler: Option<ScalerParams>,
    pub(crate) target_scaler: Option<ScalerParams>,
}

/// Builds a model from `cfg`. Encoder mode requires a location encoder
/// whose width matches `cfg.embedding_dim`; the encoder is frozen.
pub fn assemble<F: Scalar>(cfg: &ModelConfig, encoder: Option<LocationEncoder<F>>) -> Result<Model<F>> {
    let mut v = cfg.violations();
    match (cfg.mode, &encoder) {
        (GeolocationMode::Encoder, None) => v.push("encoder mode needs a location encoder".into()),
        (GeolocationMode::Encoder, Some(e)) => {
            if cfg.embedding_dim.is_some_and(|d| d != e.embedding_dim()) {
                v.push(format!(
                    "embedding_dim {} does not match the encoder width {}",
                    cfg.embedding_dim.unwrap_or(0),
                    e.embedding_dim()
                ));
            }
        }
        (_, Some(_)) => v.push(format!("a location encoder was given but the mode is {}", cfg.mode)),
        (_, None) => {}
    }
    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    let encoder = encoder.map(|mut e| {
        e.freeze();
        e
    });
    Ok(Model {
        config: cfg.clone(),
        params: ModelParams::init(cfg),
        encoder,
        coord_scaler: ScalerParams {
            min: vec![CONUS_LAT.0, CONUS_LON.0],
            max: vec![CONUS_LAT.1, CONUS_LON.1],
        },
        feature_scaler: None,
        target_scaler: None,
    })
}

impl<F: Scalar> Model<F> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encoder(&self) -> Option<&LocationEncoder<F>> {
        self.encoder.as_ref()
    }

    pub fn coord_scaler(&self) -> &ScalerParams {
        &self.coord_scaler
    }

    pub fn set_coord_scaler(&mut self, s: ScalerParams) -> Result<()> {
        if s.columns() != 2 {
            return Err(Error::dim("coordinate scaler", 2, s.columns()));
        }
        self.coord_scaler = s;
        Ok(())
    }

    /// Scalers used to build the windows, kept for inverse scaling and
    /// checkpointing.
    pub fn set_scalers(&mut self, features: ScalerParams, target: ScalerParams) {
        self.feature_scaler = Some(features);
        self.target_scaler = Some(target);
    }

    pub fn feature_scaler(&self) -> Option<&ScalerParams> {
        self.feature_scaler.as_ref()
    }

    pub fn target_scaler(&self) -> Option<&ScalerParams> {
        self.target_scaler.as_ref()
    }

    /// Maps a scaled-space prediction back to target units (identity when
    /// no target scaler is attached).
    pub fn unscale(&self, y: f64) -> f64 {
        self.target_scaler.as_ref().map_or(y, |s| s.invert_value(0, y))
    }

    /// Location embedding used in encoder mode, `None` otherwise.
    pub fn embedding(&self, coord: &GeoCoord) -> Result<Option<Vec<F>>> {
        match (&self.encoder, self.config.mode) {
            (Some(e), GeolocationMode::Encoder) => Ok(Some(e.encode(coord)?)),
            _ => Ok(None),
        }
    }

    fn coord_columns(&self, coord: &GeoCoord) -> Result<Vec<f64>> {
        Ok(match self.config.mode {
            GeolocationMode::Raw => {
                coord.validate()?;
                self.coord_scaler.apply(&[coord.lat, coord.lon])?
            }
            GeolocationMode::Sinusoidal => featurize_sinusoidal(coord)?.to_vec(),
            GeolocationMode::None | GeolocationMode::Encoder => Vec::new(),
        })
    }

    /// Input tensor for `window` at `coord`, with coordinate columns
    /// appended to every step in raw and sinusoidal modes.
    pub fn prepare_with(&self, window: &SampleWindow, coord: &GeoCoord, geo: Option<Vec<F>>) -> Result<SampleInput<F>> {
        let cfg = &self.config;
        if window.len() != cfg.window || window.width() != cfg.features {
            return Err(Error::dim(
                "sample window",
                format!("{}x{}", cfg.window, cfg.features),
                format!("{}x{}", window.len(), window.width()),
            ));
        }
        let extra = self.coord_columns(coord)?;
        let w = cfg.input_width();
        let mut data = Vec::with_capacity(window.len() * w);
        for t in 0..window.len() {
            data.extend(window.features.row(t).iter().map(|&v| F::of(v)));
            data.extend(extra.iter().map(|&v| F::of(v)));
        }
        let mask = window.step_mask();
        if !mask.iter().any(|&b| b) {
            return Err(Error::Empty("sample window: no observed step"));
        }
        Ok(SampleInput {
            x: Tensor2::from_vec(window.len(), w, data)?,
            mask,
            geo,
            target: F::of(window.target),
        })
    }

    pub fn prepare(&self, window: &SampleWindow, coord: &GeoCoord) -> Result<SampleInput<F>> {
        let geo = self.embedding(coord)?;
        self.prepare_with(window, coord, geo)
    }

    /// Scaled-space estimate for one window. Dropout is off.
    pub fn forward(&self, window: &SampleWindow, coord: &GeoCoord) -> Result<f64> {
        let s = self.prepare(window, coord)?;
        Ok(self.forward_input(&s)?.f64())
    }

    pub fn forward_input(&self, s: &SampleInput<F>) -> Result<F> {
        Ok(self
            .params
            .forward(&self.config, &s.x, &s.mask, s.geo.as_deref(), None)?
            .0)
    }

    /// Time-series embedding, fused embedding and attention weights of one
    /// window.
    pub fn embeddings(&self, window: &SampleWindow, coord: &GeoCoord) -> Result<(Vec<F>, Vec<F>, Vec<F>)> {
        let s = self.prepare(window, coord)?;
        let (_, c) = self
            .params
            .forward(&self.config, &s.x, &s.mask, s.geo.as_deref(), None)?;
        Ok((
            c.time_series_embedding().to_vec(),
            c.fused().to_vec(),
            c.attention_weights().to_vec(),
        ))
    }

    /// One estimate per window; `coords[i]` is the location of `windows[i]`.
    pub fn predict(&self, windows: &[SampleWindow], coords: &[GeoCoord]) -> Result<Vec<f64>> {
        if windows.len() != coords.len() {
            return Err(Error::dim("predict coordinates", windows.len(), coords.len()));
        }
        windows.iter().zip(coords).map(|(w, c)| self.forward(w, c)).collect()
    }

    /// Predictions for windows located by station index into `stations`.
    pub fn predict_at_stations(&self, windows: &[SampleWindow], stations: &[GeoCoord]) -> Result<Vec<f64>> {
        let coords = station_coords(windows, stations)?;
        self.predict(windows, &coords)
    }

    pub(crate) fn dropout_masks(&self, rng: &mut ChaCha8Rng) -> Result<Option<Vec<Vec<F>>>> {
        let cfg = &self.config;
        if cfg.dropout == 0.0 {
            return Ok(None);
        }
        let len = cfg.window * cfg.sequence_dim();
        (0..cfg.layers)
            .map(|_| dropout_mask_from(len, cfg.dropout, rng))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Mean Huber loss of `params` over `batch`. With `dropout_seed`, masks
    /// are drawn sample by sample from that seed; otherwise dropout is off.
    /// Gradients are accumulated into `grads` when given.
    pub fn objective(
        &self,
        params: &ModelParams<F>,
        batch: &[SampleInput<F>],
        dropout_seed: Option<u64>,
        grads: Option<&mut ModelParams<F>>,
    ) -> Result<f64> {
        let refs: Vec<&SampleInput<F>> = batch.iter().collect();
        self.objective_refs(params, &refs, dropout_seed, grads)
    }

    pub(crate) fn objective_refs(
        &self,
        params: &ModelParams<F>,
        batch: &[&SampleInput<F>],
        dropout_seed: Option<u64>,
        mut grads: Option<&mut ModelParams<F>>,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("objective batch"));
        }
        let loss_cfg = LossConfig {
            huber_delta: self.config.train.huber_delta,
        };
        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let n = F::of(batch.len() as f64);
        let mut total = 0.0;
        for s in batch {
            let masks = match rng.as_mut() {
                Some(r) => self.dropout_masks(r)?,
                None => None,
            };
            let (pred, cache) = params.forward(&self.config, &s.x, &s.mask, s.geo.as_deref(), masks.as_deref())?;
            let (l, g) = huber_loss(&[pred], &[s.target], &loss_cfg)?;
            total += l.f64();
            if let Some(gr) = grads.as_deref_mut() {
                params.backward(&self.config, &cache, s.geo.as_deref(), g[0] / n, gr);
            }
        }
        Ok(total / batch.len() as f64)
    }

    /// Loss and parameter gradient of the current parameters.
    pub fn loss_and_gradient(
        &self,
        batch: &[SampleInput<F>],
        dropout_seed: Option<u64>,
    ) -> Result<(f64, ModelParams<F>)> {
        let mut g = self.params.zeroed();
        let l = self.objective(&self.params, batch, dropout_seed, Some(&mut g))?;
        Ok((l, g))
    }
}

pub(crate) fn station_coords(windows: &[SampleWindow], stations: &[GeoCoord]) -> Result<Vec<GeoCoord>> {
    windows
        .iter()
        .map(|w| {
            stations.get(w.station).copied().ok_or_else(|| {
                Error::InvalidParameter(format!("window refers to station {} of {}", w.station, stations.len()))
            })
        })
        .collect()
}
