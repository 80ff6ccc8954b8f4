use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::{assemble, Model};
use crate::error::{Error, Result};
use crate::geoenc::{ArrayRecord, EncoderFile, LocationEncoder};
use crate::nncore::Parameterized;
use crate::scalar::Scalar;
use crate::spatialdata::ScalerParams;

/// First line of a model checkpoint.
pub const CHECKPOINT_HEADER: &str = "geoloc-checkpoint v1";

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    config: ModelConfig,
    coord_scaler: ScalerParams,
    feature_scaler: Option<ScalerParams>,
    target_scaler: Option<ScalerParams>,
    encoder: Option<EncoderFile>,
    arrays: Vec<ArrayRecord>,
}

impl<F: Scalar> Model<F> {
    /// Writes the config, scalers, frozen encoder and every trainable array
    /// with its shape.
    pub fn save(&self, path: &Path) -> Result<()> {
        let arrays = self
            .params
            .param_names()
            .into_iter()
            .zip(self.params.shapes())
            .zip(self.params.param_slices())
            .map(|((name, shape), data)| ArrayRecord {
                name,
                shape,
                data: data.iter().map(|v| v.f64()).collect(),
            })
            .collect();
        let file = CheckpointFile {
            config: self.config.clone(),
            coord_scaler: self.coord_scaler.clone(),
            feature_scaler: self.feature_scaler.clone(),
            target_scaler: self.target_scaler.clone(),
            encoder: self.encoder.as_ref().map(|e| e.to_file()),
            arrays,
        };
        let body = serde_json::to_string(&file).map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "{CHECKPOINT_HEADER}")
            .and_then(|_| writeln!(f, "{body}"))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let fmt_err = |message: String| Error::Format {
            path: path.display().to_string(),
            message,
        };
        let (header, body) = text.split_once('\n').unwrap_or((text.as_str(), ""));
        if header.trim_end() != CHECKPOINT_HEADER {
            return Err(fmt_err(format!("expected header '{CHECKPOINT_HEADER}', found '{header}'")));
        }
        let file: CheckpointFile = serde_json::from_str(body).map_err(|e| fmt_err(e.to_string()))?;
        let encoder = file.encoder.map(LocationEncoder::from_file).transpose().map_err(&fmt_err)?;
        let mut model = assemble(&file.config, encoder).map_err(|e| fmt_err(e.to_string()))?;
        let names = model.params.param_names();
        let shapes = model.params.shapes();
        if file.arrays.len() != names.len() {
            return Err(fmt_err(format!("expected {} arrays, found {}", names.len(), file.arrays.len())));
        }
        for (i, slot) in model.params.param_slices_mut().into_iter().enumerate() {
            let rec = &file.arrays[i];
            if rec.name != names[i] || rec.shape != shapes[i] || rec.data.len() != slot.len() {
                return Err(fmt_err(format!(
                    "array {} ({:?}) does not match {} ({:?})",
                    rec.name, rec.shape, names[i], shapes[i]
                )));
            }
            for (s, &v) in slot.iter_mut().zip(&rec.data) {
                *s = F::of(v);
            }
        }
        model.set_coord_scaler(file.coord_scaler).map_err(|e| fmt_err(e.to_string()))?;
        model.feature_scaler = file.feature_scaler;
        model.target_scaler = file.target_scaler;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geoenc::{EncoderConfig, PositionalEncoding};
    use crate::model::{Fusion, GeolocationMode};

    #[test]
    fn round_trip_is_exact() {
        let enc = LocationEncoder::<f64>::new(
            &EncoderConfig {
                positional: PositionalEncoding::Spherical { degree: 3 },
                hidden: vec![7],
                embedding_dim: 5,
            },
            4,
        )
        .unwrap();
        let mut c = ModelConfig::new(GeolocationMode::Encoder, 4);
        c.fusion = Fusion::Concat;
        c.concat_projection = true;
        c.embedding_dim = Some(5);
        c.hidden = 3;
        let mut m = assemble(&c, Some(enc)).unwrap();
        m.set_scalers(
            ScalerParams {
                min: vec![0.1; 4],
                max: vec![1.7; 4],
            },
            ScalerParams {
                min: vec![2.0],
                max: vec![31.0],
            },
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        m.save(&p).unwrap();
        let back = Model::<f64>::load(&p).unwrap();
        assert_eq!(back, m);
        let p2 = dir.path().join("m2.ckpt");
        back.save(&p2).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn bad_files_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ckpt");
        fs::write(&p, "something else\n{}").unwrap();
        let err = Model::<f64>::load(&p).unwrap_err().to_string();
        assert!(err.contains("bad.ckpt"), "{err}");
        assert!(Model::<f64>::load(&dir.path().join("missing")).is_err());
    }
}
