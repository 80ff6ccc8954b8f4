use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::coord::GeoCoord;
use super::featurize::PositionalEncoding;
use crate::error::{Error, Result};
use crate::nncore::{Dense, Parameterized, Tensor2};
use crate::scalar::Scalar;

/// First line of an encoder weight file.
pub const ENCODER_FILE_HEADER: &str = "geoloc-encoder v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub positional: PositionalEncoding,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
}

impl EncoderConfig {
    /// Fourier positional encoder with a 512-dimensional embedding.
    pub fn fourier_default() -> Self {
        EncoderConfig {
            positional: PositionalEncoding::Fourier { bands: 8 },
            hidden: vec![256, 256],
            embedding_dim: 512,
        }
    }

    /// Spherical-harmonic positional encoder with a 256-dimensional embedding.
    pub fn spherical_default() -> Self {
        EncoderConfig {
            positional: PositionalEncoding::Spherical { degree: 10 },
            hidden: vec![256, 256],
            embedding_dim: 256,
        }
    }
}

/// Positional expansion followed by a ReLU MLP producing a `d`-dimensional
/// embedding. Once frozen, downstream training never touches the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct LocationEncoder<F> {
    pub positional: PositionalEncoding,
    pub layers: Vec<Dense<F>>,
    pub frozen: bool,
}

/// Per-layer inputs (post-activation) recorded by the forward pass.
#[derive(Clone, Debug)]
pub struct EncoderCache<F> {
    inputs: Vec<Vec<F>>,
}

impl<F: Scalar> LocationEncoder<F> {
    pub fn new(config: &EncoderConfig, seed: u64) -> Result<Self> {
        if config.embedding_dim == 0 {
            return Err(Error::InvalidParameter("embedding_dim must be positive".into()));
        }
        if let PositionalEncoding::Fourier { bands: 0 } = config.positional {
            return Err(Error::InvalidParameter("fourier encoder needs at least one band".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![config.positional.output_dim()];
        widths.extend(config.hidden.iter().copied());
        widths.push(config.embedding_dim);
        let layers = widths
            .windows(2)
            .map(|w| Dense::new(w[0], w[1], &mut rng))
            .collect();
        Ok(LocationEncoder {
            positional: config.positional,
            layers,
            frozen: false,
        })
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::output_dim)
    }

    pub fn config(&self) -> EncoderConfig {
        EncoderConfig {
            positional: self.positional,
            hidden: self.layers[..self.layers.len() - 1]
                .iter()
                .map(Dense::output_dim)
                .collect(),
            embedding_dim: self.embedding_dim(),
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// `e = g(φ(lat, lon))`.
    pub fn encode(&self, c: &GeoCoord) -> Result<Vec<F>> {
        Ok(self.forward_cached(c)?.0)
    }

    pub(crate) fn forward_cached(&self, c: &GeoCoord) -> Result<(Vec<F>, EncoderCache<F>)> {
        let pos: Vec<F> = self.positional.encode(c)?.into_iter().map(F::of).collect();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = pos;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = layer.forward_vec(&h);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(F::zero()));
            }
            inputs.push(h);
            h = out;
        }
        Ok((h, EncoderCache { inputs }))
    }

    /// Accumulates parameter gradients for `d_out = ∂L/∂e`.
    pub(crate) fn backward(&self, cache: &EncoderCache<F>, d_out: &[F], grads: &mut LocationEncoder<F>) {
        let mut d = d_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let input = &cache.inputs[i];
            let dx = self.layers[i].backward_vec(input, &d, &mut grads.layers[i]);
            if i > 0 {
                // ReLU mask: the stored input of layer i is the activated output of layer i-1
                d = dx
                    .into_iter()
                    .zip(input)
                    .map(|(g, &a)| if a > F::zero() { g } else { F::zero() })
                    .collect();
            }
        }
    }

    /// Embeddings for many coordinates as an `N × d` matrix.
    pub fn encode_all(&self, coords: &[GeoCoord]) -> Result<Tensor2<F>> {
        let d = self.embedding_dim();
        let mut data = Vec::with_capacity(coords.len() * d);
        for c in coords {
            data.extend(self.encode(c)?);
        }
        Tensor2::from_vec(coords.len(), d, data)
    }

    pub(crate) fn to_file(&self) -> EncoderFile {
        EncoderFile {
            positional: self.positional,
            frozen: self.frozen,
            layers: self
                .layers
                .iter()
                .enumerate()
                .flat_map(|(i, l)| {
                    [
                        ArrayRecord {
                            name: format!("layer{i}.weights"),
                            shape: [l.input_dim(), l.output_dim()],
                            data: l.weights.data().iter().map(|v| v.f64()).collect(),
                        },
                        ArrayRecord {
                            name: format!("layer{i}.bias"),
                            shape: [1, l.output_dim()],
                            data: l.bias.iter().map(|v| v.f64()).collect(),
                        },
                    ]
                })
                .collect(),
        }
    }

    pub(crate) fn from_file(file: EncoderFile) -> std::result::Result<Self, String> {
        if file.layers.len() % 2 != 0 || file.layers.is_empty() {
            return Err("layer arrays must come in weight/bias pairs".into());
        }
        let mut layers = Vec::new();
        let mut expected_in = file.positional.output_dim();
        for pair in file.layers.chunks(2) {
            let (w, b) = (&pair[0], &pair[1]);
            if w.shape[0] != expected_in || b.shape[1] != w.shape[1] {
                return Err(format!("array {} has inconsistent shape {:?}", w.name, w.shape));
            }
            let weights = Tensor2::from_vec(w.shape[0], w.shape[1], w.data.iter().map(|&v| F::of(v)).collect())
                .map_err(|e| format!("{}: {e}", w.name))?;
            let bias: Vec<F> = b.data.iter().map(|&v| F::of(v)).collect();
            layers.push(Dense::from_parts(weights, bias).map_err(|e| format!("{}: {e}", b.name))?);
            expected_in = w.shape[1];
        }
        Ok(LocationEncoder {
            positional: file.positional,
            layers,
            frozen: file.frozen,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string(&self.to_file()).map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "{ENCODER_FILE_HEADER}")
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
        if header.trim_end() != ENCODER_FILE_HEADER {
            return Err(fmt_err(format!("expected header '{ENCODER_FILE_HEADER}', found '{header}'")));
        }
        let file: EncoderFile = serde_json::from_str(body).map_err(|e| fmt_err(e.to_string()))?;
        Self::from_file(file).map_err(fmt_err)
    }
}

impl<F: Scalar> Parameterized<F> for LocationEncoder<F> {
    fn param_slices(&self) -> Vec<&[F]> {
        self.layers.iter().flat_map(|l| l.param_slices()).collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        self.layers.iter_mut().flat_map(|l| l.param_slices_mut()).collect()
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("layer{i}.weights"), format!("layer{i}.bias")])
            .collect()
    }
}

/// Named array with a `[rows, cols]` shape, as stored in weight files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct ArrayRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct EncoderFile {
    positional: PositionalEncoding,
    frozen: bool,
    layers: Vec<ArrayRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EncoderConfig {
        EncoderConfig {
            positional: PositionalEncoding::Fourier { bands: 3 },
            hidden: vec![16, 16],
            embedding_dim: 8,
        }
    }

    #[test]
    fn deterministic_and_sized() {
        let enc = LocationEncoder::<f64>::new(&small(), 5).unwrap();
        let c = GeoCoord::new(39.7, -104.9).unwrap();
        let a = enc.encode(&c).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(a, enc.encode(&c).unwrap());
        assert_eq!(enc.config(), small());
    }

    #[test]
    fn backward_matches_finite_differences() {
        use crate::nncore::{grad_check, GradCheckConfig};
        let enc = LocationEncoder::<f64>::new(&small(), 9).unwrap();
        let c = GeoCoord::new(33.3, -97.1).unwrap();
        let w: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
        let loss = |e: &LocationEncoder<f64>| {
            e.encode(&c).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, cache) = enc.forward_cached(&c).unwrap();
        let mut g = enc.zeroed();
        enc.backward(&cache, &w, &mut g);
        let r = grad_check(&enc, &g, &GradCheckConfig::default(), loss);
        assert!(r.passed(1e-4), "{r:?}");
    }

    #[test]
    fn weight_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.txt");
        let mut enc = LocationEncoder::<f64>::new(&small(), 1).unwrap();
        enc.freeze();
        enc.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(ENCODER_FILE_HEADER));
        let back = LocationEncoder::<f64>::load(&path).unwrap();
        assert_eq!(back, enc);
    }

    #[test]
    fn load_rejects_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.txt");
        std::fs::write(&path, "something else\n{}\n").unwrap();
        assert!(matches!(LocationEncoder::<f64>::load(&path), Err(Error::Format { .. })));
    }
}
