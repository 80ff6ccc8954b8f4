//! Layer normalization and inverted dropout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::Parameterized;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm<F> {
    pub gamma: Vec<F>,
    pub beta: Vec<F>,
    pub eps: F,
}

#[derive(Clone, Debug)]
pub struct LayerNormCache<F> {
    normalized: Vec<F>,
    inv_std: F,
}

impl<F: Scalar> LayerNorm<F> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: vec![F::one(); dim],
            beta: vec![F::zero(); dim],
            eps: F::of(1e-5),
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &[F]) -> (Vec<F>, LayerNormCache<F>) {
        let n = F::of(x.len() as f64);
        let mean = x.iter().copied().sum::<F>() / n;
        let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
        let inv_std = F::one() / (var + self.eps).sqrt();
        let normalized: Vec<F> = x.iter().map(|&v| (v - mean) * inv_std).collect();
        let y = normalized
            .iter()
            .zip(self.gamma.iter().zip(&self.beta))
            .map(|(&z, (&g, &b))| z * g + b)
            .collect();
        (y, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache<F>, dy: &[F], grads: &mut LayerNorm<F>) -> Vec<F> {
        let n = F::of(dy.len() as f64);
        let z = &cache.normalized;
        let dz: Vec<F> = dy.iter().zip(&self.gamma).map(|(&d, &g)| d * g).collect();
        for k in 0..dy.len() {
            grads.gamma[k] += dy[k] * z[k];
            grads.beta[k] += dy[k];
        }
        let mean_dz = dz.iter().copied().sum::<F>() / n;
        let mean_dz_z = dz.iter().zip(z).map(|(&a, &b)| a * b).sum::<F>() / n;
        dz.iter()
            .zip(z)
            .map(|(&d, &zk)| cache.inv_std * (d - mean_dz - zk * mean_dz_z))
            .collect()
    }
}

impl<F: Scalar> Parameterized<F> for LayerNorm<F> {
    fn param_slices(&self) -> Vec<&[F]> {
        vec![&self.gamma, &self.beta]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn param_names(&self) -> Vec<String> {
        vec!["gamma".into(), "beta".into()]
    }
}

/// `(x − mean)/sqrt(var + eps)·gamma + beta`, population variance.
pub fn layer_norm<F: Scalar>(x: &[F], gamma: &[F], beta: &[F], eps: F) -> Result<Vec<F>> {
    if gamma.len() != x.len() || beta.len() != x.len() {
        return Err(Error::dim(
            "layer_norm",
            x.len(),
            format!("gamma {}, beta {}", gamma.len(), beta.len()),
        ));
    }
    if !(eps > F::zero()) {
        return Err(Error::InvalidParameter(format!("layer_norm eps must be > 0, got {eps}")));
    }
    if x.is_empty() {
        return Err(Error::Empty("layer_norm input"));
    }
    let ln = LayerNorm {
        gamma: gamma.to_vec(),
        beta: beta.to_vec(),
        eps,
    };
    Ok(ln.forward(x).0)
}

pub(crate) fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidParameter(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Inverted-dropout mask drawn from `rng`: each entry is `0` or `1/(1−rate)`.
pub fn dropout_mask_from<F: Scalar, R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Result<Vec<F>> {
    check_dropout_rate(rate)?;
    if rate == 0.0 {
        return Ok(vec![F::one(); len]);
    }
    let keep = F::of(1.0 / (1.0 - rate));
    Ok((0..len)
        .map(|_| if rng.random::<f64>() < rate { F::zero() } else { keep })
        .collect())
}

/// Seeded dropout mask. In evaluation mode (`training == false`) the mask is
/// all ones.
pub fn dropout_mask<F: Scalar>(len: usize, rate: f64, seed: u64, training: bool) -> Result<Vec<F>> {
    check_dropout_rate(rate)?;
    if !training {
        return Ok(vec![F::one(); len]);
    }
    dropout_mask_from(len, rate, &mut ChaCha8Rng::seed_from_u64(seed))
}
