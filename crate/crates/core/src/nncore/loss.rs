use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub huber_delta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { huber_delta: 1.0 }
    }
}

/// Mean Huber loss and its gradient with respect to `pred`.
pub fn huber_loss<F: Scalar>(pred: &[F], target: &[F], cfg: &LossConfig) -> Result<(F, Vec<F>)> {
    if pred.is_empty() {
        return Err(Error::Empty("huber_loss input"));
    }
    if pred.len() != target.len() {
        return Err(Error::dim("huber_loss", pred.len(), target.len()));
    }
    if !(cfg.huber_delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "huber delta must be > 0, got {}",
            cfg.huber_delta
        )));
    }
    let delta = F::of(cfg.huber_delta);
    let n = F::of(pred.len() as f64);
    let mut total = F::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target) {
        let e = p - t;
        if e.abs() <= delta {
            total += F::half() * e * e;
            grad.push(e / n);
        } else {
            total += delta * (e.abs() - F::half() * delta);
            grad.push(delta * e.signum() / n);
        }
    }
    Ok((total / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: LossConfig = LossConfig { huber_delta: 1.0 };

    #[test]
    fn zero_residual() {
        let (l, g) = huber_loss(&[1.0f64, 2.0], &[1.0, 2.0], &CFG).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn quadratic_branch() {
        let (l, g) = huber_loss(&[0.5f64], &[0.0], &CFG).unwrap();
        assert!((l - 0.125).abs() < 1e-15);
        assert!((g[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn linear_branch() {
        let (l, g) = huber_loss(&[2.0f64], &[0.0], &CFG).unwrap();
        assert!((l - 1.5).abs() < 1e-15);
        assert_eq!(g[0], 1.0);
        let (_, g) = huber_loss(&[-2.0f64], &[0.0], &CFG).unwrap();
        assert_eq!(g[0], -1.0);
    }

    #[test]
    fn errors() {
        assert!(huber_loss::<f64>(&[], &[], &CFG).is_err());
        assert!(huber_loss(&[1.0], &[1.0, 2.0], &CFG).is_err());
        assert!(huber_loss(&[1.0], &[1.0], &LossConfig { huber_delta: 0.0 }).is_err());
    }
}
