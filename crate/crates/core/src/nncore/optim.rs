use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment accumulators, one per parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<F> {
    pub first_moment: Vec<Vec<F>>,
    pub second_moment: Vec<Vec<F>>,
    pub step: u64,
    pub config: AdamConfig,
}

impl<F: Scalar> OptimizerState<F> {
    pub fn new(shapes: &[usize], config: AdamConfig) -> Self {
        OptimizerState {
            first_moment: shapes.iter().map(|&n| vec![F::zero(); n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![F::zero(); n]).collect(),
            step: 0,
            config,
        }
    }

    /// State shaped after the arrays of `params`.
    pub fn for_params(params: &[&[F]], config: AdamConfig) -> Self {
        let shapes: Vec<usize> = params.iter().map(|p| p.len()).collect();
        Self::new(&shapes, config)
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step<F: Scalar>(
    params: &mut [&mut [F]],
    grads: &[&[F]],
    state: &mut OptimizerState<F>,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::InvalidParameter(format!("learning rate must be > 0, got {lr}")));
    }
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::dim(
            "adam_step arrays",
            state.first_moment.len(),
            format!("params {}, grads {}", params.len(), grads.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.first_moment[i].len() {
            return Err(Error::dim(
                "adam_step array length",
                state.first_moment[i].len(),
                format!("param {} has {} values, grad {}", i, p.len(), g.len()),
            ));
        }
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let b1 = F::of(c.beta1);
    let b2 = F::of(c.beta2);
    let one = F::one();
    let corr1 = one - F::of(c.beta1.powi(t));
    let corr2 = one - F::of(c.beta2.powi(t));
    let eps = F::of(c.eps);
    let lr = F::of(lr);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        for k in 0..p.len() {
            let gk = g[k];
            m[k] = b1 * m[k] + (one - b1) * gk;
            v[k] = b2 * v[k] + (one - b2) * gk * gk;
            let m_hat = m[k] / corr1;
            let v_hat = v[k] / corr2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Step-wise exponential decay: `initial · decay^floor(step / interval)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay: f64,
    pub interval: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            initial: 1e-3,
            decay: 0.8,
            interval: 30_000,
        }
    }
}

impl LrSchedule {
    pub fn lr_at_step(&self, step: u64) -> f64 {
        let k = step / self.interval.max(1);
        self.initial * self.decay.powi(k as i32)
    }
}

pub fn lr_at_step(step: u64) -> f64 {
    LrSchedule::default().lr_at_step(step)
}
