//! Central finite-difference verification of analytic gradients.

use super::params::Parameterized;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Denominator floor for the relative error, so that entries whose
    /// gradient is numerically zero are compared absolutely.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            abs_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Entry attaining `max_rel_error`.
    pub worst: Option<String>,
    pub checked: usize,
    /// Entries whose analytic or numerical gradient was not finite.
    pub non_finite: Vec<String>,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.non_finite.is_empty() && self.max_rel_error < tolerance
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self.non_finite.extend(other.non_finite);
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against central differences of `loss` around `values`.
///
/// `values` is restored before returning.
pub fn check_slice(
    name: &str,
    values: &mut [f64],
    analytic: &[f64],
    cfg: &GradCheckConfig,
    loss: &mut dyn FnMut(&[f64]) -> f64,
) -> GradCheckReport {
    let mut report = GradCheckReport::default();
    for k in 0..values.len() {
        let orig = values[k];
        values[k] = orig + cfg.step;
        let up = loss(values);
        values[k] = orig - cfg.step;
        let down = loss(values);
        values[k] = orig;
        let numeric = (up - down) / (2.0 * cfg.step);
        report.checked += 1;
        if !numeric.is_finite() || !analytic[k].is_finite() {
            report.non_finite.push(format!("{name}[{k}]"));
            continue;
        }
        let err = relative_error(analytic[k], numeric, cfg.abs_floor);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some(format!("{name}[{k}] analytic={:e} numeric={numeric:e}", analytic[k]));
        }
    }
    report
}

/// Checks every parameter array of `module`.
///
/// `loss` evaluates the scalar objective at a parameter setting; `analytic`
/// holds the gradient computed by the module's backward pass, in the same
/// layout as `module`.
pub fn grad_check<P>(
    module: &P,
    analytic: &P,
    cfg: &GradCheckConfig,
    loss: impl Fn(&P) -> f64,
) -> GradCheckReport
where
    P: Parameterized<f64> + Clone,
{
    let names = module.param_names();
    let grads: Vec<Vec<f64>> = analytic.param_slices().iter().map(|s| s.to_vec()).collect();
    let mut probe = module.clone();
    let mut report = GradCheckReport::default();
    for (idx, name) in names.iter().enumerate() {
        let len = probe.param_slices()[idx].len();
        let mut values = probe.param_slices()[idx].to_vec();
        let mut eval = |v: &[f64]| {
            probe.param_slices_mut()[idx].copy_from_slice(v);
            let l = loss(&probe);
            l
        };
        let r = check_slice(name, &mut values[..len], &grads[idx], cfg, &mut eval);
        probe.param_slices_mut()[idx].copy_from_slice(&values);
        report.merge(r);
    }
    report
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nncore::{Dense, Tensor2};

    #[test]
    fn dense_layer_random_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let layer = Dense::<f64>::new(4, 3, &mut rng);
        let x = Tensor2::from_vec(3, 4, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        // loss = sum(y²)/2, dL/dy = y
        let loss = |l: &Dense<f64>| l.forward(&x).unwrap().data().iter().map(|v| 0.5 * v * v).sum::<f64>();
        let y = layer.forward(&x).unwrap();
        let mut g = layer.zeroed();
        let dx = layer.backward(&x, &y, &mut g).unwrap();
        let report = grad_check(&layer, &g, &GradCheckConfig::default(), loss);
        assert!(report.passed(1e-6), "{report:?}");

        let mut xv = x.data().to_vec();
        let mut f = |v: &[f64]| {
            let xi = Tensor2::from_vec(3, 4, v.to_vec()).unwrap();
            layer.forward(&xi).unwrap().data().iter().map(|v| 0.5 * v * v).sum::<f64>()
        };
        let r = check_slice("x", &mut xv, dx.data(), &GradCheckConfig::default(), &mut f);
        assert!(r.passed(1e-6), "{r:?}");
    }

    #[test]
    fn non_finite_gradient_is_named() {
        let layer = Dense::<f64>::from_parts(Tensor2::zeros(1, 1), vec![0.0]).unwrap();
        let mut bad = layer.zeroed();
        bad.bias[0] = f64::NAN;
        let report = grad_check(&layer, &bad, &GradCheckConfig::default(), |l| l.bias[0]);
        assert!(!report.passed(1.0));
        assert_eq!(report.non_finite, vec!["bias[0]".to_string()]);
    }
}
