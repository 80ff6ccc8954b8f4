use rand::Rng;

use super::tensor::Tensor2;
use crate::scalar::Scalar;

/// A bundle of trainable arrays.
///
/// Gradients are stored in a value of the same type, so a layer and its
/// gradient expose their arrays in the same order.
pub trait Parameterized<F: Scalar> {
    fn param_slices(&self) -> Vec<&[F]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [F]>;
    fn param_names(&self) -> Vec<String>;

    fn zeroed(&self) -> Self
    where
        Self: Clone,
    {
        let mut g = self.clone();
        g.zero();
        g
    }

    fn zero(&mut self) {
        for s in self.param_slices_mut() {
            s.fill(F::zero());
        }
    }

    /// `self += other`
    fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, k: F) {
        for s in self.param_slices_mut() {
            s.iter_mut().for_each(|x| *x *= k);
        }
    }

    fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Flat copy of every parameter, in visiting order.
    fn flatten(&self) -> Vec<F> {
        self.param_slices().concat()
    }
}

/// Uniform in `±1/sqrt(fan_in)`.
pub fn uniform_init<F: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    fan_in: usize,
) -> Tensor2<F> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| F::of(rng.random_range(-bound..=bound)))
        .collect();
    Tensor2::from_vec(rows, cols, data).expect("finite init")
}

pub fn uniform_vec<F: Scalar, R: Rng + ?Sized>(rng: &mut R, len: usize, fan_in: usize) -> Vec<F> {
    uniform_init(rng, 1, len, fan_in).into_vec()
}
