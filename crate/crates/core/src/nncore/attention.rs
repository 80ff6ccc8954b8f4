use rand::Rng;

use super::params::{uniform_init, Parameterized};
use super::tensor::{axpy, dot, mat_vec_acc, outer_acc, vecmat_into, Tensor2};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Luong attention with the bilinear ("general") score
/// `score_t = queryᵀ · A · state_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Attention<F> {
    pub score: Tensor2<F>,
}

#[derive(Clone, Debug)]
pub struct AttentionCache<F> {
    query: Vec<F>,
    /// `queryᵀ · A`
    projected: Vec<F>,
    weights: Vec<F>,
}

impl<F: Scalar> AttentionCache<F> {
    pub fn weights(&self) -> &[F] {
        &self.weights
    }
}

impl<F: Scalar> Attention<F> {
    pub fn new<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Attention {
            score: uniform_init(rng, dim, dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.score.rows()
    }

    /// Returns `(context, weights, cache)`. Steps with a `false` mask entry
    /// get zero weight.
    pub fn forward(
        &self,
        states: &Tensor2<F>,
        query: &[F],
        step_mask: Option<&[bool]>,
    ) -> Result<(Vec<F>, AttentionCache<F>)> {
        let d = self.dim();
        if self.score.cols() != d {
            return Err(Error::dim("attention score matrix", format!("{d}x{d}"), format!("{}x{}", d, self.score.cols())));
        }
        if states.rows() == 0 {
            return Err(Error::Empty("attention states"));
        }
        if states.cols() != d || query.len() != d {
            return Err(Error::dim(
                "attention",
                d,
                format!("states width {}, query {}", states.cols(), query.len()),
            ));
        }
        let active = |t: usize| step_mask.map_or(true, |m| m[t]);
        if let Some(m) = step_mask {
            if m.len() != states.rows() {
                return Err(Error::dim("attention step mask", states.rows(), m.len()));
            }
            if !m.iter().any(|&b| b) {
                return Err(Error::Empty("attention: every step masked"));
            }
        }

        let mut projected = vec![F::zero(); d];
        vecmat_into(query, &self.score, &mut projected);
        let scores: Vec<Option<F>> = (0..states.rows())
            .map(|t| active(t).then(|| dot(&projected, states.row(t))))
            .collect();
        let weights = softmax_masked(&scores);

        let mut context = vec![F::zero(); d];
        for (t, &w) in weights.iter().enumerate() {
            if w != F::zero() {
                axpy(w, states.row(t), &mut context);
            }
        }
        Ok((
            context,
            AttentionCache {
                query: query.to_vec(),
                projected,
                weights,
            },
        ))
    }

    /// Returns `(d states, d query)` and accumulates into `grads.score`.
    pub fn backward(
        &self,
        states: &Tensor2<F>,
        cache: &AttentionCache<F>,
        d_context: &[F],
        grads: &mut Attention<F>,
    ) -> (Tensor2<F>, Vec<F>) {
        let d = self.dim();
        let w = &cache.weights;
        let mut d_states = Tensor2::zeros(states.rows(), d);
        // d weight_t = d_context · state_t
        let dw: Vec<F> = (0..states.rows()).map(|t| dot(d_context, states.row(t))).collect();
        let mean: F = w.iter().zip(&dw).map(|(&a, &b)| a * b).sum();
        let mut d_projected = vec![F::zero(); d];
        for t in 0..states.rows() {
            if w[t] == F::zero() {
                continue;
            }
            let d_score = w[t] * (dw[t] - mean);
            let row = d_states.row_mut(t);
            axpy(w[t], d_context, row);
            axpy(d_score, &cache.projected, row);
            axpy(d_score, states.row(t), &mut d_projected);
        }
        outer_acc(&cache.query, &d_projected, &mut grads.score);
        let mut d_query = vec![F::zero(); d];
        mat_vec_acc(&self.score, &d_projected, &mut d_query);
        (d_states, d_query)
    }
}

impl<F: Scalar> Parameterized<F> for Attention<F> {
    fn param_slices(&self) -> Vec<&[F]> {
        vec![self.score.data()]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        vec![self.score.data_mut()]
    }

    fn param_names(&self) -> Vec<String> {
        vec!["score".into()]
    }
}

/// Softmax over the present entries; absent entries get weight zero.
fn softmax_masked<F: Scalar>(scores: &[Option<F>]) -> Vec<F> {
    let max = scores
        .iter()
        .flatten()
        .fold(F::neg_infinity(), |m, &s| if s > m { s } else { m });
    let exps: Vec<F> = scores
        .iter()
        .map(|s| s.map_or(F::zero(), |v| (v - max).exp()))
        .collect();
    let total: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Luong attention over all steps; returns `(context, weights)`.
pub fn luong_attention<F: Scalar>(
    states: &Tensor2<F>,
    query: &[F],
    params: &Attention<F>,
) -> Result<(Vec<F>, Vec<F>)> {
    let (ctx, cache) = params.forward(states, query, None)?;
    Ok((ctx, cache.weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_gets_all_weight() {
        let a = Attention { score: Tensor2::<f64>::identity(2) };
        let s = Tensor2::from_rows(&[vec![0.3, -0.7]]).unwrap();
        let (ctx, w) = luong_attention(&s, &[1.0, 2.0], &a).unwrap();
        assert_eq!(w, vec![1.0]);
        assert_eq!(ctx, vec![0.3, -0.7]);
    }

    #[test]
    fn identical_states_split_evenly() {
        let a = Attention { score: Tensor2::<f64>::identity(2) };
        let s = Tensor2::from_rows(&[vec![0.5, 0.1], vec![0.5, 0.1]]).unwrap();
        let (_, w) = luong_attention(&s, &[1.0, -3.0], &a).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn log_spaced_scores_give_one_two_four() {
        // with A = I and query = [1], scores equal the state values
        let a = Attention { score: Tensor2::<f64>::identity(1) };
        let ln2 = 2f64.ln();
        let s = Tensor2::from_rows(&[vec![0.0], vec![ln2], vec![2.0 * ln2]]).unwrap();
        let (_, w) = luong_attention(&s, &[1.0], &a).unwrap();
        let expected = [1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0];
        for (x, e) in w.iter().zip(expected) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_step_gets_zero_weight() {
        let a = Attention { score: Tensor2::<f64>::identity(1) };
        let s = Tensor2::from_rows(&[vec![5.0], vec![1.0], vec![1.0]]).unwrap();
        let (ctx, cache) = a.forward(&s, &[1.0], Some(&[false, true, true])).unwrap();
        assert_eq!(cache.weights()[0], 0.0);
        assert!((ctx[0] - 1.0).abs() < 1e-15);
        assert!(a.forward(&s, &[1.0], Some(&[false; 3])).is_err());
    }

    #[test]
    fn empty_states_error() {
        let a = Attention { score: Tensor2::<f64>::identity(2) };
        assert!(luong_attention(&Tensor2::zeros(0, 2), &[0.0, 0.0], &a).is_err());
    }
}
