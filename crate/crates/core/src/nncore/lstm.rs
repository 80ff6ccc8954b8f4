//! LSTM cell and bidirectional sequence layer with explicit backward passes.
//!
//! Gate pre-activations are laid out in blocks of `hidden_dim` in the order
//! input, forget, output, candidate.

use rand::Rng;

use super::params::{uniform_init, uniform_vec, Parameterized};
use super::tensor::{mat_vec_acc, outer_acc, vecmat_into, Tensor2};
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell<F> {
    /// `input_dim × 4·hidden_dim`
    pub input_weights: Tensor2<F>,
    /// `hidden_dim × 4·hidden_dim`
    pub recurrent_weights: Tensor2<F>,
    /// `4·hidden_dim`
    pub bias: Vec<F>,
}

/// Values saved by one forward step for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmStepCache<F> {
    x: Vec<F>,
    h_prev: Vec<F>,
    c_prev: Vec<F>,
    /// Activated gates `[i | f | o | g]`.
    gates: Vec<F>,
    tanh_c: Vec<F>,
}

impl<F: Scalar> LstmCell<F> {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let fan_in = input_dim + hidden_dim;
        LstmCell {
            input_weights: uniform_init(rng, input_dim, 4 * hidden_dim, fan_in),
            recurrent_weights: uniform_init(rng, hidden_dim, 4 * hidden_dim, fan_in),
            bias: uniform_vec(rng, 4 * hidden_dim, fan_in),
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmCell {
            input_weights: Tensor2::zeros(input_dim, 4 * hidden_dim),
            recurrent_weights: Tensor2::zeros(hidden_dim, 4 * hidden_dim),
            bias: vec![F::zero(); 4 * hidden_dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.recurrent_weights.rows()
    }

    fn check(&self, x: &[F], h_prev: &[F], c_prev: &[F]) -> Result<()> {
        let h = self.hidden_dim();
        if self.input_weights.cols() != 4 * h
            || self.recurrent_weights.cols() != 4 * h
            || self.bias.len() != 4 * h
        {
            return Err(Error::dim(
                "LstmCell parameters",
                format!("gate width {}", 4 * h),
                format!(
                    "input {}, recurrent {}, bias {}",
                    self.input_weights.cols(),
                    self.recurrent_weights.cols(),
                    self.bias.len()
                ),
            ));
        }
        if x.len() != self.input_dim() {
            return Err(Error::dim("LstmCell input", self.input_dim(), x.len()));
        }
        if h_prev.len() != h || c_prev.len() != h {
            return Err(Error::dim(
                "LstmCell state",
                h,
                format!("h {}, c {}", h_prev.len(), c_prev.len()),
            ));
        }
        Ok(())
    }

    pub fn step(&self, x: &[F], h_prev: &[F], c_prev: &[F]) -> Result<(Vec<F>, Vec<F>)> {
        self.check(x, h_prev, c_prev)?;
        let (h, c, _) = self.step_cached(x, h_prev, c_prev);
        Ok((h, c))
    }

    /// Unchecked forward step returning `(h, c, cache)`.
    pub(crate) fn step_cached(
        &self,
        x: &[F],
        h_prev: &[F],
        c_prev: &[F],
    ) -> (Vec<F>, Vec<F>, LstmStepCache<F>) {
        let hd = self.hidden_dim();
        let mut z = self.bias.clone();
        vecmat_into(x, &self.input_weights, &mut z);
        vecmat_into(h_prev, &self.recurrent_weights, &mut z);
        for v in &mut z[..3 * hd] {
            *v = sigmoid(*v);
        }
        for v in &mut z[3 * hd..] {
            *v = v.tanh();
        }
        let mut c = vec![F::zero(); hd];
        let mut h = vec![F::zero(); hd];
        let mut tanh_c = vec![F::zero(); hd];
        for k in 0..hd {
            let (i, f, o, g) = (z[k], z[hd + k], z[2 * hd + k], z[3 * hd + k]);
            c[k] = f * c_prev[k] + i * g;
            tanh_c[k] = c[k].tanh();
            h[k] = o * tanh_c[k];
        }
        let cache = LstmStepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates: z,
            tanh_c,
        };
        (h, c, cache)
    }

    /// Backward through one step. `dh`/`dc` are the gradients arriving at this
    /// step's outputs; returns `(dx, dh_prev, dc_prev)`.
    pub(crate) fn step_backward(
        &self,
        cache: &LstmStepCache<F>,
        dh: &[F],
        dc: &[F],
        grads: &mut LstmCell<F>,
    ) -> (Vec<F>, Vec<F>, Vec<F>) {
        let hd = self.hidden_dim();
        let one = F::one();
        let z = &cache.gates;
        let mut dz = vec![F::zero(); 4 * hd];
        let mut dc_prev = vec![F::zero(); hd];
        for k in 0..hd {
            let (i, f, o, g) = (z[k], z[hd + k], z[2 * hd + k], z[3 * hd + k]);
            let tc = cache.tanh_c[k];
            let d_o = dh[k] * tc;
            let dct = dc[k] + dh[k] * o * (one - tc * tc);
            dz[k] = dct * g * i * (one - i);
            dz[hd + k] = dct * cache.c_prev[k] * f * (one - f);
            dz[2 * hd + k] = d_o * o * (one - o);
            dz[3 * hd + k] = dct * i * (one - g * g);
            dc_prev[k] = dct * f;
        }
        outer_acc(&cache.x, &dz, &mut grads.input_weights);
        outer_acc(&cache.h_prev, &dz, &mut grads.recurrent_weights);
        for (b, &d) in grads.bias.iter_mut().zip(&dz) {
            *b += d;
        }
        let mut dx = vec![F::zero(); cache.x.len()];
        mat_vec_acc(&self.input_weights, &dz, &mut dx);
        let mut dh_prev = vec![F::zero(); hd];
        mat_vec_acc(&self.recurrent_weights, &dz, &mut dh_prev);
        (dx, dh_prev, dc_prev)
    }
}

impl<F: Scalar> Parameterized<F> for LstmCell<F> {
    fn param_slices(&self) -> Vec<&[F]> {
        vec![self.input_weights.data(), self.recurrent_weights.data(), &self.bias]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        vec![
            self.input_weights.data_mut(),
            self.recurrent_weights.data_mut(),
            &mut self.bias,
        ]
    }

    fn param_names(&self) -> Vec<String> {
        vec!["input_weights".into(), "recurrent_weights".into(), "bias".into()]
    }
}

/// One LSTM step from `(h_prev, c_prev)`; returns `(h, c)`.
pub fn lstm_cell_forward<F: Scalar>(
    x: &[F],
    h_prev: &[F],
    c_prev: &[F],
    params: &LstmCell<F>,
) -> Result<(Vec<F>, Vec<F>)> {
    params.step(x, h_prev, c_prev)
}

/// Bidirectional LSTM over a `T × input_dim` sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstm<F> {
    pub forward: LstmCell<F>,
    pub backward: LstmCell<F>,
}

/// Forward-pass record for [`BiLstm::backward_pass`].
#[derive(Clone, Debug)]
pub struct BiLstmCache<F> {
    steps: usize,
    fwd: Vec<Option<LstmStepCache<F>>>,
    bwd: Vec<Option<LstmStepCache<F>>>,
}

impl<F: Scalar> BiLstm<F> {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        BiLstm {
            forward: LstmCell::new(input_dim, hidden_dim, rng),
            backward: LstmCell::new(input_dim, hidden_dim, rng),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.forward.hidden_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    /// Runs both directions. Steps whose `step_mask` entry is `false` are
    /// skipped: the recurrent state is carried over unchanged and emitted as
    /// that step's output.
    pub fn forward_pass(
        &self,
        seq: &Tensor2<F>,
        step_mask: Option<&[bool]>,
    ) -> Result<(Tensor2<F>, BiLstmCache<F>)> {
        let t_len = seq.rows();
        if t_len == 0 {
            return Err(Error::Empty("bilstm sequence"));
        }
        if seq.cols() != self.input_dim() || self.backward.input_dim() != self.input_dim() {
            return Err(Error::dim("bilstm input width", self.input_dim(), seq.cols()));
        }
        let hd = self.hidden_dim();
        if self.backward.hidden_dim() != hd {
            return Err(Error::dim("bilstm backward hidden", hd, self.backward.hidden_dim()));
        }
        if let Some(m) = step_mask {
            if m.len() != t_len {
                return Err(Error::dim("bilstm step mask", t_len, m.len()));
            }
        }
        // validates gate shapes once
        let zero = vec![F::zero(); hd];
        self.forward.check(seq.row(0), &zero, &zero)?;
        self.backward.check(seq.row(0), &zero, &zero)?;

        let active = |t: usize| step_mask.map_or(true, |m| m[t]);
        let mut out = Tensor2::zeros(t_len, 2 * hd);
        let mut fwd = Vec::with_capacity(t_len);
        let (mut h, mut c) = (zero.clone(), zero.clone());
        for t in 0..t_len {
            if active(t) {
                let (h2, c2, cache) = self.forward.step_cached(seq.row(t), &h, &c);
                h = h2;
                c = c2;
                fwd.push(Some(cache));
            } else {
                fwd.push(None);
            }
            out.row_mut(t)[..hd].copy_from_slice(&h);
        }
        let mut bwd: Vec<Option<LstmStepCache<F>>> = vec![None; t_len];
        let (mut h, mut c) = (zero.clone(), zero);
        for t in (0..t_len).rev() {
            if active(t) {
                let (h2, c2, cache) = self.backward.step_cached(seq.row(t), &h, &c);
                h = h2;
                c = c2;
                bwd[t] = Some(cache);
            }
            out.row_mut(t)[hd..].copy_from_slice(&h);
        }
        Ok((out, BiLstmCache { steps: t_len, fwd, bwd }))
    }

    /// Backpropagates `grad_out` (`T × 2·hidden_dim`) and returns the
    /// gradient with respect to the input sequence.
    pub fn backward_pass(
        &self,
        cache: &BiLstmCache<F>,
        grad_out: &Tensor2<F>,
        grads: &mut BiLstm<F>,
    ) -> Tensor2<F> {
        let hd = self.hidden_dim();
        let t_len = cache.steps;
        let mut dseq = Tensor2::zeros(t_len, self.input_dim());

        let mut dh = vec![F::zero(); hd];
        let mut dc = vec![F::zero(); hd];
        for t in (0..t_len).rev() {
            for (a, &b) in dh.iter_mut().zip(&grad_out.row(t)[..hd]) {
                *a += b;
            }
            if let Some(step) = &cache.fwd[t] {
                let (dx, dhp, dcp) = self.forward.step_backward(step, &dh, &dc, &mut grads.forward);
                for (a, &b) in dseq.row_mut(t).iter_mut().zip(&dx) {
                    *a += b;
                }
                dh = dhp;
                dc = dcp;
            }
        }

        let mut dh = vec![F::zero(); hd];
        let mut dc = vec![F::zero(); hd];
        for t in 0..t_len {
            for (a, &b) in dh.iter_mut().zip(&grad_out.row(t)[hd..]) {
                *a += b;
            }
            if let Some(step) = &cache.bwd[t] {
                let (dx, dhp, dcp) = self.backward.step_backward(step, &dh, &dc, &mut grads.backward);
                for (a, &b) in dseq.row_mut(t).iter_mut().zip(&dx) {
                    *a += b;
                }
                dh = dhp;
                dc = dcp;
            }
        }
        dseq
    }
}

impl<F: Scalar> Parameterized<F> for BiLstm<F> {
    fn param_slices(&self) -> Vec<&[F]> {
        let mut v = self.forward.param_slices();
        v.extend(self.backward.param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut v = self.forward.param_slices_mut();
        v.extend(self.backward.param_slices_mut());
        v
    }

    fn param_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.forward.param_names().into_iter().map(|n| format!("fwd.{n}")).collect();
        v.extend(self.backward.param_names().into_iter().map(|n| format!("bwd.{n}")));
        v
    }
}

/// Bidirectional pass without masking; row `t` is `[h_fwd(t), h_bwd(t)]`.
pub fn bilstm_forward<F: Scalar>(
    seq: &Tensor2<F>,
    fwd: &LstmCell<F>,
    bwd: &LstmCell<F>,
) -> Result<Tensor2<F>> {
    let layer = BiLstm {
        forward: fwd.clone(),
        backward: bwd.clone(),
    };
    Ok(layer.forward_pass(seq, None)?.0)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Scalar reference: gate-by-gate with explicit loops, no shared helpers.
    fn scalar_reference(cell: &LstmCell<f64>, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hd = h.len();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let pre = |gate: usize, k: usize| {
            let col = gate * hd + k;
            let mut s = cell.bias[col];
            for (j, xj) in x.iter().enumerate() {
                s += xj * cell.input_weights[(j, col)];
            }
            for (j, hj) in h.iter().enumerate() {
                s += hj * cell.recurrent_weights[(j, col)];
            }
            s
        };
        let mut h_new = vec![0.0; hd];
        let mut c_new = vec![0.0; hd];
        for k in 0..hd {
            let i = sig(pre(0, k));
            let f = sig(pre(1, k));
            let o = sig(pre(2, k));
            let g = pre(3, k).tanh();
            c_new[k] = f * c[k] + i * g;
            h_new[k] = o * c_new[k].tanh();
        }
        (h_new, c_new)
    }

    #[test]
    fn zero_params_halve_the_cell_state() {
        let cell = LstmCell::<f64>::zeros(3, 2);
        let c = [0.8, -1.4];
        let (h, c2) = lstm_cell_forward(&[0.3, -0.2, 0.9], &[0.1, 0.2], &c, &cell).unwrap();
        for k in 0..2 {
            assert!((c2[k] - 0.5 * c[k]).abs() < 1e-15);
            assert!((h[k] - 0.5 * (0.5 * c[k]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn origin_is_a_fixed_point() {
        let cell = LstmCell::<f64>::zeros(2, 3);
        let (h, c) = cell.step(&[0.0; 2], &[0.0; 3], &[0.0; 3]).unwrap();
        assert!(h.iter().chain(&c).all(|&v| v == 0.0));
    }

    #[test]
    fn matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let cell = LstmCell::<f64>::new(4, 3, &mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (h1, c1) = cell.step(&x, &h, &c).unwrap();
            let (h2, c2) = scalar_reference(&cell, &x, &h, &c);
            for k in 0..3 {
                assert!((h1[k] - h2[k]).abs() < 1e-10);
                assert!((c1[k] - c2[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let cell = LstmCell::<f64>::zeros(2, 3);
        assert!(cell.step(&[0.0; 3], &[0.0; 3], &[0.0; 3]).is_err());
        assert!(cell.step(&[0.0; 2], &[0.0; 2], &[0.0; 3]).is_err());
    }

    #[test]
    fn single_step_sequence_equals_cell_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = LstmCell::<f64>::new(3, 2, &mut rng);
        let b = LstmCell::<f64>::new(3, 2, &mut rng);
        let seq = Tensor2::from_rows(&[vec![0.2, -0.4, 0.7]]).unwrap();
        let out = bilstm_forward(&seq, &f, &b).unwrap();
        let (hf, _) = f.step(seq.row(0), &[0.0; 2], &[0.0; 2]).unwrap();
        let (hb, _) = b.step(seq.row(0), &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(&out.row(0)[..2], hf.as_slice());
        assert_eq!(&out.row(0)[2..], hb.as_slice());
    }

    #[test]
    fn palindrome_with_shared_params_mirrors_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cell = LstmCell::<f64>::new(2, 3, &mut rng);
        let rows = [
            vec![0.1, 0.5],
            vec![-0.3, 0.2],
            vec![0.9, -0.7],
            vec![-0.3, 0.2],
            vec![0.1, 0.5],
        ];
        let seq = Tensor2::from_rows(&rows).unwrap();
        let out = bilstm_forward(&seq, &cell, &cell).unwrap();
        let t_len = rows.len();
        for t in 0..t_len {
            let fwd = &out.row(t)[..3];
            let bwd = &out.row(t_len - 1 - t)[3..];
            for k in 0..3 {
                assert!((fwd[k] - bwd[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn output_shape_and_empty_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = BiLstm::<f64>::new(5, 8, &mut rng);
        let seq = Tensor2::zeros(21, 5);
        let (out, _) = layer.forward_pass(&seq, None).unwrap();
        assert_eq!(out.shape(), (21, 16));
        assert!(matches!(
            layer.forward_pass(&Tensor2::zeros(0, 5), None),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn masked_steps_carry_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layer = BiLstm::<f64>::new(2, 3, &mut rng);
        let seq = Tensor2::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![0.4, -0.1], vec![0.3, 0.8]]).unwrap();
        let mask = [false, false, true, true];
        let (out, _) = layer.forward_pass(&seq, Some(&mask)).unwrap();
        // forward half before the first active step is the zero initial state
        assert!(out.row(0)[..3].iter().all(|&v| v == 0.0));
        // backward half at the padded steps carries the state from step 2
        assert_eq!(&out.row(0)[3..], &out.row(2)[3..]);
        assert_eq!(&out.row(1)[3..], &out.row(2)[3..]);
        let trimmed = Tensor2::from_rows(&[vec![0.4, -0.1], vec![0.3, 0.8]]).unwrap();
        let (out2, _) = layer.forward_pass(&trimmed, None).unwrap();
        assert_eq!(out.row(3), out2.row(1));
    }
}
