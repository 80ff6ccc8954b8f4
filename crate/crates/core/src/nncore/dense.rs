use rand::Rng;

use super::params::{uniform_init, uniform_vec, Parameterized};
use super::tensor::{mat_vec_acc, outer_acc, vecmat_into, Tensor2};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fully connected layer `y = x·W + b`, with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<F> {
    pub weights: Tensor2<F>,
    pub bias: Vec<F>,
}

impl<F: Scalar> Dense<F> {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        Dense {
            weights: uniform_init(rng, input_dim, output_dim, input_dim),
            bias: uniform_vec(rng, output_dim, input_dim),
        }
    }

    pub fn from_parts(weights: Tensor2<F>, bias: Vec<F>) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::dim(
                "Dense bias",
                format!("{} (weights {}x{})", weights.cols(), weights.rows(), weights.cols()),
                bias.len(),
            ));
        }
        Ok(Dense { weights, bias })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn forward(&self, x: &Tensor2<F>) -> Result<Tensor2<F>> {
        dense_forward(x, &self.weights, &self.bias)
    }

    pub fn forward_vec(&self, x: &[F]) -> Vec<F> {
        let mut out = self.bias.clone();
        vecmat_into(x, &self.weights, &mut out);
        out
    }

    /// Accumulates parameter gradients into `grads` and returns `∂L/∂x`.
    pub fn backward_vec(&self, x: &[F], grad_out: &[F], grads: &mut Dense<F>) -> Vec<F> {
        outer_acc(x, grad_out, &mut grads.weights);
        for (b, &g) in grads.bias.iter_mut().zip(grad_out) {
            *b += g;
        }
        let mut dx = vec![F::zero(); x.len()];
        mat_vec_acc(&self.weights, grad_out, &mut dx);
        dx
    }

    pub fn backward(
        &self,
        x: &Tensor2<F>,
        grad_out: &Tensor2<F>,
        grads: &mut Dense<F>,
    ) -> Result<Tensor2<F>> {
        if grad_out.shape() != (x.rows(), self.output_dim()) {
            return Err(Error::dim(
                "Dense::backward",
                format!("{}x{}", x.rows(), self.output_dim()),
                format!("{}x{}", grad_out.rows(), grad_out.cols()),
            ));
        }
        let mut dx = Tensor2::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            let d = self.backward_vec(x.row(i), grad_out.row(i), grads);
            dx.row_mut(i).copy_from_slice(&d);
        }
        Ok(dx)
    }
}

impl<F: Scalar> Parameterized<F> for Dense<F> {
    fn param_slices(&self) -> Vec<&[F]> {
        vec![self.weights.data(), &self.bias]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        vec![self.weights.data_mut(), &mut self.bias]
    }

    fn param_names(&self) -> Vec<String> {
        vec!["weights".into(), "bias".into()]
    }
}

/// `x·W + b` for every row of `x`.
pub fn dense_forward<F: Scalar>(x: &Tensor2<F>, weights: &Tensor2<F>, bias: &[F]) -> Result<Tensor2<F>> {
    if x.cols() != weights.rows() || bias.len() != weights.cols() {
        return Err(Error::dim(
            "dense_forward",
            format!("x: _x{} with weights {}x{}", weights.rows(), weights.rows(), weights.cols()),
            format!(
                "x: {}x{}, weights: {}x{}, bias: {}",
                x.rows(),
                x.cols(),
                weights.rows(),
                weights.cols(),
                bias.len()
            ),
        ));
    }
    let mut out = Tensor2::zeros(x.rows(), weights.cols());
    for i in 0..x.rows() {
        let o = out.row_mut(i);
        o.copy_from_slice(bias);
        vecmat_into(x.row(i), weights, o);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_through() {
        let x = Tensor2::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let y = dense_forward(&x, &Tensor2::identity(2), &[0.0, 0.0]).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn bias_is_added() {
        let x = Tensor2::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let w = Tensor2::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let y = dense_forward(&x, &w, &[3.0, 4.0]).unwrap();
        assert_eq!(y.data(), &[4.0, 5.0]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let x = Tensor2::<f64>::zeros(1, 3);
        let err = dense_forward(&x, &Tensor2::identity(2), &[0.0, 0.0]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("1x3"), "{msg}");
        assert!(msg.contains("2x2"), "{msg}");
    }

    #[test]
    fn weight_gradient_of_sum_is_outer_product() {
        // d(sum(xW+b))/dW[k][j] = sum_i x[i][k]
        let x = Tensor2::from_rows(&[vec![0.5, -1.0, 2.0], vec![1.5, 0.25, -0.5]]).unwrap();
        let layer = Dense::from_parts(Tensor2::<f64>::zeros(3, 2), vec![0.0; 2]).unwrap();
        let mut g = layer.zeroed();
        let ones = Tensor2::from_vec(2, 2, vec![1.0; 4]).unwrap();
        layer.backward(&x, &ones, &mut g).unwrap();
        for k in 0..3 {
            let col_sum = x[(0, k)] + x[(1, k)];
            for j in 0..2 {
                assert!((g.weights[(k, j)] - col_sum).abs() < 1e-15);
            }
        }
        assert_eq!(g.bias, vec![2.0, 2.0]);
    }
}
