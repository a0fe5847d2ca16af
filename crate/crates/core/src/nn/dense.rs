use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::Params;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights `H_out × H_in` and bias `H_out` of a fully connected layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        DenseParams {
            weights: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform in ±1/√fan_in, bias zero.
    pub fn init(out_dim: usize, in_dim: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        DenseParams {
            weights: Matrix::from_fn(out_dim, in_dim, |_, _| rng.gen_range(-bound..bound)),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::dim("dense bias", weights.rows(), bias.len()));
        }
        Ok(DenseParams { weights, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Unchecked forward into `out`, which is overwritten.
    #[inline]
    pub(crate) fn forward_into(&self, x: &[f64], act: Activation, out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        self.weights.matvec_acc(x, out);
        if act != Activation::Linear {
            out.iter_mut().for_each(|v| *v = act.apply(*v));
        }
    }

    /// Backward through `act(Wx + b)` given the forward output `y` and upstream
    /// gradient `dy`. Accumulates into `grad` and, if given, into `dx`.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        y: &[f64],
        dy: &[f64],
        act: Activation,
        grad: &mut DenseParams,
        dx: Option<&mut [f64]>,
    ) {
        let dz: Vec<f64> = dy
            .iter()
            .zip(y)
            .map(|(&d, &yv)| d * act.derivative_from_output(yv))
            .collect();
        for (gb, d) in grad.bias.iter_mut().zip(&dz) {
            *gb += d;
        }
        grad.weights.outer_acc(&dz, x);
        if let Some(dx) = dx {
            self.weights.matvec_t_acc(&dz, dx);
        }
    }
}

impl Params for DenseParams {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(self.weights.as_slice());
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.weights.as_mut_slice());
        f(&mut self.bias);
    }
}

/// `act(W·x + b)`.
pub fn dense_forward(x: &[f64], params: &DenseParams, act: Activation) -> Result<Vec<f64>> {
    if x.len() != params.in_dim() {
        return Err(Error::dim("dense input", params.in_dim(), x.len()));
    }
    let mut out = vec![0.0; params.out_dim()];
    params.forward_into(x, act, &mut out);
    Ok(out)
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.is_empty() {
        return Err(Error::Empty("mse_loss"));
    }
    if pred.len() != target.len() {
        return Err(Error::dim("mse_loss", pred.len(), target.len()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1/(1-rate)`. A zero rate gives all ones.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut Rng) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    (0..len)
        .map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{finite_difference_grad, relative_error};
    use crate::rng::rng_from;

    #[test]
    fn zero_layer_tanh_gives_zero() {
        let p = DenseParams::zeros(3, 2);
        assert_eq!(dense_forward(&[0.7, -2.0], &p, Activation::Tanh).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn identity_linear_passes_through() {
        let p = DenseParams::new(Matrix::identity(3), vec![0.0; 3]).unwrap();
        let x = [1.5, -0.25, 4.0];
        assert_eq!(dense_forward(&x, &p, Activation::Linear).unwrap(), x.to_vec());
    }

    #[test]
    fn hand_matrix_example() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let p = DenseParams::new(w, vec![1.0, -1.0]).unwrap();
        assert_eq!(dense_forward(&[1.0, 1.0], &p, Activation::Linear).unwrap(), vec![4.0, 6.0]);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let p = DenseParams::zeros(2, 3);
        assert!(matches!(
            dense_forward(&[1.0], &p, Activation::Linear),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn mse_examples() {
        let (l, g) = mse_loss(&[2.0, 3.0], &[2.0, 3.0]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
        let (l, g) = mse_loss(&[1.0], &[0.0]).unwrap();
        assert_eq!((l, g), (1.0, vec![2.0]));
        let (l, _) = mse_loss(&[1.0, 3.0], &[0.0, 1.0]).unwrap();
        assert_eq!(l, 2.5);
        assert!(mse_loss(&[], &[]).is_err());
    }

    #[test]
    fn dense_gradient_matches_finite_differences() {
        let mut rng = rng_from(11);
        for act in [Activation::Tanh, Activation::Linear, Activation::Relu] {
            let p = DenseParams::init(4, 3, &mut rng);
            let x = [0.3, -0.8, 0.5];
            let target = [0.1, 0.2, -0.3, 0.4];
            let loss_of = |theta: &[f64]| {
                let mut q = p.clone();
                q.load_flat(theta).unwrap();
                let y = dense_forward(&x, &q, act).unwrap();
                mse_loss(&y, &target).unwrap().0
            };
            let y = dense_forward(&x, &p, act).unwrap();
            let (_, dy) = mse_loss(&y, &target).unwrap();
            let mut g = DenseParams::zeros(4, 3);
            p.backward(&x, &y, &dy, act, &mut g, None);
            let numeric = finite_difference_grad(loss_of, &p.flatten(), 1e-5);
            assert!(relative_error(&g.flatten(), &numeric) < 1e-4, "{act:?}");
        }
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let mut rng = rng_from(1);
        assert_eq!(dropout_mask(5, 0.0, &mut rng), vec![1.0; 5]);
        let m = dropout_mask(1000, 0.2, &mut rng);
        assert!(m.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
        let dropped = m.iter().filter(|&&v| v == 0.0).count();
        assert!((120..280).contains(&dropped));
    }
}
