//! Dense layers, activations and embeddings with explicit backward passes.

use std::fmt::Debug;
use std::ops::{AddAssign, SubAssign};

use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::Float;
use rand::Rng;

/// Floating point element usable by the network (f32 for training, f64 for gradient checks).
pub trait Scalar:
    LinalgScalar + Float + ScalarOperand + AddAssign + SubAssign + Debug + Default + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: LinalgScalar + Float + ScalarOperand + AddAssign + SubAssign + Debug + Default + Send + Sync + 'static
{
}

#[inline]
pub(crate) fn lit<F: Scalar>(v: f64) -> F {
    F::from(v).expect("literal representable")
}

/// Affine layer `y = x W + b` with `W` stored as `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Linear<F> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero bias.
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || {
            lit(rng.random_range(-bound..=bound))
        });
        Self {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<F>, dy: ArrayView2<F>, grad: &mut Linear<F>) -> Array2<F> {
        self.backward_params(x, dy, grad);
        dy.dot(&self.weight.t())
    }

    pub fn backward_params(&self, x: ArrayView2<F>, dy: ArrayView2<F>, grad: &mut Linear<F>) {
        ndarray::linalg::general_mat_mul(F::one(), &x.t(), &dy, F::one(), &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh form.
#[inline]
pub fn gelu<F: Scalar>(x: F) -> F {
    let half = lit::<F>(0.5);
    let u = lit::<F>(GELU_C) * (x + lit::<F>(GELU_A) * x * x * x);
    half * x * (F::one() + u.tanh())
}

#[inline]
pub fn gelu_grad<F: Scalar>(x: F) -> F {
    let half = lit::<F>(0.5);
    let c = lit::<F>(GELU_C);
    let a = lit::<F>(GELU_A);
    let th = (c * (x + a * x * x * x)).tanh();
    half * (F::one() + th) + half * x * (F::one() - th * th) * c * (F::one() + lit::<F>(3.0) * a * x * x)
}

pub fn gelu_array<F: Scalar>(x: &Array2<F>) -> Array2<F> {
    x.mapv(gelu)
}

/// `dy * gelu'(x)`, elementwise.
pub fn gelu_backward<F: Scalar>(x: &Array2<F>, dy: &Array2<F>) -> Array2<F> {
    let mut out = dy.clone();
    Zip::from(&mut out).and(x).for_each(|g, &xv| *g = *g * gelu_grad(xv));
    out
}

/// Transformer-style sinusoidal embedding: interleaved
/// `(sin(t w_k), cos(t w_k))` pairs with `w_k = 10000^(-2k/dim)`.
pub fn sinusoidal_embed(t: u32, dim: usize) -> crate::Result<Vec<f64>> {
    if !dim.is_multiple_of(2) {
        return Err(crate::Error::Shape(format!(
            "sinusoidal embedding needs an even dimension, got {dim}"
        )));
    }
    let t = f64::from(t);
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let freq = 10000f64.powf(-((2 * k) as f64) / dim as f64);
        out.push((t * freq).sin());
        out.push((t * freq).cos());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_at_zero() {
        let e = sinusoidal_embed(0, 8).unwrap();
        for k in 0..4 {
            assert_eq!(e[2 * k], 0.0);
            assert_eq!(e[2 * k + 1], 1.0);
        }
    }

    #[test]
    fn embedding_first_pair_and_norm() {
        let e = sinusoidal_embed(1, 16).unwrap();
        assert_eq!((e[0], e[1]), (1f64.sin(), 1f64.cos()));
        for t in [0, 3, 999, 1000] {
            let e = sinusoidal_embed(t, 256).unwrap();
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= 16.0 + 1e-9);
        }
        assert!(sinusoidal_embed(1, 7).is_err());
    }

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &x in &[-4.0, -1.3, -0.2, 0.0, 0.4, 1.1, 3.7] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((gelu_grad(x) - fd).abs() < 1e-8, "{x}");
        }
        assert_eq!(gelu(0.0f64), 0.0);
    }

    #[test]
    fn linear_backward_shapes() {
        let mut rng = rand::rng();
        let l = Linear::<f64>::init(3, 5, &mut rng);
        let x = Array2::from_elem((4, 3), 0.5);
        let y = l.forward(x.view());
        assert_eq!(y.dim(), (4, 5));
        let mut g = Linear::zeros(3, 5);
        let dx = l.backward(x.view(), Array2::ones((4, 5)).view(), &mut g);
        assert_eq!(dx.dim(), (4, 3));
        assert_eq!(g.bias, Array1::from_elem(5, 4.0));
        assert_eq!(g.weight, Array2::from_elem((3, 5), 2.0));
    }
}
