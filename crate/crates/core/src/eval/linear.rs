use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::features::{Predictions, Standardizer, Targets};
use crate::error::{Error, Result};

/// L2-regularized logistic regression (`C = 1`, intercept unpenalized) for
/// classification, ordinary least squares for regression. Continuous columns
/// are standardized with training statistics before fitting.
#[derive(Debug, Clone)]
pub struct LinearModel {
    scaler: Standardizer,
    kind: Fitted,
}

#[derive(Debug, Clone)]
enum Fitted {
    /// Only one class present in training data.
    Constant(usize),
    /// Two classes: one logit column. More: one column per class.
    Logistic { weight: Array2<f64>, bias: Array1<f64> },
    Ols { weight: Array1<f64>, bias: f64 },
}

pub const LOGISTIC_C: f64 = 1.0;
const GRAD_TOL: f64 = 1e-4;
const REL_F_TOL: f64 = 64.0 * f64::EPSILON;

impl LinearModel {
    pub fn fit(x: &Array2<f64>, targets: &Targets, continuous: &[bool], max_iter: usize) -> Result<Self> {
        if x.nrows() == 0 || x.nrows() != targets.len() {
            return Err(Error::Length {
                expected: x.nrows(),
                got: targets.len(),
            });
        }
        let scaler = Standardizer::fit(x, continuous);
        let xs = scaler.transform(x);
        let kind = match targets {
            Targets::Classes { y, n_classes } => fit_logistic(&xs, y, *n_classes, max_iter),
            Targets::Values(v) => fit_ols(&xs, v)?,
        };
        Ok(Self { scaler, kind })
    }

    pub fn predict(&self, x: &Array2<f64>) -> Predictions {
        let xs = self.scaler.transform(x);
        match &self.kind {
            Fitted::Constant(c) => Predictions::Classes(vec![*c; x.nrows()]),
            Fitted::Logistic { weight, bias } => {
                let z = xs.dot(weight) + bias;
                let classes = if z.ncols() == 1 {
                    z.column(0).iter().map(|&v| usize::from(v > 0.0)).collect()
                } else {
                    z.axis_iter(Axis(0)).map(argmax).collect()
                };
                Predictions::Classes(classes)
            }
            Fitted::Ols { weight, bias } => Predictions::Values((xs.dot(weight) + *bias).to_vec()),
        }
    }
}

pub(crate) fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn fit_logistic(x: &Array2<f64>, y: &[usize], n_classes: usize, max_iter: usize) -> Fitted {
    let mut present: Vec<usize> = y.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() == 1 {
        return Fitted::Constant(present[0]);
    }
    let (n, p) = x.dim();
    let m = if n_classes == 2 { 1 } else { n_classes };
    let mut onehot = Array2::<f64>::zeros((n, m));
    for (i, &c) in y.iter().enumerate() {
        if m == 1 {
            onehot[[i, 0]] = c as f64;
        } else {
            onehot[[i, c]] = 1.0;
        }
    }
    let unpack = |theta: &[f64]| {
        let w = Array2::from_shape_vec((p, m), theta[..p * m].to_vec()).expect("shape");
        let b = Array1::from(theta[p * m..].to_vec());
        (w, b)
    };
    let objective = |theta: &[f64]| -> (f64, Vec<f64>) {
        let (w, b) = unpack(theta);
        let z = x.dot(&w) + &b;
        let mut loss = 0.0;
        let mut resid = Array2::<f64>::zeros((n, m));
        if m == 1 {
            for i in 0..n {
                let zi = z[[i, 0]];
                let yi = onehot[[i, 0]];
                // log(1 + e^z) - y z, computed stably
                loss += zi.max(0.0) + (-zi.abs()).exp().ln_1p() - yi * zi;
                resid[[i, 0]] = 1.0 / (1.0 + (-zi).exp()) - yi;
            }
        } else {
            for i in 0..n {
                let row = z.row(i);
                let mx = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
                let lse = mx + row.iter().map(|&v| (v - mx).exp()).sum::<f64>().ln();
                for k in 0..m {
                    let pk = (row[k] - lse).exp();
                    resid[[i, k]] = pk - onehot[[i, k]];
                    if onehot[[i, k]] > 0.0 {
                        loss += lse - row[k];
                    }
                }
            }
        }
        loss += 0.5 / LOGISTIC_C * w.iter().map(|v| v * v).sum::<f64>();
        let gw = x.t().dot(&resid) + &w / LOGISTIC_C;
        let gb = resid.sum_axis(Axis(0));
        let mut grad = gw.into_raw_vec_and_offset().0;
        grad.extend(gb.iter());
        (loss, grad)
    };
    let theta = lbfgs(objective, vec![0.0; p * m + m], max_iter);
    let (weight, bias) = unpack(&theta);
    Fitted::Logistic { weight, bias }
}

fn fit_ols(x: &Array2<f64>, y: &[f64]) -> Result<Fitted> {
    let (n, p) = x.dim();
    let design = DMatrix::from_fn(n, p + 1, |i, j| if j < p { x[[i, j]] } else { 1.0 });
    let rhs = DVector::from_column_slice(y);
    let sol = design
        .svd(true, true)
        .solve(&rhs, 1e-10)
        .map_err(|e| Error::Dataset(format!("least squares failed: {e}")))?;
    Ok(Fitted::Ols {
        weight: Array1::from_iter(sol.iter().take(p).copied()),
        bias: sol[p],
    })
}

/// Limited-memory BFGS with backtracking (Armijo) line search.
pub(crate) fn lbfgs<F>(f: F, x0: Vec<f64>, max_iter: usize) -> Vec<f64>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    const MEMORY: usize = 10;
    const MAX_LS: usize = 50;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut hist: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    for iter in 0..max_iter {
        if g.iter().fold(0.0f64, |a, v| a.max(v.abs())) <= GRAD_TOL {
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = match hist.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / dot(&g, &g).sqrt().max(1.0),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }
        let mut step = if iter == 0 && hist.is_empty() { gamma } else { 1.0 };
        let mut accepted = None;
        for _ in 0..MAX_LS {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (fc, gc) = f(&cand);
            if fc.is_finite() && fc <= fx + 1e-4 * step * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else { break };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if hist.len() == MEMORY {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        let rel = (fx - fn_) / fx.abs().max(fn_.abs()).max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        if rel <= REL_F_TOL {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn accuracy(p: &Predictions, y: &[usize]) -> f64 {
        let Predictions::Classes(p) = p else { panic!() };
        p.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
    }

    #[test]
    fn lbfgs_minimizes_quadratic() {
        let f = |x: &[f64]| {
            let v = (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2);
            (v, vec![2.0 * (x[0] - 3.0), 20.0 * (x[1] + 1.0)])
        };
        let x = lbfgs(f, vec![0.0, 0.0], 100);
        assert!((x[0] - 3.0).abs() < 1e-4 && (x[1] + 1.0).abs() < 1e-4, "{x:?}");
    }

    #[test]
    fn separable_toy_is_fit_perfectly() {
        let x = array![[0.0, 0.0], [0.2, 0.1], [0.1, 0.3], [2.0, 2.0], [2.2, 1.9], [1.8, 2.4]];
        let y = vec![0, 0, 0, 1, 1, 1];
        let t = Targets::Classes { y: y.clone(), n_classes: 2 };
        let m = LinearModel::fit(&x, &t, &[true, true], 100).unwrap();
        assert_eq!(accuracy(&m.predict(&x), &y), 1.0);
    }

    #[test]
    fn multinomial_three_blobs() {
        let x = array![[0.0, 0.0], [0.1, 0.0], [5.0, 0.0], [5.1, 0.2], [0.0, 5.0], [0.2, 5.1]];
        let y = vec![0, 0, 1, 1, 2, 2];
        let t = Targets::Classes { y: y.clone(), n_classes: 3 };
        let m = LinearModel::fit(&x, &t, &[true, true], 200).unwrap();
        assert_eq!(accuracy(&m.predict(&x), &y), 1.0);
    }

    #[test]
    fn binary_matches_closed_form_stationarity() {
        // At the optimum the penalized gradient vanishes: X^T(p - y) + w = 0, sum(p - y) = 0.
        let x = array![[0.0], [1.0], [2.0], [3.0], [1.5], [2.5]];
        let y = vec![0, 0, 1, 1, 1, 0];
        let t = Targets::Classes { y: y.clone(), n_classes: 2 };
        let m = LinearModel::fit(&x, &t, &[false], 1000).unwrap();
        let Fitted::Logistic { weight, bias } = &m.kind else { panic!() };
        let (w, b) = (weight[[0, 0]], bias[0]);
        let (mut gw, mut gb) = (w, 0.0);
        for (i, &yi) in y.iter().enumerate() {
            let p = 1.0 / (1.0 + (-(w * x[[i, 0]] + b)).exp());
            gw += (p - yi as f64) * x[[i, 0]];
            gb += p - yi as f64;
        }
        assert!(gw.abs() < 1e-4 && gb.abs() < 1e-4, "{gw} {gb}");
    }

    #[test]
    fn single_class_is_constant() {
        let x = array![[1.0], [2.0]];
        let t = Targets::Classes { y: vec![1, 1], n_classes: 3 };
        let m = LinearModel::fit(&x, &t, &[true], 10).unwrap();
        assert_eq!(m.predict(&array![[9.0]]), Predictions::Classes(vec![1]));
    }

    #[test]
    fn ols_recovers_exact_line() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [2.0, 1.0], [3.0, 0.0], [4.0, 1.0]];
        let y: Vec<f64> = (0..5).map(|i| 2.0 * x[[i, 0]] - 3.0 * x[[i, 1]] + 0.5).collect();
        let m = LinearModel::fit(&x, &Targets::Values(y.clone()), &[true, false], 0).unwrap();
        let Predictions::Values(p) = m.predict(&x) else { panic!() };
        for (a, b) in p.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
