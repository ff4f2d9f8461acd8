//! The denoising network `q(x0_hat, z_hat | x_t, t, y_e)` and its training loss.
//!
//! Layout (width `w`, default 256):
//!
//! ```text
//! x_t  --input_proj-->  h
//! t    --sinusoidal(w)--> time_fc1 --GELU--> time_fc2 --+
//! y_e  --cond_proj--------------------------------------+--> emb --GELU--> e
//! h    --[block(h, e)] x n_blocks--> head --> [x0 logits | z logits]
//! block(h, e) = h + fc2(GELU(fc1(h * (1 + scale) + shift))),  (scale, shift) = film(e)
//! ```

use ndarray::{s, Array2, ArrayView2, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{gelu_array, gelu_backward, lit, sinusoidal_embed, Linear, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub data_dim: usize,
    pub cond_dim: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_blocks")]
    pub n_blocks: usize,
}

fn default_width() -> usize {
    256
}

fn default_blocks() -> usize {
    3
}

impl DenoiserConfig {
    pub fn new(data_dim: usize, cond_dim: usize) -> Self {
        Self {
            data_dim,
            cond_dim,
            width: default_width(),
            n_blocks: default_blocks(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.data_dim == 0 || self.cond_dim == 0 || self.width == 0 || !self.width.is_multiple_of(2) {
            return Err(Error::Config(format!("invalid denoiser shape {self:?}")));
        }
        Ok(())
    }

    /// Closed-form parameter count of the architecture.
    pub fn num_params(&self) -> usize {
        let lin = |i: usize, o: usize| i * o + o;
        let w = self.width;
        lin(self.data_dim, w)
            + 2 * lin(w, w)
            + lin(self.cond_dim, w)
            + self.n_blocks * (lin(w, 2 * w) + 2 * lin(w, w))
            + lin(w, 2 * self.data_dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock<F> {
    pub film: Linear<F>,
    pub fc1: Linear<F>,
    pub fc2: Linear<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser<F> {
    pub config: DenoiserConfig,
    pub input_proj: Linear<F>,
    pub time_fc1: Linear<F>,
    pub time_fc2: Linear<F>,
    pub cond_proj: Linear<F>,
    pub blocks: Vec<ResBlock<F>>,
    pub head: Linear<F>,
}

/// Per-parameter gradients share the model's layout.
pub type Gradients<F> = Denoiser<F>;

struct BlockCache<F> {
    h_in: Array2<F>,
    scale: Array2<F>,
    u: Array2<F>,
    a: Array2<F>,
    g: Array2<F>,
}

/// Activations recorded by [`Denoiser::forward_train`]; consumed by [`Denoiser::backward`].
pub struct ForwardCache<F> {
    x: Array2<F>,
    time_feat: Array2<F>,
    a1: Array2<F>,
    g1: Array2<F>,
    cond: Array2<F>,
    emb: Array2<F>,
    e: Array2<F>,
    blocks: Vec<BlockCache<F>>,
    h_out: Array2<F>,
}

/// The two heads of one forward pass, each `(batch, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserOutput<F> {
    pub x0_logits: Array2<F>,
    pub z_logits: Array2<F>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loss_x: f64,
    pub loss_z: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(loss_x: f64, loss_z: f64) -> Self {
        Self {
            loss_x,
            loss_z,
            total: loss_x + loss_z,
        }
    }
}

impl<F: Scalar> Denoiser<F> {
    fn build(config: DenoiserConfig, mut make: impl FnMut(usize, usize) -> Linear<F>) -> Self {
        let w = config.width;
        Self {
            config,
            input_proj: make(config.data_dim, w),
            time_fc1: make(w, w),
            time_fc2: make(w, w),
            cond_proj: make(config.cond_dim, w),
            blocks: (0..config.n_blocks)
                .map(|_| ResBlock {
                    film: make(w, 2 * w),
                    fc1: make(w, w),
                    fc2: make(w, w),
                })
                .collect(),
            head: make(w, 2 * config.data_dim),
        }
    }

    pub fn new<R: Rng + ?Sized>(config: DenoiserConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        Ok(Self::build(config, |i, o| Linear::init(i, o, rng)))
    }

    pub fn zeros(config: DenoiserConfig) -> Self {
        Self::build(config, Linear::zeros)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|(_, l)| l.num_params()).sum()
    }

    /// Layers in a fixed order with their dotted path names.
    pub fn layers(&self) -> Vec<(String, &Linear<F>)> {
        let mut out = vec![
            ("input_proj".to_owned(), &self.input_proj),
            ("time_mlp.0".to_owned(), &self.time_fc1),
            ("time_mlp.1".to_owned(), &self.time_fc2),
            ("cond_proj".to_owned(), &self.cond_proj),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("blocks.{i}.film"), &b.film));
            out.push((format!("blocks.{i}.fc1"), &b.fc1));
            out.push((format!("blocks.{i}.fc2"), &b.fc2));
        }
        out.push(("head".to_owned(), &self.head));
        out
    }

    /// Same order as [`Self::layers`].
    pub fn layers_mut(&mut self) -> Vec<&mut Linear<F>> {
        let mut out = vec![
            &mut self.input_proj,
            &mut self.time_fc1,
            &mut self.time_fc2,
            &mut self.cond_proj,
        ];
        for b in &mut self.blocks {
            out.push(&mut b.film);
            out.push(&mut b.fc1);
            out.push(&mut b.fc2);
        }
        out.push(&mut self.head);
        out
    }

    /// Every parameter tensor as `(name, shape, flat values)`.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[F])> {
        self.layers()
            .into_iter()
            .flat_map(|(name, l)| {
                [
                    (
                        format!("{name}.weight"),
                        l.weight.shape().to_vec(),
                        l.weight.as_slice().expect("standard layout"),
                    ),
                    (
                        format!("{name}.bias"),
                        l.bias.shape().to_vec(),
                        l.bias.as_slice().expect("standard layout"),
                    ),
                ]
            })
            .collect()
    }

    /// Mutable flat parameter slices, same order as [`Self::named_tensors`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn param_slices(&self) -> Vec<&[F]> {
        self.named_tensors().into_iter().map(|(_, _, v)| v).collect()
    }

    pub fn cast<G: Scalar>(&self) -> Denoiser<G> {
        let conv = |l: &Linear<F>| Linear {
            weight: l.weight.mapv(|v| G::from(v).expect("cast")),
            bias: l.bias.mapv(|v| G::from(v).expect("cast")),
        };
        Denoiser {
            config: self.config,
            input_proj: conv(&self.input_proj),
            time_fc1: conv(&self.time_fc1),
            time_fc2: conv(&self.time_fc2),
            cond_proj: conv(&self.cond_proj),
            blocks: self
                .blocks
                .iter()
                .map(|b| ResBlock {
                    film: conv(&b.film),
                    fc1: conv(&b.fc1),
                    fc2: conv(&b.fc2),
                })
                .collect(),
            head: conv(&self.head),
        }
    }

    fn time_features(&self, ts: &[u32]) -> Array2<F> {
        let w = self.config.width;
        let mut out = Array2::zeros((ts.len(), w));
        for (mut row, &t) in out.outer_iter_mut().zip(ts) {
            let e = sinusoidal_embed(t, w).expect("width is even");
            for (o, v) in row.iter_mut().zip(e) {
                *o = lit(v);
            }
        }
        out
    }

    fn check_inputs(&self, x: &ArrayView2<F>, ts: &[u32], cond: &ArrayView2<F>) -> Result<()> {
        let b = x.nrows();
        if x.ncols() != self.config.data_dim {
            return Err(Error::Shape(format!(
                "x has {} columns, model expects {}",
                x.ncols(),
                self.config.data_dim
            )));
        }
        if cond.ncols() != self.config.cond_dim {
            return Err(Error::Shape(format!(
                "condition has {} columns, model expects {}",
                cond.ncols(),
                self.config.cond_dim
            )));
        }
        if ts.len() != b || cond.nrows() != b {
            return Err(Error::Shape(format!(
                "batch sizes differ: x {b}, t {}, condition {}",
                ts.len(),
                cond.nrows()
            )));
        }
        Ok(())
    }

    /// Forward pass recording activations for [`Self::backward`]. Returns
    /// `(batch, 2d)` logits: x0 head in columns `[0, d)`, z head in `[d, 2d)`.
    pub fn forward_train(
        &self,
        x: ArrayView2<F>,
        ts: &[u32],
        cond: ArrayView2<F>,
    ) -> Result<(Array2<F>, ForwardCache<F>)> {
        self.check_inputs(&x, ts, &cond)?;
        let w = self.config.width;
        let mut h = self.input_proj.forward(x);
        let time_feat = self.time_features(ts);
        let a1 = self.time_fc1.forward(time_feat.view());
        let g1 = gelu_array(&a1);
        let mut emb = self.time_fc2.forward(g1.view());
        emb += &self.cond_proj.forward(cond);
        let e = gelu_array(&emb);

        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let ss = block.film.forward(e.view());
            let scale = ss.slice(s![.., ..w]).to_owned();
            let shift = ss.slice(s![.., w..]);
            let mut u = h.clone();
            Zip::from(&mut u)
                .and(&scale)
                .and(&shift)
                .for_each(|u, &sc, &sh| *u = *u * (F::one() + sc) + sh);
            let a = block.fc1.forward(u.view());
            let g = gelu_array(&a);
            let r = block.fc2.forward(g.view());
            let h_in = h;
            h = &h_in + &r;
            caches.push(BlockCache {
                h_in,
                scale,
                u,
                a,
                g,
            });
        }
        let out = self.head.forward(h.view());
        Ok((
            out,
            ForwardCache {
                x: x.to_owned(),
                time_feat,
                a1,
                g1,
                cond: cond.to_owned(),
                emb,
                e,
                blocks: caches,
                h_out: h,
            },
        ))
    }

    pub fn forward(&self, x: ArrayView2<F>, ts: &[u32], cond: ArrayView2<F>) -> Result<DenoiserOutput<F>> {
        let (out, _) = self.forward_train(x, ts, cond)?;
        Ok(self.split_heads(out))
    }

    pub fn split_heads(&self, out: Array2<F>) -> DenoiserOutput<F> {
        let d = self.config.data_dim;
        DenoiserOutput {
            x0_logits: out.slice(s![.., ..d]).to_owned(),
            z_logits: out.slice(s![.., d..]).to_owned(),
        }
    }

    /// Reverse-mode gradients of the loss w.r.t. every parameter, given
    /// `d_out = dL/d(logits)` for the forward pass that produced `cache`.
    pub fn backward(&self, cache: &ForwardCache<F>, d_out: ArrayView2<F>) -> Gradients<F> {
        let w = self.config.width;
        let mut grad = self.zeros_like();
        let mut dh = self.head.backward(cache.h_out.view(), d_out, &mut grad.head);
        let mut de = Array2::<F>::zeros(cache.e.raw_dim());

        for ((block, bc), gb) in self
            .blocks
            .iter()
            .zip(&cache.blocks)
            .zip(grad.blocks.iter_mut())
            .rev()
        {
            let dg = block.fc2.backward(bc.g.view(), dh.view(), &mut gb.fc2);
            let da = gelu_backward(&bc.a, &dg);
            let du = block.fc1.backward(bc.u.view(), da.view(), &mut gb.fc1);
            let mut dss = Array2::<F>::zeros((du.nrows(), 2 * w));
            {
                let (mut dscale, mut dshift) = dss.multi_slice_mut((s![.., ..w], s![.., w..]));
                Zip::from(&mut dscale)
                    .and(&du)
                    .and(&bc.h_in)
                    .for_each(|o, &g, &hv| *o = g * hv);
                dshift.assign(&du);
            }
            Zip::from(&mut dh)
                .and(&du)
                .and(&bc.scale)
                .for_each(|o, &g, &sc| *o += g * (F::one() + sc));
            de += &block.film.backward(cache.e.view(), dss.view(), &mut gb.film);
        }

        let demb = gelu_backward(&cache.emb, &de);
        self.cond_proj
            .backward_params(cache.cond.view(), demb.view(), &mut grad.cond_proj);
        let dg1 = self
            .time_fc2
            .backward(cache.g1.view(), demb.view(), &mut grad.time_fc2);
        let da1 = gelu_backward(&cache.a1, &dg1);
        self.time_fc1
            .backward_params(cache.time_feat.view(), da1.view(), &mut grad.time_fc1);
        self.input_proj
            .backward_params(cache.x.view(), dh.view(), &mut grad.input_proj);
        grad
    }

    /// Forward, loss and backward in one call.
    pub fn loss_and_grad(
        &self,
        x_t: ArrayView2<F>,
        ts: &[u32],
        cond: ArrayView2<F>,
        x0: ArrayView2<F>,
        z: ArrayView2<F>,
    ) -> Result<(LossBreakdown, Gradients<F>)> {
        let (out, cache) = self.forward_train(x_t, ts, cond)?;
        let d = self.config.data_dim;
        let loss = bce_loss(out.slice(s![.., ..d]), out.slice(s![.., d..]), x0, z)?;
        let d_out = bce_loss_grad(out.view(), x0, z)?;
        Ok((loss, self.backward(&cache, d_out.view())))
    }
}

/// `max(s, 0) - s y + ln(1 + e^{-|s|})`: BCE of `sigmoid(s)` against `y`, never evaluating `ln 0`.
#[inline]
fn bce_with_logit(s: f64, y: f64) -> f64 {
    s.max(0.0) - s * y + (-s.abs()).exp().ln_1p()
}

/// Sum over dimensions, mean over the batch, for each head.
pub fn bce_loss<F: Scalar>(
    x0_logits: ArrayView2<F>,
    z_logits: ArrayView2<F>,
    x0_true: ArrayView2<F>,
    z_true: ArrayView2<F>,
) -> Result<LossBreakdown> {
    for (name, a, b) in [
        ("x0", &x0_logits, &x0_true),
        ("z", &z_logits, &z_true),
        ("heads", &x0_logits, &z_logits),
    ] {
        if a.dim() != b.dim() {
            return Err(Error::Shape(format!("{name}: {:?} vs {:?}", a.dim(), b.dim())));
        }
    }
    let batch = x0_logits.nrows().max(1) as f64;
    let head = |logits: &ArrayView2<F>, target: &ArrayView2<F>| {
        let mut sum = 0.0;
        Zip::from(logits).and(target).for_each(|&s, &y| {
            sum += bce_with_logit(s.to_f64().unwrap_or(f64::NAN), y.to_f64().unwrap_or(f64::NAN));
        });
        sum / batch
    };
    Ok(LossBreakdown::new(
        head(&x0_logits, &x0_true),
        head(&z_logits, &z_true),
    ))
}

/// Gradient of the total loss w.r.t. the concatenated `(batch, 2d)` logits.
pub fn bce_loss_grad<F: Scalar>(
    logits: ArrayView2<F>,
    x0_true: ArrayView2<F>,
    z_true: ArrayView2<F>,
) -> Result<Array2<F>> {
    let d = x0_true.ncols();
    if logits.ncols() != 2 * d || z_true.dim() != x0_true.dim() || logits.nrows() != x0_true.nrows() {
        return Err(Error::Shape(format!(
            "logits {:?} vs targets {:?}/{:?}",
            logits.dim(),
            x0_true.dim(),
            z_true.dim()
        )));
    }
    let inv_b = F::one() / lit::<F>(logits.nrows().max(1) as f64);
    let mut g = Array2::zeros(logits.raw_dim());
    for (half, target) in [(0, x0_true), (1, z_true)] {
        let mut gs = g.slice_mut(s![.., half * d..(half + 1) * d]);
        let ls = logits.slice(s![.., half * d..(half + 1) * d]);
        Zip::from(&mut gs).and(&ls).and(&target).for_each(|o, &s, &y| {
            let p = F::one() / (F::one() + (-s).exp());
            *o = (p - y) * inv_b;
        });
    }
    Ok(g)
}

/// Sum of squared gradient entries, square-rooted.
pub fn grad_norm<F: Scalar>(g: &Gradients<F>) -> f64 {
    g.param_slices()
        .iter()
        .flat_map(|s| s.iter())
        .map(|v| {
            let v = v.to_f64().unwrap_or(f64::NAN);
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// Row-stacks equal-length rows into a matrix.
pub fn stack_rows<F: Scalar, I, R>(rows: I, width: usize) -> Array2<F>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = F>,
{
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        data.extend(r);
        n += 1;
    }
    Array2::from_shape_vec((n, width), data).expect("rows have equal width")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> (Denoiser<f64>, Array2<f64>, Vec<u32>, Array2<f64>) {
        let cfg = DenoiserConfig {
            data_dim: 8,
            cond_dim: 3,
            width: 16,
            n_blocks: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Denoiser::new(cfg, &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 8), |(i, j)| ((i * 3 + j) % 2) as f64);
        let c = Array2::from_shape_fn((4, 3), |(i, j)| if i % 3 == j { 1.0 } else { 0.0 });
        (m, x, vec![0, 17, 500, 1000], c)
    }

    #[test]
    fn param_count_closed_form() {
        let (m, ..) = tiny();
        assert_eq!(m.num_params(), m.config.num_params());
        let travel = DenoiserConfig::new(70, 2);
        assert_eq!(travel.num_params(), 976_012);
    }

    #[test]
    fn output_shapes_and_determinism() {
        let (m, x, t, c) = tiny();
        let a = m.forward(x.view(), &t, c.view()).unwrap();
        let b = m.forward(x.view(), &t, c.view()).unwrap();
        assert_eq!(a.x0_logits.dim(), (4, 8));
        assert_eq!(a.z_logits.dim(), (4, 8));
        assert_eq!(a, b);
        assert!(a.x0_logits.iter().chain(a.z_logits.iter()).all(|v| v.is_finite()));
    }

    #[test]
    fn zero_model_gives_zero_logits() {
        let m = Denoiser::<f32>::zeros(DenoiserConfig::new(10, 2));
        let x = Array2::ones((3, 10));
        let c = Array2::ones((3, 2));
        let out = m.forward(x.view(), &[5, 6, 7], c.view()).unwrap();
        assert!(out.x0_logits.iter().chain(out.z_logits.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let (m, x, t, c) = tiny();
        assert!(m.forward(x.slice(s![.., ..7]), &t, c.view()).is_err());
        assert!(m.forward(x.view(), &t[..3], c.view()).is_err());
        assert!(m.forward(x.view(), &t, c.slice(s![.., ..2])).is_err());
    }

    #[test]
    fn loss_at_zero_logits() {
        let d = 5;
        let zeros = Array2::<f64>::zeros((2, d));
        let tx = Array2::from_shape_fn((2, d), |(i, j)| ((i + j) % 2) as f64);
        let tz = Array2::from_shape_fn((2, d), |(i, j)| ((i * j) % 2) as f64);
        let l = bce_loss(zeros.view(), zeros.view(), tx.view(), tz.view()).unwrap();
        let expect = d as f64 * std::f64::consts::LN_2;
        assert!((l.loss_x - expect).abs() < 1e-12);
        assert!((l.loss_z - expect).abs() < 1e-12);
        assert_eq!(l.total, l.loss_x + l.loss_z);
    }

    #[test]
    fn saturated_loss_is_tiny() {
        let d = 6;
        let tx = Array2::from_shape_fn((3, d), |(i, j)| ((i + j) % 2) as f64);
        let logits = tx.mapv(|y| if y == 1.0 { 40.0 } else { -40.0 });
        let l = bce_loss(logits.view(), logits.view(), tx.view(), tx.view()).unwrap();
        assert!(l.total < 1e-10 * d as f64);
    }

    #[test]
    fn batch_loss_is_mean_of_rows() {
        let logits = Array2::from_shape_vec((2, 2), vec![0.3, -1.2, 2.0, 0.1]).unwrap();
        let t = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let both = bce_loss(logits.view(), logits.view(), t.view(), t.view()).unwrap();
        let a = bce_loss(logits.slice(s![..1, ..]), logits.slice(s![..1, ..]), t.slice(s![..1, ..]), t.slice(s![..1, ..])).unwrap();
        let b = bce_loss(logits.slice(s![1.., ..]), logits.slice(s![1.., ..]), t.slice(s![1.., ..]), t.slice(s![1.., ..])).unwrap();
        assert!((both.total - (a.total + b.total) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let logits = Array2::from_shape_vec((1, 2), vec![1e30, -1e30]).unwrap();
        let t = Array2::from_shape_vec((1, 2), vec![0.0, 1.0]).unwrap();
        let l = bce_loss(logits.view(), logits.view(), t.view(), t.view()).unwrap();
        assert!(l.total.is_finite());
    }

    /// Central differences on the full loss, as an independent oracle.
    #[test]
    fn gradients_match_finite_differences() {
        let (m, x, t, c) = tiny();
        let x0 = x.mapv(|v| 1.0 - v);
        let z = Array2::from_shape_fn((4, 8), |(i, j)| ((i + 2 * j) % 3 == 0) as u8 as f64);
        let (_, grad) = m.loss_and_grad(x.view(), &t, c.view(), x0.view(), z.view()).unwrap();
        let loss = |mm: &Denoiser<f64>| {
            let out = mm.forward(x.view(), &t, c.view()).unwrap();
            bce_loss(out.x0_logits.view(), out.z_logits.view(), x0.view(), z.view())
                .unwrap()
                .total
        };
        let analytic: Vec<Vec<f64>> = grad.param_slices().iter().map(|s| s.to_vec()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..60 {
            let ti = rng.random_range(0..analytic.len());
            let pi = rng.random_range(0..analytic[ti].len());
            let mut plus = m.clone();
            plus.param_slices_mut()[ti][pi] += h;
            let mut minus = m.clone();
            minus.param_slices_mut()[ti][pi] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let rel = (analytic[ti][pi] - fd).abs() / (fd.abs() + 1e-8);
            assert!(rel < 1e-4, "tensor {ti} index {pi}: analytic {} fd {fd}", analytic[ti][pi]);
        }
    }

    #[test]
    fn saturated_region_has_tiny_gradient() {
        let cfg = DenoiserConfig {
            data_dim: 4,
            cond_dim: 2,
            width: 8,
            n_blocks: 1,
        };
        let mut m = Denoiser::<f64>::zeros(cfg);
        // Bias-only head pinned to the targets.
        let target = [1.0, 0.0, 1.0, 1.0];
        for j in 0..4 {
            m.head.bias[j] = if target[j] == 1.0 { 40.0 } else { -40.0 };
            m.head.bias[4 + j] = -40.0;
        }
        let x = Array2::zeros((2, 4));
        let c = Array2::zeros((2, 2));
        let x0 = Array2::from_shape_fn((2, 4), |(_, j)| target[j]);
        let z = Array2::zeros((2, 4));
        let (loss, g) = m.loss_and_grad(x.view(), &[3, 9], c.view(), x0.view(), z.view()).unwrap();
        assert!(loss.total < 1e-10);
        assert!(grad_norm(&g) < 1e-6);
    }

    #[test]
    fn named_tensors_are_stable() {
        let (m, ..) = tiny();
        let names: Vec<String> = m.named_tensors().into_iter().map(|(n, ..)| n).collect();
        assert_eq!(names.first().unwrap(), "input_proj.weight");
        assert_eq!(names.last().unwrap(), "head.bias");
        assert_eq!(names.len(), 2 * (4 + 3 * 3 + 1));
    }
}
