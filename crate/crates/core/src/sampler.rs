//! Few-step sampling: denoise, binarize, renoise, with classifier-free guidance.

use ndarray::{Array2, ArrayView2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::codec::{decode_row, encode_condition, null_condition, BinaryRow, Condition};
use crate::denoiser::{Denoiser, DenoiserOutput};
use crate::error::{Error, Result};
use crate::noise::{bernoulli_bits, NoiseSchedule};
use crate::schema::{LabeledRecord, Value};

/// How the clean estimate is formed at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerVariant {
    /// Use the binarized x0 head directly.
    #[default]
    Denoised,
    /// Experimental: `x0 = x_t XOR binarize(z head)`.
    NoiseHead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub n_steps: usize,
    pub guidance_scale: f64,
    pub threshold: f64,
    pub use_ema: bool,
    pub seed: u64,
    /// Rows pushed through the network together; does not affect results.
    pub batch_size: usize,
    pub variant: SamplerVariant,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n_steps: 5,
            guidance_scale: 5.0,
            threshold: 0.5,
            use_ema: true,
            seed: 0,
            batch_size: 512,
            variant: SamplerVariant::Denoised,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config("threshold must lie in (0, 1)".into()));
        }
        if !(self.guidance_scale >= 0.0) {
            return Err(Error::Config("guidance_scale must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// `n_steps` evenly spaced timesteps from `T` down to 0 (`[0]` for a single step).
pub fn select_timesteps(timesteps: u32, n_steps: usize) -> Result<Vec<u32>> {
    if n_steps == 0 || n_steps as u64 > u64::from(timesteps) + 1 {
        return Err(Error::Config(format!(
            "n_steps {n_steps} outside 1..={}",
            u64::from(timesteps) + 1
        )));
    }
    if n_steps == 1 {
        return Ok(vec![0]);
    }
    let last = (n_steps - 1) as f64;
    Ok((0..n_steps)
        .rev()
        .map(|k| (k as f64 * f64::from(timesteps) / last).round() as u32)
        .collect())
}

/// `uncond + w (cond - uncond)`.
pub fn guided_logits(cond: &Array2<f32>, uncond: &Array2<f32>, w: f64) -> Result<Array2<f32>> {
    if cond.dim() != uncond.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", cond.dim(), uncond.dim())));
    }
    if w == 1.0 {
        return Ok(cond.clone());
    }
    if w == 0.0 {
        return Ok(uncond.clone());
    }
    let w = w as f32;
    let mut out = uncond.clone();
    Zip::from(&mut out).and(cond).for_each(|u, &c| *u += w * (c - *u));
    Ok(out)
}

/// Anything that predicts the two heads for a batch.
pub trait DenoiseModel {
    fn data_dim(&self) -> usize;
    fn cond_dim(&self) -> usize;
    fn predict(&self, x_t: ArrayView2<f32>, ts: &[u32], cond: ArrayView2<f32>) -> Result<DenoiserOutput<f32>>;
}

impl DenoiseModel for Denoiser<f32> {
    fn data_dim(&self) -> usize {
        self.config.data_dim
    }

    fn cond_dim(&self) -> usize {
        self.config.cond_dim
    }

    fn predict(&self, x_t: ArrayView2<f32>, ts: &[u32], cond: ArrayView2<f32>) -> Result<DenoiserOutput<f32>> {
        self.forward(x_t, ts, cond)
    }
}

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

#[inline]
fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

/// Runs the sampling loop for one row per condition. Row `i` draws all of
/// its randomness from stream `i` of the seeded generator, so results do not
/// depend on batching.
pub fn sample_bits<M: DenoiseModel + ?Sized>(
    model: &M,
    conditions: &[Condition],
    null: &Condition,
    schedule: &NoiseSchedule,
    config: &SampleConfig,
) -> Result<Vec<BinaryRow>> {
    config.validate()?;
    let d = model.data_dim();
    let c_dim = model.cond_dim();
    if null.0.len() != c_dim {
        return Err(Error::Length {
            expected: c_dim,
            got: null.0.len(),
        });
    }
    let steps = select_timesteps(schedule.timesteps, config.n_steps)?;
    let flip: Vec<f64> = steps
        .iter()
        .map(|&t| schedule.flip_probability(t))
        .collect::<Result<_>>()?;
    let threshold = config.threshold as f32;
    let two_pass = config.guidance_scale != 1.0;

    let mut out = Vec::with_capacity(conditions.len());
    for (chunk_idx, chunk) in conditions.chunks(config.batch_size).enumerate() {
        let base = chunk_idx * config.batch_size;
        let b = chunk.len();
        let mut rngs: Vec<ChaCha8Rng> = (0..b).map(|i| row_rng(config.seed, base + i)).collect();
        let mut cond = Array2::<f32>::zeros((b, c_dim));
        for (mut row, c) in cond.outer_iter_mut().zip(chunk) {
            if c.0.len() != c_dim {
                return Err(Error::Length {
                    expected: c_dim,
                    got: c.0.len(),
                });
            }
            row.assign(&ArrayView2::from_shape((1, c_dim), &c.0).expect("shape").row(0));
        }
        let uncond = Array2::from_shape_fn((b, c_dim), |(_, j)| null.0[j]);

        let mut x: Vec<Vec<bool>> = rngs.iter_mut().map(|r| bernoulli_bits(d, 0.5, r)).collect();
        for (&t, &p) in steps.iter().zip(&flip) {
            let x_t = Array2::from_shape_fn((b, d), |(i, j)| if x[i][j] { 1.0 } else { 0.0 });
            let ts = vec![t; b];
            let cond_out = model.predict(x_t.view(), &ts, cond.view())?;
            let guided = if two_pass {
                let un_out = model.predict(x_t.view(), &ts, uncond.view())?;
                match config.variant {
                    SamplerVariant::Denoised => {
                        guided_logits(&cond_out.x0_logits, &un_out.x0_logits, config.guidance_scale)?
                    }
                    SamplerVariant::NoiseHead => {
                        guided_logits(&cond_out.z_logits, &un_out.z_logits, config.guidance_scale)?
                    }
                }
            } else {
                match config.variant {
                    SamplerVariant::Denoised => cond_out.x0_logits,
                    SamplerVariant::NoiseHead => cond_out.z_logits,
                }
            };
            for (i, (row, rng)) in x.iter_mut().zip(&mut rngs).enumerate() {
                let est: Vec<bool> = guided
                    .row(i)
                    .iter()
                    .zip(row.iter())
                    .map(|(&l, &xt)| {
                        let bit = sigmoid(l) > threshold;
                        match config.variant {
                            SamplerVariant::Denoised => bit,
                            SamplerVariant::NoiseHead => xt ^ bit,
                        }
                    })
                    .collect();
                let mask = bernoulli_bits(d, p, rng);
                *row = est.iter().zip(&mask).map(|(&a, &m)| a ^ m).collect();
            }
        }
        out.extend(x.into_iter().map(BinaryRow::new));
    }
    Ok(out)
}

/// Generates one record per requested label, decoded with the checkpoint schema.
pub fn sample_records(checkpoint: &Checkpoint, labels: &[Value], config: &SampleConfig) -> Result<Vec<LabeledRecord>> {
    let schema = &checkpoint.schema;
    let conditions = labels
        .iter()
        .map(|y| encode_condition(y, &schema.target))
        .collect::<Result<Vec<_>>>()?;
    let null = null_condition(&schema.target);
    let model = checkpoint.denoiser(config.use_ema);
    let rows = sample_bits(model, &conditions, &null, &checkpoint.schedule, config)?;
    rows.iter()
        .zip(labels)
        .map(|(bits, y)| {
            Ok(LabeledRecord {
                features: decode_row(bits, schema)?,
                label: y.clone(),
            })
        })
        .collect()
}

/// `n_rows` records all conditioned on `label`.
pub fn sample(checkpoint: &Checkpoint, label: &Value, n_rows: usize, config: &SampleConfig) -> Result<Vec<LabeledRecord>> {
    sample_records(checkpoint, &vec![label.clone(); n_rows], config)
}
