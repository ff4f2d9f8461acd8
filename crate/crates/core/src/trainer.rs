//! Training loop: XOR corruption, condition dropout, Adam and an EMA shadow model.

use log::info;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, DataProvenance};
use crate::codec::{encode_record, null_condition, BinaryRow, Condition};
use crate::denoiser::{Denoiser, DenoiserConfig, Gradients, LossBreakdown};
use crate::error::{Error, Result};
use crate::noise::{bernoulli_bits, NoiseSchedule, ScheduleShape};
use crate::schema::{LabeledRecord, TableSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub train_steps: u64,
    pub ema_decay: f64,
    pub ema_update_every: u64,
    pub cfg_drop_prob: f64,
    pub timesteps: u32,
    pub schedule_shape: ScheduleShape,
    pub width: usize,
    pub n_blocks: usize,
    pub seed: u64,
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 0.0,
            batch_size: 256,
            train_steps: 20_000,
            ema_decay: 0.995,
            ema_update_every: 10,
            cfg_drop_prob: 0.1,
            timesteps: 1000,
            schedule_shape: ScheduleShape::Linear,
            width: 256,
            n_blocks: 3,
            seed: 0,
            log_every: 1000,
        }
    }
}

impl TrainConfig {
    /// Step-count presets: `desk` (20k), `50k` and `500k`.
    pub fn preset(name: &str) -> Option<Self> {
        let train_steps = match name {
            "desk" => 20_000,
            "50k" => 50_000,
            "500k" => 500_000,
            _ => return None,
        };
        Some(Self {
            train_steps,
            ..Self::default()
        })
    }

    pub fn schedule(&self) -> NoiseSchedule {
        NoiseSchedule {
            timesteps: self.timesteps,
            shape: self.schedule_shape,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return bad("ema_decay must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.cfg_drop_prob) {
            return bad("cfg_drop_prob must lie in [0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.ema_update_every == 0 {
            return bad("ema_update_every must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.weight_decay >= 0.0) {
            return bad("learning_rate and weight_decay must be non-negative");
        }
        self.schedule().validate()
    }
}

/// Adam with L2 weight decay folded into the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
    step: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(model: &Denoiser<f32>, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Vec<f32>> = model.param_slices().iter().map(|s| vec![0.0; s.len()]).collect();
        Self {
            lr: lr as f32,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: weight_decay as f32,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, model: &mut Denoiser<f32>, grads: &Gradients<f32>) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps, wd) = (self.beta1, self.beta2, self.lr, self.eps, self.weight_decay);
        for (((p, g), m), v) in model
            .param_slices_mut()
            .into_iter()
            .zip(grads.param_slices())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                let gi = g[i] + wd * p[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Exponential moving average of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaState {
    pub shadow: Denoiser<f32>,
    pub updates: u64,
}

impl EmaState {
    pub fn new(model: &Denoiser<f32>) -> Self {
        Self {
            shadow: model.clone(),
            updates: 0,
        }
    }

    /// `shadow <- decay * shadow + (1 - decay) * model` when `step % every == 0`.
    /// Returns whether an update happened.
    pub fn update(&mut self, model: &Denoiser<f32>, decay: f64, step: u64, every: u64) -> Result<bool> {
        if model.config != self.shadow.config {
            return Err(Error::Shape(format!(
                "EMA shadow {:?} vs model {:?}",
                self.shadow.config, model.config
            )));
        }
        if every == 0 || !step.is_multiple_of(every) {
            return Ok(false);
        }
        let decay = decay as f32;
        for (s, p) in self.shadow.param_slices_mut().into_iter().zip(model.param_slices()) {
            for (sv, &pv) in s.iter_mut().zip(p) {
                *sv = decay * *sv + (1.0 - decay) * pv;
            }
        }
        self.updates += 1;
        Ok(true)
    }
}

/// Replaces the condition by the null token with probability `p`.
pub fn cfg_dropout<R: Rng + ?Sized>(y_e: &Condition, null: &Condition, p: f64, rng: &mut R) -> Condition {
    if rng.random::<f64>() < p {
        null.clone()
    } else {
        y_e.clone()
    }
}

/// Encoded training rows.
#[derive(Debug, Clone)]
pub struct EncodedDataset {
    pub rows: Vec<BinaryRow>,
    pub conditions: Vec<Condition>,
    pub null: Condition,
}

impl EncodedDataset {
    pub fn encode(records: &[LabeledRecord], schema: &TableSchema) -> Result<Self> {
        let mut rows = Vec::with_capacity(records.len());
        let mut conditions = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let (x, c) = encode_record(r, schema).map_err(|e| e.at_row(i))?;
            rows.push(x);
            conditions.push(c);
        }
        Ok(Self {
            rows,
            conditions,
            null: null_condition(&schema.target),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn bits_to_f32(bits: &[bool]) -> impl Iterator<Item = f32> + '_ {
    bits.iter().map(|&b| if b { 1.0 } else { 0.0 })
}

/// One optimizer step on a minibatch of clean rows with their conditions.
#[allow(clippy::too_many_arguments)]
pub fn train_step<R: Rng + ?Sized>(
    model: &mut Denoiser<f32>,
    optimizer: &mut Adam,
    batch: &[(&BinaryRow, &Condition)],
    null: &Condition,
    schedule: &NoiseSchedule,
    cfg_drop_prob: f64,
    rng: &mut R,
) -> Result<LossBreakdown> {
    let d = model.config.data_dim;
    let c_dim = model.config.cond_dim;
    let b = batch.len();
    let mut x0 = Vec::with_capacity(b * d);
    let mut z = Vec::with_capacity(b * d);
    let mut x_t = Vec::with_capacity(b * d);
    let mut cond = Vec::with_capacity(b * c_dim);
    let mut ts = Vec::with_capacity(b);
    for (row, y_e) in batch {
        if row.len() != d {
            return Err(Error::Length {
                expected: d,
                got: row.len(),
            });
        }
        if y_e.0.len() != c_dim {
            return Err(Error::Length {
                expected: c_dim,
                got: y_e.0.len(),
            });
        }
        let t = rng.random_range(1..=schedule.timesteps);
        let mask = bernoulli_bits(d, schedule.flip_probability(t)?, rng);
        let c = cfg_dropout(y_e, null, cfg_drop_prob, rng);
        ts.push(t);
        x0.extend(bits_to_f32(row.bits()));
        z.extend(bits_to_f32(&mask));
        x_t.extend(row.bits().iter().zip(&mask).map(|(&a, &m)| if a ^ m { 1.0 } else { 0.0 }));
        cond.extend_from_slice(&c.0);
    }
    let shape = (b, d);
    let x0 = Array2::from_shape_vec(shape, x0).expect("shape");
    let z = Array2::from_shape_vec(shape, z).expect("shape");
    let x_t = Array2::from_shape_vec(shape, x_t).expect("shape");
    let cond = Array2::from_shape_vec((b, c_dim), cond).expect("shape");
    let (loss, grads) = model.loss_and_grad(x_t.view(), &ts, cond.view(), x0.view(), z.view())?;
    optimizer.step(model, &grads);
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: u64,
    pub loss_x: f64,
    pub loss_z: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// One entry per optimizer step.
    pub log: Vec<LogEntry>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Yields minibatch indices from per-epoch shuffles, wrapping across epochs.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Batcher {
    fn new(n: usize, rng: ChaCha8Rng) -> Self {
        let mut b = Self {
            order: (0..n).collect(),
            pos: n,
            rng,
        };
        b.reshuffle();
        b
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        (0..size)
            .map(|_| {
                if self.pos == self.order.len() {
                    self.reshuffle();
                }
                self.pos += 1;
                self.order[self.pos - 1]
            })
            .collect()
    }
}

/// Trains a denoiser on `records` and packages it with its EMA shadow.
pub fn fit(
    records: &[LabeledRecord],
    schema: &TableSchema,
    config: &TrainConfig,
    provenance: Option<DataProvenance>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::Dataset("no training rows".into()));
    }
    let data = EncodedDataset::encode(records, schema)?;
    let schedule = config.schedule();
    let model_config = DenoiserConfig {
        data_dim: schema.total_bits,
        cond_dim: schema.cond_dim(),
        width: config.width,
        n_blocks: config.n_blocks,
    };
    let mut model = Denoiser::<f32>::new(model_config, &mut stream_rng(config.seed, 0))?;
    let mut ema = EmaState::new(&model);
    let mut optimizer = Adam::new(&model, config.learning_rate, config.weight_decay);
    let mut batcher = Batcher::new(data.len(), stream_rng(config.seed, 1));
    let mut noise_rng = stream_rng(config.seed, 2);

    info!(
        "training {} params on {} rows (d = {}) for {} steps",
        model.num_params(),
        data.len(),
        schema.total_bits,
        config.train_steps
    );
    let mut log = Vec::with_capacity(config.train_steps as usize);
    let mut window = LossBreakdown::default();
    for step in 1..=config.train_steps {
        let idx = batcher.next_batch(config.batch_size);
        let batch: Vec<(&BinaryRow, &Condition)> =
            idx.iter().map(|&i| (&data.rows[i], &data.conditions[i])).collect();
        let loss = train_step(
            &mut model,
            &mut optimizer,
            &batch,
            &data.null,
            &schedule,
            config.cfg_drop_prob,
            &mut noise_rng,
        )?;
        ema.update(&model, config.ema_decay, step, config.ema_update_every)?;
        log.push(LogEntry {
            step,
            loss_x: loss.loss_x,
            loss_z: loss.loss_z,
            total: loss.total,
        });
        window.loss_x += loss.loss_x;
        window.loss_z += loss.loss_z;
        window.total += loss.total;
        if config.log_every > 0 && step % config.log_every == 0 {
            let n = config.log_every as f64;
            info!(
                "step {step}: loss_x {:.4} loss_z {:.4} total {:.4}",
                window.loss_x / n,
                window.loss_z / n,
                window.total / n
            );
            window = LossBreakdown::default();
        }
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(
            schema.clone(),
            schedule,
            config.clone(),
            model,
            ema.shadow,
            config.train_steps,
            provenance,
        ),
        log,
    })
}
