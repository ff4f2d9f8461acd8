//! Machine-learning efficiency: fit downstream predictors on synthetic rows,
//! score them on held-out real rows, and compare with the same predictors fit
//! on the real training rows.

mod features;
mod forest;
mod linear;
mod split;
mod tree;

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use features::{FeatureEncoder, Predictions, Standardizer, Targets};
pub use forest::{ForestParams, RandomForest};
pub use linear::{LinearModel, LOGISTIC_C};
pub use split::{hash_indices, split_dataset, Split, MIN_SPLIT_ROWS};
pub use tree::{DecisionTree, MaxFeatures, TreeParams};

use crate::checkpoint::{sha256_hex, Checkpoint};
use crate::error::{Error, Result};
use crate::sampler::{sample_records, SampleConfig};
use crate::schema::{LabeledRecord, TableSchema, TaskKind};

pub const DEFAULT_LR_MAX_ITER: usize = 100;
pub const LABEL_PRIOR: &str = "real_train_empirical";
pub const MODEL_NAMES: [&str; 3] = ["LR", "DT", "RF"];

/// Per-dataset hyperparameters of the three downstream predictors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DownstreamParams {
    /// Logistic regression iteration cap; unused for least squares.
    pub lr_max_iter: Option<usize>,
    pub dt_max_depth: usize,
    pub rf_max_depth: usize,
    pub rf_n_estimators: usize,
}

impl DownstreamParams {
    /// Published settings for the benchmark datasets.
    pub fn preset(dataset: &str) -> Option<Self> {
        let (it, dt, rf, n) = match dataset.to_ascii_lowercase().as_str() {
            "travel" => (Some(100), 6, 12, 75),
            "sick" => (Some(200), 10, 12, 90),
            "heloc" => (Some(500), 6, 12, 78),
            "adult" => (Some(1000), 8, 12, 85),
            "diabetes" => (Some(500), 10, 20, 120),
            "california" => (None, 10, 12, 85),
            _ => return None,
        };
        Some(Self {
            lr_max_iter: it,
            dt_max_depth: dt,
            rf_max_depth: rf,
            rf_n_estimators: n,
        })
    }
}

impl Default for DownstreamParams {
    fn default() -> Self {
        Self::preset("travel").expect("travel preset")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub train_fraction: f64,
    pub n_synthetic_sets: usize,
    pub downstream: DownstreamParams,
    /// Split and forest seed.
    pub seed: u64,
    /// Synthetic set `k` (0-based) is drawn with `sample.seed + k`.
    pub sample: SampleConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            n_synthetic_sets: 5,
            downstream: DownstreamParams::default(),
            seed: 0,
            sample: SampleConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.n_synthetic_sets == 0 {
            return Err(Error::Config("n_synthetic_sets must be at least 1".into()));
        }
        let d = &self.downstream;
        if d.dt_max_depth == 0 || d.rf_max_depth == 0 || d.rf_n_estimators == 0 || d.lr_max_iter == Some(0) {
            return Err(Error::Config("downstream hyperparameters must be positive".into()));
        }
        self.sample.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Percent correct.
    Accuracy,
    Mse,
}

impl Metric {
    pub fn for_task(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Classification => Metric::Accuracy,
            TaskKind::Regression => Metric::Mse,
        }
    }

    pub fn higher_is_better(self) -> bool {
        self == Metric::Accuracy
    }

    pub fn score(self, pred: &Predictions, truth: &Targets) -> Result<f64> {
        match (self, pred, truth) {
            (Metric::Accuracy, Predictions::Classes(p), Targets::Classes { y, .. }) if p.len() == y.len() && !y.is_empty() => {
                let hits = p.iter().zip(y).filter(|(a, b)| a == b).count();
                Ok(100.0 * hits as f64 / y.len() as f64)
            }
            (Metric::Mse, Predictions::Values(p), Targets::Values(y)) if p.len() == y.len() && !y.is_empty() => {
                Ok(p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
            }
            _ => Err(Error::Shape("predictions do not match targets".into())),
        }
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}

/// Fits LR, DT and RF on `train` and scores each on `test`, in [`MODEL_NAMES`] order.
pub fn fit_and_score(
    schema: &TableSchema,
    train: &[LabeledRecord],
    test: &[LabeledRecord],
    params: &DownstreamParams,
    seed: u64,
) -> Result<[f64; 3]> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Dataset("downstream fit needs non-empty train and test sets".into()));
    }
    let enc = FeatureEncoder::new(schema);
    let metric = Metric::for_task(schema.target.kind());
    let (xtr, ytr) = (enc.features(train)?, enc.targets(train)?);
    let (xte, yte) = (enc.features(test)?, enc.targets(test)?);

    let lr = LinearModel::fit(&xtr, &ytr, &enc.continuous_mask(), params.lr_max_iter.unwrap_or(DEFAULT_LR_MAX_ITER))?;
    let rows: Vec<usize> = (0..xtr.nrows()).collect();
    let dt_params = TreeParams {
        max_depth: Some(params.dt_max_depth),
        ..TreeParams::default()
    };
    let dt = DecisionTree::fit(&xtr, &ytr, &rows, dt_params, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let rf = RandomForest::fit(
        &xtr,
        &ytr,
        ForestParams::new(params.rf_n_estimators, Some(params.rf_max_depth), seed),
    )?;
    Ok([
        metric.score(&lr.predict(&xte), &yte)?,
        metric.score(&dt.predict(&xte), &yte)?,
        metric.score(&rf.predict(&xte), &yte)?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    /// Score of the predictor fit on the real training rows.
    pub real: f64,
    pub mean: f64,
    pub std: f64,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub checkpoint_sha256: String,
    pub metric: Metric,
    pub higher_is_better: bool,
    pub label_prior: String,
    pub n_train: usize,
    pub n_test: usize,
    /// Content hashes of the real rows used, rendered as CSV.
    pub train_data_sha256: String,
    pub test_data_sha256: String,
    pub config: EvalConfig,
    pub rows: Vec<ModelRow>,
}

impl EvalReport {
    pub fn row(&self, model: &str) -> Option<&ModelRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_table(&self) -> String {
        let arrow = if self.higher_is_better { "higher is better" } else { "lower is better" };
        let mut s = String::new();
        let _ = writeln!(s, "dataset: {}  metric: {:?} ({arrow})", self.dataset, self.metric);
        let _ = writeln!(
            s,
            "train rows: {}  test rows: {}  synthetic sets: {}",
            self.n_train, self.n_test, self.config.n_synthetic_sets
        );
        let _ = writeln!(s, "{:<6}{:>12}{:>22}", "model", "real", "synthetic");
        for r in &self.rows {
            let _ = writeln!(s, "{:<6}{:>12.4}{:>14.4} ± {:<6.4}", r.model, r.real, r.mean, r.std);
        }
        s
    }
}

fn check_records(schema: &TableSchema, records: &[LabeledRecord], what: &str) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        if r.features.len() != schema.columns.len() {
            return Err(Error::Dataset(format!(
                "{what} row {i} has {} features but the checkpoint schema has {}",
                r.features.len(),
                schema.columns.len()
            )));
        }
    }
    FeatureEncoder::new(schema)
        .targets(records)
        .map_err(|e| Error::Dataset(format!("{what} labels do not fit the checkpoint schema: {e}")))?;
    Ok(())
}

fn data_hash(schema: &TableSchema, records: &[LabeledRecord]) -> Result<String> {
    Ok(sha256_hex(&schema.to_raw_table(records).to_csv_bytes()?))
}

/// Draws `n_synthetic_sets` synthetic training sets, each conditioned on the
/// real training labels in order, and scores LR/DT/RF trained on each.
pub fn ml_efficiency(
    checkpoint: &Checkpoint,
    dataset: &str,
    real_train: &[LabeledRecord],
    real_test: &[LabeledRecord],
    config: &EvalConfig,
) -> Result<EvalReport> {
    config.validate()?;
    let schema = &checkpoint.schema;
    check_records(schema, real_train, "training")?;
    check_records(schema, real_test, "test")?;
    let metric = Metric::for_task(schema.target.kind());
    let real = fit_and_score(schema, real_train, real_test, &config.downstream, config.seed)?;

    let labels: Vec<_> = real_train.iter().map(|r| r.label.clone()).collect();
    let mut per_set = Vec::with_capacity(config.n_synthetic_sets);
    for k in 0..config.n_synthetic_sets {
        let mut sc = config.sample.clone();
        sc.seed = config.sample.seed.wrapping_add(k as u64);
        let synthetic = sample_records(checkpoint, &labels, &sc)?;
        debug_assert_eq!(synthetic.len(), real_train.len());
        per_set.push(fit_and_score(schema, &synthetic, real_test, &config.downstream, config.seed)?);
        log::info!("synthetic set {}/{} scored {:?}", k + 1, config.n_synthetic_sets, per_set[k]);
    }
    let rows = MODEL_NAMES
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let scores: Vec<f64> = per_set.iter().map(|s| s[m]).collect();
            let (mean, std) = mean_std(&scores);
            ModelRow {
                model: (*name).to_owned(),
                real: real[m],
                mean,
                std,
                scores,
            }
        })
        .collect();
    Ok(EvalReport {
        dataset: dataset.to_owned(),
        checkpoint_sha256: checkpoint.sha256()?,
        metric,
        higher_is_better: metric.higher_is_better(),
        label_prior: LABEL_PRIOR.to_owned(),
        n_train: real_train.len(),
        n_test: real_test.len(),
        train_data_sha256: data_hash(schema, real_train)?,
        test_data_sha256: data_hash(schema, real_test)?,
        config: config.clone(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_steps: usize,
    pub model: String,
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
    pub real: f64,
}

/// One [`ml_efficiency`] run per entry of `steps`, flattened to one row per model.
pub fn steps_sweep(
    checkpoint: &Checkpoint,
    dataset: &str,
    real_train: &[LabeledRecord],
    real_test: &[LabeledRecord],
    steps: &[usize],
    config: &EvalConfig,
) -> Result<(Vec<SweepRow>, Vec<EvalReport>)> {
    if steps.is_empty() {
        return Err(Error::Config("steps list is empty".into()));
    }
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &n in steps {
        let mut cfg = config.clone();
        cfg.sample.n_steps = n;
        let report = ml_efficiency(checkpoint, dataset, real_train, real_test, &cfg)?;
        rows.extend(report.rows.iter().map(|r| SweepRow {
            n_steps: n,
            model: r.model.clone(),
            metric: report.metric,
            mean: r.mean,
            std: r.std,
            real: r.real,
        }));
        reports.push(report);
    }
    Ok((rows, reports))
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n_steps", "model", "metric", "mean", "std", "real"])?;
    for r in rows {
        let metric = match r.metric {
            Metric::Accuracy => "accuracy",
            Metric::Mse => "mse",
        };
        w.write_record([
            r.n_steps.to_string(),
            r.model.clone(),
            metric.to_owned(),
            format!("{:?}", r.mean),
            format!("{:?}", r.std),
            format!("{:?}", r.real),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}
