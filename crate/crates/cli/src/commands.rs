use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use bindiff_core::checkpoint::{Checkpoint, DataProvenance};
use bindiff_core::codec::{decode_row, encode_row};
use bindiff_core::eval::{ml_efficiency, split_dataset, steps_sweep, sweep_csv, EvalReport, Split, SweepRow};
use bindiff_core::infer::{infer_schema, ColumnHint};
use bindiff_core::sampler::sample_records;
use bindiff_core::schema::{ColumnKind, LabeledRecord, TableSchema, TargetSpec, Task, TaskKind, Value};
use bindiff_core::table::RawTable;
use bindiff_core::trainer::fit;
use serde::Serialize;

use crate::config::RunConfig;
use crate::run::{FileDigest, RunDir};
use crate::CheckFailed;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const SCHEMA_FILE: &str = "schema.json";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const SAMPLES_META_FILE: &str = "samples.meta.json";
pub const REPORT_JSON: &str = "eval_report.json";
pub const REPORT_TXT: &str = "eval_report.txt";
pub const SWEEP_CSV: &str = "steps_sweep.csv";
pub const SWEEP_JSON: &str = "steps_sweep_reports.json";
pub const ROUNDTRIP_JSON: &str = "roundtrip_report.json";
pub const DEFAULT_STEPS_LIST: [usize; 4] = [5, 10, 50, 100];

/// Reads a CSV and remembers the digest of its exact bytes.
pub fn load_table(path: &Path) -> anyhow::Result<(RawTable, FileDigest)> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let table = RawTable::from_reader(&bytes[..]).with_context(|| format!("malformed CSV {}", path.display()))?;
    Ok((table, FileDigest::of_bytes(path, &bytes)))
}

fn dataset_name(config: &RunConfig, data: &Path) -> String {
    config.dataset.clone().unwrap_or_else(|| {
        data.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    })
}

/// Target kind as inferred on the full table, so train and eval agree on how to split.
fn target_kind(raw: &RawTable, config: &RunConfig) -> anyhow::Result<TaskKind> {
    Ok(infer_schema(raw, config.target_name()?, &config.type_hints()?)?.target.kind())
}

/// The split depends only on the raw target column, the seed and the fraction.
fn split_table(raw: &RawTable, target: &str, kind: TaskKind, fraction: f64, seed: u64) -> anyhow::Result<Split> {
    let idx = raw.column_index(target)?;
    let labels: Vec<&str> = raw.rows.iter().map(|r| r[idx].as_str()).collect();
    let spec = match kind {
        TaskKind::Classification => {
            let classes: BTreeSet<&str> = labels.iter().copied().collect();
            TargetSpec::classification(target, classes)
        }
        TaskKind::Regression => TargetSpec::regression(target, 0.0, 1.0),
    };
    let records: Vec<LabeledRecord> = labels
        .iter()
        .map(|l| LabeledRecord {
            features: vec![],
            label: Value::Category((*l).to_owned()),
        })
        .collect();
    Ok(split_dataset(&records, &spec, fraction, seed)?)
}

pub struct Prepared {
    pub schema: TableSchema,
    pub train: Vec<LabeledRecord>,
    pub test: Vec<LabeledRecord>,
    pub provenance: DataProvenance,
}

/// Splits the table, infers the schema on the training half only, and parses both halves with it.
pub fn prepare(raw: &RawTable, source: &FileDigest, config: &RunConfig) -> anyhow::Result<Prepared> {
    let target = config.target_name()?;
    let kind = target_kind(raw, config)?;
    let (fraction, seed) = (config.eval.train_fraction, config.eval.seed);
    let split = split_table(raw, target, kind, fraction, seed)?;
    let mut hints = config.type_hints()?;
    hints.insert(
        target.to_owned(),
        match kind {
            TaskKind::Classification => ColumnHint::Categorical,
            TaskKind::Regression => ColumnHint::Continuous,
        },
    );
    let train_raw = raw.select(&split.train);
    let schema = infer_schema(&train_raw, target, &hints).context("schema inference on the training split failed")?;
    let train = schema.parse_table(&train_raw)?;
    let test = schema.parse_table(&raw.select(&split.test))?;
    Ok(Prepared {
        schema,
        train,
        test,
        provenance: DataProvenance {
            source_sha256: source.sha256.clone(),
            split_seed: seed,
            train_fraction: format!("{fraction:?}"),
            train_split_sha256: split.train_hash(),
            test_split_sha256: split.test_hash(),
        },
    })
}

pub fn cmd_train(config: &RunConfig) -> anyhow::Result<PathBuf> {
    let data = config.data_path()?;
    let mut out = RunDir::claim(config.out_dir()?)?;
    let (raw, source) = load_table(data)?;
    let p = prepare(&raw, &source, config)?;
    log::info!(
        "{} training rows, {} held out, {} bits per row",
        p.train.len(),
        p.test.len(),
        p.schema.total_bits
    );
    let outcome = fit(&p.train, &p.schema, &config.train, Some(p.provenance))?;

    let mut log = csv::Writer::from_writer(Vec::new());
    log.write_record(["step", "loss_x", "loss_z", "total"])?;
    for e in &outcome.log {
        log.write_record([e.step.to_string(), format!("{:?}", e.loss_x), format!("{:?}", e.loss_z), format!("{:?}", e.total)])?;
    }
    out.write(TRAIN_LOG_FILE, &log.into_inner().map_err(|e| anyhow!("{}", e.error()))?)?;
    out.write(SCHEMA_FILE, p.schema.to_json()?.as_bytes())?;
    let path = out.write(CHECKPOINT_FILE, &outcome.checkpoint.to_bytes()?)?;
    out.finish("train", config, vec![source])?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct SampleMeta<'a> {
    checkpoint_sha256: &'a str,
    n_rows: usize,
    label: Option<&'a str>,
    sample: &'a bindiff_core::sampler::SampleConfig,
}

/// Labels for `n` rows: the requested one, or classes in rotation.
fn sample_labels(target: &TargetSpec, label: Option<&str>, n: usize) -> anyhow::Result<Vec<Value>> {
    if let Some(l) = label {
        return Ok(vec![target.parse_label(l)?; n]);
    }
    match &target.task {
        Task::Classification { classes } => Ok((0..n).map(|i| Value::Category(classes[i % classes.len()].clone())).collect()),
        Task::Regression { .. } => bail!("regression checkpoints need --label <value> for sampling"),
    }
}

pub fn cmd_sample(config: &RunConfig) -> anyhow::Result<PathBuf> {
    let ckpt_path = config.checkpoint_path()?;
    let n_rows = config.sample.n_rows.ok_or_else(|| anyhow!("pass --n-rows"))?;
    let mut out = RunDir::claim(config.out_dir()?)?;
    let input = FileDigest::of_file(ckpt_path)?;
    let ckpt = Checkpoint::from_bytes(&std::fs::read(ckpt_path)?)?;
    let labels = sample_labels(&ckpt.schema.target, config.sample.label.as_deref(), n_rows)?;
    let records = sample_records(&ckpt, &labels, &config.sample.config)?;
    let csv = ckpt.schema.to_raw_table(&records).to_csv_bytes()?;
    let path = out.write(SAMPLES_FILE, &csv)?;
    out.write_json(
        SAMPLES_META_FILE,
        &SampleMeta {
            checkpoint_sha256: &input.sha256,
            n_rows,
            label: config.sample.label.as_deref(),
            sample: &config.sample.config,
        },
    )?;
    out.finish("sample", config, vec![input])?;
    Ok(path)
}

/// Loads the checkpoint and reconstructs exactly the split it was trained on.
fn eval_inputs(config: &RunConfig) -> anyhow::Result<(Checkpoint, Vec<LabeledRecord>, Vec<LabeledRecord>, Vec<FileDigest>, String)> {
    let ckpt_path = config.checkpoint_path()?;
    let data = config.data_path()?;
    let ckpt_digest = FileDigest::of_file(ckpt_path)?;
    let ckpt = Checkpoint::from_bytes(&std::fs::read(ckpt_path)?)?;
    let prov = ckpt
        .provenance
        .clone()
        .ok_or_else(|| anyhow!("checkpoint records no training split; it cannot be evaluated against held-out rows"))?;
    let (raw, source) = load_table(data)?;
    if source.sha256 != prov.source_sha256 {
        return Err(CheckFailed(format!(
            "{} differs from the file the checkpoint was trained on (sha256 {} vs {})",
            data.display(),
            source.sha256,
            prov.source_sha256
        ))
        .into());
    }
    let fraction: f64 = prov.train_fraction.parse().context("bad train fraction in checkpoint")?;
    let split = split_table(&raw, &ckpt.schema.target.name, ckpt.schema.target.kind(), fraction, prov.split_seed)?;
    if split.train_hash() != prov.train_split_sha256 || split.test_hash() != prov.test_split_sha256 {
        return Err(CheckFailed("recomputed split does not match the checkpoint's training split".into()).into());
    }
    let train = ckpt.schema.parse_table(&raw.select(&split.train))?;
    let test = ckpt.schema.parse_table(&raw.select(&split.test))?;
    let name = dataset_name(config, data);
    Ok((ckpt, train, test, vec![source, ckpt_digest], name))
}

pub fn cmd_eval(config: &RunConfig) -> anyhow::Result<EvalReport> {
    let mut out = RunDir::claim(config.out_dir()?)?;
    let (ckpt, train, test, inputs, name) = eval_inputs(config)?;
    let report = ml_efficiency(&ckpt, &name, &train, &test, &config.eval_with_sampling())?;
    out.write_json(REPORT_JSON, &report)?;
    out.write(REPORT_TXT, report.to_table().as_bytes())?;
    out.finish("eval", config, inputs)?;
    Ok(report)
}

/// Whether the fewest-steps setting scores at least as well as the most-steps
/// one for at least two models; `None` with fewer than two step values.
pub fn few_steps_win(rows: &[SweepRow]) -> Option<bool> {
    let lo = rows.iter().map(|r| r.n_steps).min()?;
    let hi = rows.iter().map(|r| r.n_steps).max()?;
    if lo == hi {
        return None;
    }
    let mut wins = 0;
    for a in rows.iter().filter(|r| r.n_steps == lo) {
        if let Some(b) = rows.iter().find(|r| r.n_steps == hi && r.model == a.model) {
            let better = if a.metric == bindiff_core::eval::Metric::Accuracy { a.mean >= b.mean } else { a.mean <= b.mean };
            wins += usize::from(better);
        }
    }
    Some(wins >= 2)
}

pub fn cmd_steps_sweep(config: &RunConfig) -> anyhow::Result<Vec<SweepRow>> {
    let steps: Vec<usize> = if config.steps_list.is_empty() {
        DEFAULT_STEPS_LIST.to_vec()
    } else {
        config.steps_list.clone()
    };
    let mut out = RunDir::claim(config.out_dir()?)?;
    let (ckpt, train, test, inputs, name) = eval_inputs(config)?;
    let (rows, reports) = steps_sweep(&ckpt, &name, &train, &test, &steps, &config.eval_with_sampling())?;
    out.write(SWEEP_CSV, &sweep_csv(&rows)?)?;
    out.write_json(SWEEP_JSON, &reports)?;
    out.finish("steps-sweep", config, inputs)?;
    if few_steps_win(&rows) == Some(false) {
        log::warn!("fewest sampling steps did not match or beat the most steps for at least two models");
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnRoundtrip {
    pub name: String,
    pub kind: &'static str,
    /// Largest |decoded - original| (continuous only).
    pub max_deviation: f64,
    /// Allowed deviation, `(max - min) * 2^-20` (continuous only).
    pub bound: f64,
    pub mismatches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundtripReport {
    pub rows: usize,
    pub total_bits: usize,
    pub columns: Vec<ColumnRoundtrip>,
    pub categorical_mismatches: usize,
    pub ok: bool,
}

/// Encodes and decodes every row of `records` and compares with the originals.
pub fn roundtrip(schema: &TableSchema, records: &[LabeledRecord]) -> anyhow::Result<RoundtripReport> {
    let mut columns: Vec<ColumnRoundtrip> = schema
        .columns
        .iter()
        .map(|c| {
            let (kind, bound) = match &c.kind {
                ColumnKind::Continuous(s) => ("continuous", (s.max - s.min) * 2f64.powi(-20)),
                ColumnKind::Categorical(_) => ("categorical", 0.0),
            };
            ColumnRoundtrip {
                name: c.name.clone(),
                kind,
                max_deviation: 0.0,
                bound,
                mismatches: 0,
            }
        })
        .collect();
    for (i, r) in records.iter().enumerate() {
        let decoded = decode_row(&encode_row(&r.features, schema).map_err(|e| e.at_row(i))?, schema)?;
        for ((col, orig), back) in columns.iter_mut().zip(&r.features).zip(&decoded) {
            match (orig, back) {
                (Value::Number(a), Value::Number(b)) => {
                    let dev = (a - b).abs();
                    col.max_deviation = col.max_deviation.max(dev);
                    col.mismatches += usize::from(dev > col.bound);
                }
                _ => col.mismatches += usize::from(orig != back),
            }
        }
    }
    let categorical_mismatches = columns.iter().filter(|c| c.kind == "categorical").map(|c| c.mismatches).sum();
    let ok = columns.iter().all(|c| c.mismatches == 0);
    Ok(RoundtripReport {
        rows: records.len(),
        total_bits: schema.total_bits,
        columns,
        categorical_mismatches,
        ok,
    })
}

pub fn cmd_roundtrip(config: &RunConfig) -> anyhow::Result<RoundtripReport> {
    let data = config.data_path()?;
    let mut out = RunDir::claim(config.out_dir()?)?;
    let (raw, source) = load_table(data)?;
    let schema = infer_schema(&raw, config.target_name()?, &config.type_hints()?)?;
    let records = schema.parse_table(&raw)?;
    let report = roundtrip(&schema, &records)?;
    out.write_json(ROUNDTRIP_JSON, &report)?;
    out.finish("roundtrip", config, vec![source])?;
    if !report.ok {
        return Err(CheckFailed(format!(
            "round trip exceeded tolerance: {}",
            serde_json::to_string(&report.columns)?
        ))
        .into());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use bindiff_core::eval::Metric;

    #[test]
    fn trend_check() {
        let row = |n, m: &str, mean| SweepRow {
            n_steps: n,
            model: m.into(),
            metric: Metric::Accuracy,
            mean,
            std: 0.0,
            real: 0.0,
        };
        let rows = vec![
            row(5, "LR", 80.0),
            row(5, "DT", 70.0),
            row(5, "RF", 75.0),
            row(100, "LR", 79.0),
            row(100, "DT", 71.0),
            row(100, "RF", 75.0),
        ];
        assert_eq!(few_steps_win(&rows), Some(true));
        assert_eq!(few_steps_win(&rows[..3]), None);
    }

    #[test]
    fn rotating_labels() {
        let t = TargetSpec::classification("y", ["a", "b", "c"]);
        let l = sample_labels(&t, None, 4).unwrap();
        assert_eq!(l[3], Value::Category("a".into()));
        assert!(sample_labels(&t, Some("z"), 1).is_err());
        assert!(sample_labels(&TargetSpec::regression("y", 0.0, 1.0), None, 1).is_err());
    }
}
