use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use bindiff_core::eval::{DownstreamParams, EvalConfig};
use bindiff_core::infer::{ColumnHint, TypeHints};
use bindiff_core::sampler::SampleConfig;
use bindiff_core::schema::TaskKind;
use bindiff_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::registry::{self, DatasetPreset};

pub const DATA_DIR_ENV: &str = "BINDIFF_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSection {
    #[serde(flatten)]
    pub config: SampleConfig,
    pub n_rows: Option<usize>,
    /// Condition every row on this label. Without it, classes are cycled in order.
    pub label: Option<String>,
}

/// One declarative run description. Every field may also be set by a flag.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<String>,
    pub data: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub target: Option<String>,
    pub task: Option<TaskKind>,
    /// Per-column kind overrides for schema inference.
    pub column_types: TypeHints,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub downstream: Option<DownstreamParams>,
    pub steps_list: Vec<usize>,
    pub train: TrainConfig,
    pub sample: SampleSection,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).context("invalid run configuration")
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn preset(&self) -> anyhow::Result<Option<DatasetPreset>> {
        match &self.dataset {
            None => Ok(None),
            Some(name) => registry::lookup(name).map(Some).ok_or_else(|| {
                anyhow!(
                    "unknown dataset `{name}` (known: {})",
                    registry::names().join(", ")
                )
            }),
        }
    }

    /// Fills dataset-derived defaults and checks cross-field consistency.
    pub fn resolve(mut self) -> anyhow::Result<Self> {
        if let Some(p) = self.preset()? {
            self.target.get_or_insert_with(|| p.target.to_owned());
            self.task.get_or_insert(p.task);
            self.downstream.get_or_insert(p.downstream);
            if self.data.is_none() {
                let dir = self
                    .data_dir
                    .clone()
                    .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from));
                self.data = dir.map(|d| d.join(p.file));
            }
        }
        if let Some(d) = self.downstream {
            self.eval.downstream = d;
        }
        self.train.validate()?;
        self.sample.config.validate()?;
        self.eval.validate()?;
        Ok(self)
    }

    pub fn data_path(&self) -> anyhow::Result<&Path> {
        let p = self.data.as_deref().ok_or_else(|| {
            anyhow!("no data file: pass --data, or --dataset together with --data-dir or ${DATA_DIR_ENV}")
        })?;
        if !p.is_file() {
            bail!("data file {} does not exist", p.display());
        }
        Ok(p)
    }

    pub fn target_name(&self) -> anyhow::Result<&str> {
        self.target.as_deref().ok_or_else(|| anyhow!("no target column: pass --target or --dataset"))
    }

    pub fn checkpoint_path(&self) -> anyhow::Result<&Path> {
        let p = self.checkpoint.as_deref().ok_or_else(|| anyhow!("no checkpoint: pass --checkpoint"))?;
        if !p.is_file() {
            bail!("checkpoint {} does not exist", p.display());
        }
        Ok(p)
    }

    pub fn out_dir(&self) -> anyhow::Result<&Path> {
        self.out_dir.as_deref().ok_or_else(|| anyhow!("no output directory: pass --out-dir"))
    }

    /// Column hints with the task folded in as a hint on the target column.
    pub fn type_hints(&self) -> anyhow::Result<TypeHints> {
        let mut hints = self.column_types.clone();
        if let Some(task) = self.task {
            let hint = match task {
                TaskKind::Classification => ColumnHint::Categorical,
                TaskKind::Regression => ColumnHint::Continuous,
            };
            hints.insert(self.target_name()?.to_owned(), hint);
        }
        Ok(hints)
    }

    /// Evaluation settings with the `[sample]` section as the sampler configuration.
    pub fn eval_with_sampling(&self) -> EvalConfig {
        let mut e = self.eval.clone();
        e.sample = self.sample.config.clone();
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_sections_and_defaults() {
        let c = RunConfig::from_toml_str(
            r#"
            dataset = "travel"
            data = "x.csv"
            [train]
            train_steps = 10
            width = 32
            [sample]
            n_steps = 3
            n_rows = 50
            [eval]
            n_synthetic_sets = 2
            "#,
        )
        .unwrap()
        .resolve()
        .unwrap();
        assert_eq!(c.train.train_steps, 10);
        assert_eq!(c.train.batch_size, 256);
        assert_eq!(c.sample.config.n_steps, 3);
        assert_eq!(c.sample.config.guidance_scale, 5.0);
        assert_eq!(c.sample.n_rows, Some(50));
        assert_eq!(c.target.as_deref(), Some("Target"));
        assert_eq!(c.eval.downstream.dt_max_depth, 6);
        assert_eq!(c.data.as_deref(), Some(Path::new("x.csv")));
    }

    #[test]
    fn rejects_unknown_keys_and_datasets() {
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
        let c = RunConfig {
            dataset: Some("nope".into()),
            ..Default::default()
        };
        assert!(c.resolve().is_err());
    }

    #[test]
    fn data_dir_joins_preset_file() {
        let c = RunConfig {
            dataset: Some("heloc".into()),
            data_dir: Some("/data".into()),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(c.data.as_deref(), Some(Path::new("/data/heloc.csv")));
        assert_eq!(c.type_hints().unwrap()["RiskPerformance"], ColumnHint::Categorical);
    }
}
