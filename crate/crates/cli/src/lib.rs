//! Command-line front end: run configuration, dataset registry, output
//! directories and the `train`, `sample`, `eval`, `roundtrip` and
//! `steps-sweep` commands.

pub mod commands;
pub mod config;
pub mod registry;
pub mod run;

use std::fmt;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use bindiff_core::infer::ColumnHint;
use bindiff_core::schema::TaskKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{RunConfig, DATA_DIR_ENV};

/// A verification step ran and its check did not hold.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Checkpoint,
    Io,
    Check,
}

impl ErrorCategory {
    pub fn of(err: &anyhow::Error) -> Self {
        use bindiff_core::Error as E;
        for cause in err.chain() {
            if cause.downcast_ref::<CheckFailed>().is_some() {
                return Self::Check;
            }
            if let Some(e) = cause.downcast_ref::<E>() {
                return match e {
                    E::Checkpoint(_) => Self::Checkpoint,
                    E::Io(_) => Self::Io,
                    E::Config(_) => Self::Usage,
                    _ => Self::Data,
                };
            }
            if cause.downcast_ref::<std::io::Error>().is_some() {
                return Self::Io;
            }
        }
        Self::Usage
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Self::Usage => 2,
            Self::Data => 3,
            Self::Checkpoint => 4,
            Self::Io => 5,
            Self::Check => 6,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Usage => "usage",
            Self::Data => "data",
            Self::Checkpoint => "checkpoint",
            Self::Io => "io",
            Self::Check => "check failed",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bindiff", version, about = "Tabular data synthesis with binary diffusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a denoiser on the training split of a CSV.
    Train(Flags),
    /// Generate rows from a checkpoint.
    Sample(Flags),
    /// Score downstream models trained on synthetic rows against held-out real rows.
    Eval(Flags),
    /// Encode and decode every row of a CSV and report deviations.
    Roundtrip(Flags),
    /// Run `eval` for several sampling step counts.
    StepsSweep(Flags),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Registry dataset name (travel, sick, heloc, adult, diabetes, california).
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, env = DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Column kind override, `name=continuous` or `name=categorical`. Repeatable.
    #[arg(long = "column-type", value_name = "NAME=KIND")]
    pub column_types: Vec<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Seed for model initialization, batching, noise and the data split.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sample_seed: Option<u64>,
    /// Training length preset: desk, 50k or 500k.
    #[arg(long)]
    pub train_preset: Option<String>,
    #[arg(long)]
    pub train_steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub timesteps: Option<u32>,
    #[arg(long)]
    pub log_every: Option<u64>,
    #[arg(long)]
    pub n_rows: Option<usize>,
    #[arg(long)]
    pub label: Option<String>,
    /// Sampling steps.
    #[arg(long)]
    pub n_steps: Option<usize>,
    #[arg(long)]
    pub guidance: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Sample with the live weights instead of the EMA shadow.
    #[arg(long)]
    pub no_ema: bool,
    #[arg(long)]
    pub n_sets: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub steps_list: Vec<usize>,
}

impl Flags {
    /// Loads `--config` (if any), applies every flag on top, then resolves defaults.
    pub fn to_config(&self) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(name) = &self.train_preset {
            let p = bindiff_core::trainer::TrainConfig::preset(name)
                .ok_or_else(|| anyhow!("unknown train preset `{name}` (desk, 50k, 500k)"))?;
            c.train.train_steps = p.train_steps;
        }
        macro_rules! set {
            ($src:expr => $($dst:tt)+) => {
                if let Some(v) = $src.clone() {
                    $($dst)+ = v.into();
                }
            };
        }
        set!(self.dataset => c.dataset);
        set!(self.data => c.data);
        set!(self.data_dir => c.data_dir);
        set!(self.target => c.target);
        set!(self.checkpoint => c.checkpoint);
        set!(self.out_dir => c.out_dir);
        set!(self.train_steps => c.train.train_steps);
        set!(self.batch_size => c.train.batch_size);
        set!(self.lr => c.train.learning_rate);
        set!(self.width => c.train.width);
        set!(self.blocks => c.train.n_blocks);
        set!(self.timesteps => c.train.timesteps);
        set!(self.log_every => c.train.log_every);
        set!(self.n_rows => c.sample.n_rows);
        set!(self.label => c.sample.label);
        set!(self.n_steps => c.sample.config.n_steps);
        set!(self.guidance => c.sample.config.guidance_scale);
        set!(self.threshold => c.sample.config.threshold);
        set!(self.sample_seed => c.sample.config.seed);
        set!(self.n_sets => c.eval.n_synthetic_sets);
        if let Some(s) = self.seed {
            c.train.seed = s;
            c.eval.seed = s;
        }
        if let Some(t) = self.task {
            c.task = Some(match t {
                TaskArg::Classification => TaskKind::Classification,
                TaskArg::Regression => TaskKind::Regression,
            });
        }
        if self.no_ema {
            c.sample.config.use_ema = false;
        }
        if !self.steps_list.is_empty() {
            c.steps_list = self.steps_list.clone();
        }
        for spec in &self.column_types {
            let (name, kind) = spec
                .split_once('=')
                .with_context(|| format!("--column-type expects NAME=KIND, got `{spec}`"))?;
            let hint = match kind {
                "continuous" => ColumnHint::Continuous,
                "categorical" => ColumnHint::Categorical,
                other => return Err(anyhow!("unknown column kind `{other}`")),
            };
            c.column_types.insert(name.to_owned(), hint);
        }
        c.resolve()
    }
}

impl Command {
    pub fn flags(&self) -> &Flags {
        match self {
            Self::Train(f) | Self::Sample(f) | Self::Eval(f) | Self::Roundtrip(f) | Self::StepsSweep(f) => f,
        }
    }
}

/// Parses `argv` into the resolved configuration without running the command.
pub fn parse_config<I, T>(argv: I) -> anyhow::Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(argv)?.command.flags().to_config()
}

/// Parses `argv` and runs the chosen command, returning a one-line summary.
pub fn run<I, T>(argv: I) -> anyhow::Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    match cli.command {
        Command::Train(f) => {
            let path = commands::cmd_train(&f.to_config()?)?;
            Ok(format!("checkpoint written to {}", path.display()))
        }
        Command::Sample(f) => {
            let path = commands::cmd_sample(&f.to_config()?)?;
            Ok(format!("samples written to {}", path.display()))
        }
        Command::Eval(f) => Ok(commands::cmd_eval(&f.to_config()?)?.to_table()),
        Command::Roundtrip(f) => {
            let r = commands::cmd_roundtrip(&f.to_config()?)?;
            Ok(format!(
                "{} rows round-tripped, {} categorical mismatches",
                r.rows, r.categorical_mismatches
            ))
        }
        Command::StepsSweep(f) => {
            let rows = commands::cmd_steps_sweep(&f.to_config()?)?;
            let mut s = String::from("n_steps model mean std\n");
            for r in rows {
                s.push_str(&format!("{} {} {:.4} {:.4}\n", r.n_steps, r.model, r.mean, r.std));
            }
            Ok(s)
        }
    }
}
