use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use reguider::align::Metric;
use reguider_cli::commands;
use reguider_cli::config::ExperimentConfig;
use reguider_cli::error::{CliError, CliResult};
use reguider_cli::report::fmt6;

#[derive(Parser)]
#[command(name = "reguider", version, about = "Teacher-guided representation alignment for forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace existing outputs.
    #[arg(long)]
    overwrite: bool,
    /// Configuration overrides, e.g. `--lambda 0.1 --seeds 0,1,2`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

impl Common {
    /// Removes `--name value` or `--name=value` from the trailing overrides.
    /// Clap leaves every flag there once the first override has been seen.
    fn take(&mut self, name: &str) -> CliResult<Option<String>> {
        let flag = format!("--{name}");
        let mut found = None;
        let mut rest = Vec::new();
        let mut args = std::mem::take(&mut self.overrides).into_iter();
        while let Some(arg) = args.next() {
            if arg == flag {
                found = Some(args.next().ok_or_else(|| CliError::config(format!("{flag} needs a value")))?);
            } else if let Some(v) = arg.strip_prefix(&flag).and_then(|v| v.strip_prefix('=')) {
                found = Some(v.to_owned());
            } else {
                rest.push(arg);
            }
        }
        self.overrides = rest;
        Ok(found)
    }

    fn take_parsed<T: FromStr>(&mut self, name: &str, given: Option<T>) -> CliResult<Option<T>> {
        match self.take(name)? {
            None => Ok(given),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::config(format!("--{name}: invalid value {v:?}"))),
        }
    }

    fn resolve(mut self) -> CliResult<(ExperimentConfig, bool)> {
        let before = self.overrides.len();
        self.overrides.retain(|a| a != "--overwrite");
        let overwrite = self.overwrite || self.overrides.len() != before;
        let config = self.take_parsed("config", self.config.clone())?;
        let cfg = ExperimentConfig::resolve(config.as_deref(), &self.overrides)?;
        Ok((cfg, overwrite))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain a teacher and save its checkpoint.
    PretrainTeacher {
        /// Horizon to pretrain for; the first configured horizon by default.
        #[arg(long)]
        horizon: Option<usize>,
        /// Checkpoint path; `<out>/teacher_T<T>.rgm` by default.
        #[arg(long = "to")]
        to: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train every configured variant for every horizon and seed.
    Train {
        /// Worker threads for independent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Aggregate a run directory into report tables.
    Report {
        dir: PathBuf,
        /// Alignment metric for the main table.
        #[arg(long, default_value = "euclidean")]
        metric: Metric,
    },
    /// Finite-difference check of the training objective.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Evaluate a saved student on one split.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Write student (and teacher) embeddings for one split.
    ExportEmbeddings {
        /// Output file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::PretrainTeacher { horizon, to, mut common } => {
            let horizon = common.take_parsed("horizon", horizon)?;
            let to = common.take_parsed("to", to)?;
            let (cfg, overwrite) = common.resolve()?;
            commands::cmd_pretrain_teacher(&cfg, horizon, to, overwrite)?;
        }
        Command::Train { jobs, mut common } => {
            let jobs = common.take_parsed("jobs", Some(jobs))?.unwrap_or(1);
            let (cfg, overwrite) = common.resolve()?;
            for s in commands::cmd_train(&cfg, jobs, overwrite)? {
                println!(
                    "{} T={} seed={} {}: test mse {} mae {} ({} epochs)",
                    s.dataset,
                    s.horizon,
                    s.seed,
                    s.metric.map_or_else(|| "base".into(), |m| format!("reguider-{m}")),
                    fmt6(s.test_mse),
                    fmt6(s.test_mae),
                    s.epochs
                );
            }
        }
        Command::Report { dir, metric } => {
            let report = commands::cmd_report(&dir, metric)?;
            print!("{}", report.main_csv());
            if report.has_metric_table() {
                print!("\n{}", report.metric_csv());
            }
        }
        Command::Gradcheck { tol } => {
            commands::cmd_gradcheck(tol)?;
        }
        Command::Evaluate { common } => {
            commands::cmd_evaluate(&common.resolve()?.0)?;
        }
        Command::ExportEmbeddings { out, mut common } => {
            let out: PathBuf = common
                .take_parsed("out", out)?
                .ok_or_else(|| CliError::config("export-embeddings needs --out <file>"))?;
            let (cfg, overwrite) = common.resolve()?;
            commands::cmd_export_embeddings(&cfg, &out, overwrite)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
