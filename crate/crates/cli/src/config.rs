//! Flat `key=value` experiment configuration.
//!
//! A config file holds one `key = value` per line; `#` starts a comment.
//! Command-line overrides take the forms `--key=value`, `--key value` and
//! `--flag` (meaning `true`). Dashes in keys are read as underscores.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use reguider::align::{AlignmentConfig, Metric};
use reguider::dataset::{load_csv, MultivariateSeries, SplitSpec, SynthSpec};
use reguider::models::{StudentConfig, StudentKind, TeacherConfig, TeacherLayer};
use reguider::train::TrainConfig;

use crate::error::{CliError, CliResult};

/// Every recognized key with its default.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("dataset", "synth"),
    ("dataset_name", ""),
    ("timestamp_column", "false"),
    ("lookback", "96"),
    ("horizons", "96"),
    ("stride", "1"),
    ("split", "0.7,0.1,0.2"),
    ("student", "two_stage_linear"),
    ("d_f", "64"),
    ("hidden", "64"),
    ("patch_len", "16"),
    ("teacher", "pretrain"),
    ("teacher_path", ""),
    ("teacher_data", ""),
    ("teacher_pool", "1"),
    ("teacher_stride", ""),
    ("d_g", "128"),
    ("teacher_hidden", "128"),
    ("teacher_patch_len", "16"),
    ("teacher_layer", "output"),
    ("teacher_epochs", "50"),
    ("teacher_lr", "0.001"),
    ("teacher_seed", "0"),
    ("variants", "base,reguider"),
    ("metrics", "euclidean"),
    ("lambda", "0.5"),
    ("learning_rate", "0.001"),
    ("epochs", "50"),
    ("batch_size", "32"),
    ("patience", "5"),
    ("seeds", "0"),
    ("out", "runs"),
    ("report_metric", "euclidean"),
    ("checkpoint", ""),
    ("export_split", "test"),
];

/// Raw key/value pairs before typing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl Default for ConfigMap {
    fn default() -> Self {
        Self {
            entries: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl ConfigMap {
    pub fn get(&self, key: &str) -> &str {
        self.entries.get(key).map_or("", String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> CliResult<()> {
        let key = normalize_key(key);
        match self.entries.get_mut(&key) {
            Some(slot) => {
                *slot = value.into();
                Ok(())
            }
            None => Err(CliError::config(format!("unknown key {key:?}"))),
        }
    }

    pub fn parse_text(&mut self, text: &str) -> CliResult<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
            self.set(key, value.trim())
                .map_err(|e| CliError::config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.parse_text(&text)
    }

    pub fn apply_overrides(&mut self, args: &[String]) -> CliResult<()> {
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let body = arg
                .strip_prefix("--")
                .ok_or_else(|| CliError::config(format!("unexpected argument {arg:?}")))?;
            if let Some((key, value)) = body.split_once('=') {
                self.set(key, value)?;
            } else if i + 1 < args.len() && !args[i + 1].starts_with("--") {
                self.set(body, args[i + 1].as_str())?;
                i += 1;
            } else {
                self.set(body, "true")?;
            }
            i += 1;
        }
        Ok(())
    }

    /// One `key = value` line per key, in key order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Csv { path: PathBuf, timestamp_column: bool },
    Synth(SynthSpec),
}

impl DatasetSource {
    fn parse(text: &str, timestamp_column: bool) -> CliResult<Self> {
        if text == "synth" || text.starts_with("synth:") {
            Ok(DatasetSource::Synth(SynthSpec::parse(text)?))
        } else {
            Ok(DatasetSource::Csv {
                path: PathBuf::from(text),
                timestamp_column,
            })
        }
    }

    pub fn load(&self) -> CliResult<MultivariateSeries> {
        match self {
            DatasetSource::Csv { path, timestamp_column } => {
                if !path.exists() {
                    return Err(CliError::config(format!("dataset {} does not exist", path.display())));
                }
                Ok(load_csv(path, *timestamp_column)?)
            }
            DatasetSource::Synth(spec) => Ok(spec.generate()?),
        }
    }

    fn default_name(&self) -> String {
        match self {
            DatasetSource::Csv { path, .. } => path.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned()),
            DatasetSource::Synth(_) => "synth".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TeacherSpec {
    Pretrain,
    Checkpoint(PathBuf),
    Cache(PathBuf),
}

/// Base sorts first, then guided variants in metric order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Base,
    Reguider(Metric),
}

impl Variant {
    /// Directory-safe label: `base` or `reguider-<metric>`.
    pub fn label(&self) -> String {
        match self {
            Variant::Base => "base".into(),
            Variant::Reguider(m) => format!("reguider-{m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub dataset_name: String,
    pub lookback: usize,
    pub horizons: Vec<usize>,
    pub stride: usize,
    pub split: SplitSpec,
    pub student: StudentConfig,
    pub teacher: TeacherSpec,
    /// Series used for teacher pretraining; the experiment dataset when absent.
    pub teacher_data: Option<DatasetSource>,
    /// Independent draws of a synthetic `teacher_data`, seeds counting up.
    pub teacher_pool: usize,
    /// Window stride for teacher pretraining.
    pub teacher_stride: usize,
    pub teacher_config: TeacherConfig,
    pub teacher_train: TrainConfig,
    pub variants: Vec<Variant>,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub report_metric: Metric,
    pub checkpoint: Option<PathBuf>,
    pub export_split: String,
    /// Resolved key/value snapshot.
    pub raw: ConfigMap,
}

fn value<T: FromStr>(map: &ConfigMap, key: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    let text = map.get(key);
    text.parse().map_err(|e| CliError::config(format!("{key} = {text:?}: {e}")))
}

fn list<T: FromStr>(map: &ConfigMap, key: &str) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    map.get(key)
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| CliError::config(format!("{key}: {s:?}: {e}"))))
        .collect()
}

fn optional_path(map: &ConfigMap, key: &str) -> Option<PathBuf> {
    let v = map.get(key).trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl ExperimentConfig {
    /// Defaults, then the optional file, then command-line overrides.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut map = ConfigMap::default();
        if let Some(path) = file {
            map.load_file(path)?;
        }
        map.apply_overrides(overrides)?;
        Self::from_map(map)
    }

    pub fn from_map(map: ConfigMap) -> CliResult<Self> {
        let timestamp_column: bool = value(&map, "timestamp_column")?;
        let dataset = DatasetSource::parse(map.get("dataset").trim(), timestamp_column)?;
        let dataset_name = match map.get("dataset_name").trim() {
            "" => dataset.default_name(),
            name => name.to_owned(),
        };

        let split: Vec<f64> = list(&map, "split")?;
        let split = match split[..] {
            [train, val, test] => SplitSpec::new(train, val, test)?,
            _ => return Err(CliError::config("split needs three fractions: train,val,test")),
        };

        let student = StudentConfig {
            kind: value::<StudentKind>(&map, "student")?,
            d_f: value(&map, "d_f")?,
            hidden: value(&map, "hidden")?,
            patch_len: value(&map, "patch_len")?,
        };

        let teacher = match map.get("teacher").trim() {
            "pretrain" => TeacherSpec::Pretrain,
            kind @ ("checkpoint" | "cache") => {
                let path =
                    optional_path(&map, "teacher_path").ok_or_else(|| CliError::config(format!("teacher = {kind} needs teacher_path")))?;
                if kind == "checkpoint" {
                    TeacherSpec::Checkpoint(path)
                } else {
                    TeacherSpec::Cache(path)
                }
            }
            other => {
                return Err(CliError::config(format!(
                    "teacher must be pretrain, checkpoint or cache, got {other:?}"
                )))
            }
        };
        let teacher_data = match map.get("teacher_data").trim() {
            "" => None,
            text => Some(DatasetSource::parse(text, timestamp_column)?),
        };
        let teacher_pool: usize = value(&map, "teacher_pool")?;
        if teacher_pool == 0 {
            return Err(CliError::config("teacher_pool must be at least 1"));
        }
        let teacher_config = TeacherConfig {
            d_g: value(&map, "d_g")?,
            hidden: value(&map, "teacher_hidden")?,
            patch_len: value(&map, "teacher_patch_len")?,
            layer: value::<TeacherLayer>(&map, "teacher_layer")?,
        };

        let metrics: Vec<Metric> = list(&map, "metrics")?;
        let lambda: f64 = value(&map, "lambda")?;
        let train = TrainConfig {
            learning_rate: value(&map, "learning_rate")?,
            epochs: value(&map, "epochs")?,
            batch_size: value(&map, "batch_size")?,
            seed: 0,
            alignment: AlignmentConfig {
                metric: metrics.first().copied().unwrap_or(Metric::Euclidean),
                lambda,
            },
            early_stop_patience: value(&map, "patience")?,
        };
        train.validate()?;
        let teacher_train = TrainConfig {
            learning_rate: value(&map, "teacher_lr")?,
            epochs: value(&map, "teacher_epochs")?,
            seed: value(&map, "teacher_seed")?,
            ..train
        };
        teacher_train.validate()?;

        let mut variants = Vec::new();
        for v in list::<String>(&map, "variants")? {
            match v.as_str() {
                "base" => variants.push(Variant::Base),
                "reguider" => {
                    if metrics.is_empty() {
                        return Err(CliError::config("the reguider variant needs at least one metric"));
                    }
                    variants.extend(metrics.iter().map(|&m| Variant::Reguider(m)));
                }
                other => return Err(CliError::config(format!("unknown variant {other:?}"))),
            }
        }
        variants.sort();
        variants.dedup();

        let cfg = Self {
            dataset,
            dataset_name,
            lookback: value(&map, "lookback")?,
            horizons: list(&map, "horizons")?,
            stride: value(&map, "stride")?,
            split,
            student,
            teacher,
            teacher_data,
            teacher_pool,
            teacher_stride: match map.get("teacher_stride").trim() {
                "" => value(&map, "stride")?,
                _ => value(&map, "teacher_stride")?,
            },
            teacher_config,
            teacher_train,
            variants,
            train,
            seeds: list(&map, "seeds")?,
            out: PathBuf::from(map.get("out")),
            report_metric: value(&map, "report_metric")?,
            checkpoint: optional_path(&map, "checkpoint"),
            export_split: map.get("export_split").trim().to_owned(),
            raw: map,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        if self.horizons.is_empty() {
            return Err(CliError::config("horizons must list at least one horizon"));
        }
        if self.seeds.is_empty() {
            return Err(CliError::config("seeds must list at least one seed"));
        }
        if self.lookback == 0 || self.stride == 0 || self.teacher_stride == 0 || self.horizons.contains(&0) {
            return Err(CliError::config("lookback, stride and horizons must be positive"));
        }
        if self.variants.is_empty() {
            return Err(CliError::config("no variants selected"));
        }
        if !matches!(self.export_split.as_str(), "train" | "val" | "test") {
            return Err(CliError::config("export_split must be train, val or test"));
        }
        if let DatasetSource::Csv { path, .. } = &self.dataset {
            if !path.exists() {
                return Err(CliError::config(format!("dataset {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn guided(&self) -> bool {
        self.variants.iter().any(|v| matches!(v, Variant::Reguider(_)))
    }

    /// Checks that the teacher source is usable. Only needed by guided runs.
    pub fn validate_teacher(&self) -> CliResult<()> {
        match &self.teacher {
            TeacherSpec::Checkpoint(p) | TeacherSpec::Cache(p) if !p.exists() => {
                Err(CliError::config(format!("teacher_path {} does not exist", p.display())))
            }
            _ => {
                if let Some(DatasetSource::Csv { path, .. }) = &self.teacher_data {
                    if !path.exists() {
                        return Err(CliError::config(format!("teacher_data {} does not exist", path.display())));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn train_config(&self, variant: Variant, seed: u64) -> TrainConfig {
        let mut cfg = self.train;
        cfg.seed = seed;
        match variant {
            Variant::Base => cfg.alignment.lambda = 0.0,
            Variant::Reguider(m) => cfg.alignment.metric = m,
        }
        cfg
    }
}
