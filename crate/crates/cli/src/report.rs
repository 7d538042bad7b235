//! Per-run summaries and the aggregated results tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use reguider::align::Metric;

use crate::error::{CliError, CliResult};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const METRIC_REPORT_FILE: &str = "report_metrics.csv";

const SUMMARY_HEADER: &str = "dataset,variant,metric,horizon,seed,test_mse,test_mae,epochs,best_epoch,teacher_checksum";

/// Formats with 6 significant digits, trailing zeros trimmed.
pub fn fmt6(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s.to_owned()
        }
    };
    // The exponent after rounding to 6 digits decides the layout.
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if !(-4..6).contains(&exp) {
        return format!("{}e{exp}", trim(mantissa));
    }
    trim(&format!("{v:.*}", (5 - exp) as usize))
}

/// Outcome of one (variant, horizon, seed) run, as stored in `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dataset: String,
    /// `base` or `reguider`.
    pub variant: String,
    pub metric: Option<Metric>,
    pub horizon: usize,
    pub seed: u64,
    pub test_mse: f64,
    pub test_mae: f64,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub teacher_checksum: Option<String>,
}

impl RunSummary {
    /// Header plus one row; floats at full precision.
    pub fn to_csv(&self) -> String {
        format!(
            "{SUMMARY_HEADER}\n{},{},{},{},{},{:?},{:?},{},{},{}\n",
            self.dataset,
            self.variant,
            self.metric.map_or_else(|| "none".into(), |m| m.to_string()),
            self.horizon,
            self.seed,
            self.test_mse,
            self.test_mae,
            self.epochs,
            self.best_epoch.map_or_else(String::new, |e| e.to_string()),
            self.teacher_checksum.as_deref().unwrap_or(""),
        )
    }

    pub fn from_csv(text: &str, origin: &Path) -> CliResult<Self> {
        let bad = |what: &str| CliError::config(format!("{}: {what}", origin.display()));
        let mut lines = text.lines();
        if lines.next() != Some(SUMMARY_HEADER) {
            return Err(bad("unexpected summary header"));
        }
        let row = lines.next().ok_or_else(|| bad("missing summary row"))?;
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 10 {
            return Err(bad("summary row needs 10 fields"));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(&format!("field {} is not a number", i + 1)));
        let int = |i: usize| f[i].parse::<u64>().map_err(|_| bad(&format!("field {} is not an integer", i + 1)));
        Ok(Self {
            dataset: f[0].to_owned(),
            variant: f[1].to_owned(),
            metric: match f[2] {
                "none" => None,
                m => Some(m.parse().map_err(|_| bad("unknown metric"))?),
            },
            horizon: int(3)? as usize,
            seed: int(4)?,
            test_mse: num(5)?,
            test_mae: num(6)?,
            epochs: int(7)? as usize,
            best_epoch: if f[8].is_empty() { None } else { Some(int(8)? as usize) },
            teacher_checksum: (!f[9].is_empty()).then(|| f[9].to_owned()),
        })
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `(base - reguider) / base * 100`; positive when the guided run is better.
pub fn improvement_pct(base: f64, reguider: f64) -> f64 {
    (base - reguider) / base * 100.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mse: f64,
    pub mse_std: f64,
    pub mae: f64,
    pub mae_std: f64,
    pub seeds: usize,
}

impl Aggregate {
    fn of(runs: &[&RunSummary]) -> Self {
        let (mse, mse_std) = mean_std(&runs.iter().map(|r| r.test_mse).collect::<Vec<_>>());
        let (mae, mae_std) = mean_std(&runs.iter().map(|r| r.test_mae).collect::<Vec<_>>());
        Self {
            mse,
            mse_std,
            mae,
            mae_std,
            seeds: runs.len(),
        }
    }
}

/// One `(dataset, T)` row of the main table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub horizon: usize,
    pub base: Option<Aggregate>,
    pub reguider: Option<Aggregate>,
    pub metric: Option<Metric>,
}

impl ReportRow {
    pub fn improvement(&self) -> Option<(f64, f64)> {
        let (b, r) = (self.base?, self.reguider?);
        Some((improvement_pct(b.mse, r.mse), improvement_pct(b.mae, r.mae)))
    }
}

/// One `(dataset, T, metric)` row of the per-metric table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub dataset: String,
    pub horizon: usize,
    pub metric: Metric,
    pub reguider: Aggregate,
    pub base: Option<Aggregate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub metric_rows: Vec<MetricRow>,
}

pub const REPORT_HEADER: &str = "dataset,T,base_mse,base_mse_std,base_mae,base_mae_std,reguider_mse,reguider_mse_std,reguider_mae,reguider_mae_std,improvement_mse_pct,improvement_mae_pct";
pub const METRIC_REPORT_HEADER: &str =
    "dataset,T,metric,seeds,reguider_mse,reguider_mse_std,reguider_mae,reguider_mae_std,improvement_mse_pct,improvement_mae_pct";

fn cells(a: Option<Aggregate>) -> [String; 4] {
    match a {
        Some(a) => [fmt6(a.mse), fmt6(a.mse_std), fmt6(a.mae), fmt6(a.mae_std)],
        None => Default::default(),
    }
}

impl Report {
    /// Aggregates summaries over seeds. The main table pairs the base runs
    /// with the `preferred` metric, or the first metric present.
    pub fn build(summaries: &[RunSummary], preferred: Metric) -> CliResult<Self> {
        if summaries.is_empty() {
            return Err(CliError::config("no run summaries to report"));
        }
        type Key = (String, usize);
        let mut base: BTreeMap<Key, Vec<&RunSummary>> = BTreeMap::new();
        let mut guided: BTreeMap<Key, BTreeMap<Metric, Vec<&RunSummary>>> = BTreeMap::new();
        for s in summaries {
            let key = (s.dataset.clone(), s.horizon);
            match s.metric {
                None => base.entry(key).or_default().push(s),
                Some(m) => guided.entry(key).or_default().entry(m).or_default().push(s),
            }
        }
        let keys: std::collections::BTreeSet<Key> = base.keys().chain(guided.keys()).cloned().collect();
        let mut rows = Vec::new();
        let mut metric_rows = Vec::new();
        for key in keys {
            let b = base.get(&key).map(|runs| Aggregate::of(runs));
            let by_metric = guided.get(&key);
            let chosen = by_metric.and_then(|m| {
                m.get_key_value(&preferred)
                    .or_else(|| m.iter().next())
                    .map(|(metric, runs)| (*metric, Aggregate::of(runs)))
            });
            rows.push(ReportRow {
                dataset: key.0.clone(),
                horizon: key.1,
                base: b,
                reguider: chosen.map(|c| c.1),
                metric: chosen.map(|c| c.0),
            });
            for (metric, runs) in by_metric.into_iter().flatten() {
                metric_rows.push(MetricRow {
                    dataset: key.0.clone(),
                    horizon: key.1,
                    metric: *metric,
                    reguider: Aggregate::of(runs),
                    base: b,
                });
            }
        }
        Ok(Self { rows, metric_rows })
    }

    /// Whether any cell ran more than one alignment metric.
    pub fn has_metric_table(&self) -> bool {
        self.metric_rows.len() > self.rows.len()
    }

    pub fn main_csv(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        for r in &self.rows {
            let (imp_mse, imp_mae) = r.improvement().map_or((String::new(), String::new()), |(a, b)| (fmt6(a), fmt6(b)));
            let mut fields = vec![r.dataset.clone(), r.horizon.to_string()];
            fields.extend(cells(r.base));
            fields.extend(cells(r.reguider));
            fields.extend([imp_mse, imp_mae]);
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }

    pub fn metric_csv(&self) -> String {
        let mut out = format!("{METRIC_REPORT_HEADER}\n");
        for r in &self.metric_rows {
            let (imp_mse, imp_mae) = r.base.map_or((String::new(), String::new()), |b| {
                (
                    fmt6(improvement_pct(b.mse, r.reguider.mse)),
                    fmt6(improvement_pct(b.mae, r.reguider.mae)),
                )
            });
            let mut fields = vec![
                r.dataset.clone(),
                r.horizon.to_string(),
                r.metric.to_string(),
                r.reguider.seeds.to_string(),
            ];
            fields.extend(cells(Some(r.reguider)));
            fields.extend([imp_mse, imp_mae]);
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }
}

/// Reads `summary.csv` from every immediate subdirectory, in name order.
pub fn collect_summaries(dir: &Path) -> CliResult<Vec<RunSummary>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path().join(SUMMARY_FILE)))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            RunSummary::from_csv(&text, p)
        })
        .collect()
}
