//! Multivariate series loading, chronological splits, sliding windows and
//! per-window instance normalization.

mod synth;

pub use synth::SynthSpec;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Floor applied to the per-channel standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// `C` channels of `N` timesteps each, plus the absolute index of the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateSeries {
    names: Vec<String>,
    timestamps: Option<Vec<String>>,
    values: Vec<Vec<f64>>,
    offset: usize,
}

impl MultivariateSeries {
    pub fn new(names: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() || names.len() != values.len() {
            return Err(Error::contract(format!(
                "series needs at least one channel and one name per channel ({} names, {} channels)",
                names.len(),
                values.len()
            )));
        }
        let n = values[0].len();
        if n == 0 || values.iter().any(|c| c.len() != n) {
            return Err(Error::contract("series channels must be nonempty and equally long"));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::contract("series values must be finite"));
        }
        Ok(Self {
            names,
            timestamps: None,
            values,
            offset: 0,
        })
    }

    pub fn with_timestamps(mut self, timestamps: Vec<String>) -> Result<Self> {
        if timestamps.len() != self.len() {
            return Err(Error::contract("one timestamp per step required"));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    pub fn channels(&self) -> usize {
        self.values.len()
    }

    /// Number of timesteps.
    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Absolute timestep index of this series' first step in the source it was cut from.
    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Steps `start..end` (local indices), keeping absolute offsets.
    pub fn range(&self, start: usize, end: usize) -> MultivariateSeries {
        MultivariateSeries {
            names: self.names.clone(),
            timestamps: self.timestamps.as_ref().map(|t| t[start..end].to_vec()),
            values: self.values.iter().map(|c| c[start..end].to_vec()).collect(),
            offset: self.offset + start,
        }
    }
}

/// Reads a comma-separated file with one header row. When `has_timestamp_column`
/// is set the first column is kept as string labels and excluded from values.
pub fn load_csv(path: impl AsRef<Path>, has_timestamp_column: bool) -> Result<MultivariateSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };

    let header = reader.headers().map_err(csv_err)?.clone();
    let skip = usize::from(has_timestamp_column);
    if header.len() <= skip {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            message: "no data columns in header".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(skip).map(str::to_owned).collect();
    let mut values = vec![Vec::new(); names.len()];
    let mut timestamps = Vec::new();

    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err)?;
        if has_timestamp_column {
            timestamps.push(record[0].to_owned());
        }
        for (c, cell) in record.iter().skip(skip).enumerate() {
            let parsed = cell.parse::<f64>().ok().filter(|v| v.is_finite());
            let Some(v) = parsed else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    column: c + skip + 1,
                    message: format!("{cell:?} is not a finite number"),
                });
            };
            values[c].push(v);
        }
    }
    if values[0].is_empty() {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            message: "file has no data rows".into(),
        });
    }
    let series = MultivariateSeries::new(names, values)?;
    if has_timestamp_column {
        series.with_timestamps(timestamps)
    } else {
        Ok(series)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let spec = Self { train, val, test };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fracs = [self.train, self.val, self.test];
        if fracs.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::contract(format!("split fractions must be nonnegative, got {fracs:?}")));
        }
        let total: f64 = fracs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::contract(format!("split fractions must sum to 1, got {total}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: MultivariateSeries,
    pub val: MultivariateSeries,
    pub test: MultivariateSeries,
    /// Context steps prepended to `val` and `test`.
    pub context: usize,
}

/// Contiguous train/val/test segments. Validation and test are prefixed with
/// the last `lookback` steps of the preceding segment.
pub fn chronological_split(s: &MultivariateSeries, spec: SplitSpec, lookback: usize) -> Result<Splits> {
    spec.validate()?;
    let n = s.len();
    let train_end = (n as f64 * spec.train).round() as usize;
    let val_end = ((n as f64 * (spec.train + spec.val)).round() as usize).min(n);
    let core = [train_end, val_end - train_end, n - val_end];
    if core[0] < lookback + 1 || core[1] == 0 || core[2] == 0 {
        return Err(Error::contract(format!(
            "split of {n} steps gives segments {core:?}; each needs at least {} steps with context",
            lookback + 1
        )));
    }
    Ok(Splits {
        train: s.range(0, train_end),
        val: s.range(train_end - lookback, val_end),
        test: s.range(val_end - lookback, n),
        context: lookback,
    })
}

/// One training example: look-back `x` (C x L) and the adjacent horizon `y` (C x T).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    /// Absolute timestep of `x[.][0]`.
    pub origin: usize,
}

impl WindowPair {
    pub fn channels(&self) -> usize {
        self.x.len()
    }

    pub fn lookback(&self) -> usize {
        self.x[0].len()
    }

    pub fn horizon(&self) -> usize {
        self.y[0].len()
    }
}

pub fn window_count(n: usize, lookback: usize, horizon: usize, stride: usize) -> usize {
    if n < lookback + horizon || stride == 0 {
        0
    } else {
        (n - lookback - horizon) / stride + 1
    }
}

pub fn make_windows(s: &MultivariateSeries, lookback: usize, horizon: usize, stride: usize) -> Result<Vec<WindowPair>> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(Error::contract(format!(
            "lookback, horizon and stride must be positive (got {lookback}, {horizon}, {stride})"
        )));
    }
    let n = s.len();
    if n < lookback + horizon {
        return Err(Error::EmptyDataset { n, lookback, horizon });
    }
    let count = window_count(n, lookback, horizon, stride);
    Ok((0..count)
        .map(|k| {
            let start = k * stride;
            WindowPair {
                x: s.values.iter().map(|c| c[start..start + lookback].to_vec()).collect(),
                y: s.values
                    .iter()
                    .map(|c| c[start + lookback..start + lookback + horizon].to_vec())
                    .collect(),
                origin: s.offset + start,
            }
        })
        .collect())
}

/// Per-channel look-back statistics used to z-score a window.
#[derive(Debug, Clone, PartialEq)]
pub struct NormState {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormState {
    pub fn from_lookback(x: &[Vec<f64>]) -> Self {
        let (mean, std) = x
            .iter()
            .map(|c| {
                let n = c.len() as f64;
                let m = c.iter().sum::<f64>() / n;
                let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                (m, var.sqrt().max(STD_FLOOR))
            })
            .unzip();
        Self { mean, std }
    }

    pub fn normalize(&self, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
        v.iter()
            .enumerate()
            .map(|(c, ch)| ch.iter().map(|x| (x - self.mean[c]) / self.std[c]).collect())
            .collect()
    }

    pub fn denormalize(&self, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
        v.iter()
            .enumerate()
            .map(|(c, ch)| ch.iter().map(|x| x * self.std[c] + self.mean[c]).collect())
            .collect()
    }
}

/// Normalizes both halves of a window with statistics taken from `x` only.
pub fn instance_normalize(w: &WindowPair) -> (WindowPair, NormState) {
    let state = NormState::from_lookback(&w.x);
    let normalized = WindowPair {
        x: state.normalize(&w.x),
        y: state.normalize(&w.y),
        origin: w.origin,
    };
    (normalized, state)
}

/// Shuffled index batches for one epoch; the permutation depends only on `(seed, epoch)`.
/// The final partial batch is kept.
pub fn epoch_batches(n_windows: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut order: Vec<usize> = (0..n_windows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}
