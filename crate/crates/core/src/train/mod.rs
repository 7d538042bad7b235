//! Training loop, evaluation, gradient checking and embedding export.
//!
//! A training step runs the student and (when guided) the frozen teacher on
//! the same normalized look-back, builds `L_pred + lambda * L_tsra`, and
//! applies one Adam update to the student and projector only.

mod export;
mod gradcheck;
mod optim;

pub use export::{embedding_file, export_embeddings, student_embeddings};
pub use gradcheck::{check_reguider_loss, grad_check, CoordCheck, GradCheckOptions, GradCheckReport, LossCheck};
pub use optim::Adam;

use std::fmt::Write as _;

use crate::align::{total_loss, AlignmentConfig, AlignmentInputs, Projector};
use crate::dataset::{
    chronological_split, epoch_batches, instance_normalize, make_windows, MultivariateSeries, NormState, SplitSpec, WindowPair,
};
use crate::error::{Error, Result};
use crate::models::{NormBatch, StudentForecaster, TeacherHandle};
use crate::tensor::{ParamSet, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub alignment: AlignmentConfig,
    /// Epochs without validation improvement before stopping; 0 disables early stopping.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            alignment: AlignmentConfig::default(),
            early_stop_patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::contract(format!(
                "learning rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::contract("batch size must be at least 1"));
        }
        self.alignment.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
}

/// Train/validation/test windows.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSplits {
    pub train: Vec<WindowPair>,
    pub val: Vec<WindowPair>,
    pub test: Vec<WindowPair>,
}

impl WindowSplits {
    pub fn from_series(series: &MultivariateSeries, split: SplitSpec, lookback: usize, horizon: usize, stride: usize) -> Result<Self> {
        let parts = chronological_split(series, split, lookback)?;
        Ok(Self {
            train: make_windows(&parts.train, lookback, horizon, stride)?,
            val: make_windows(&parts.val, lookback, horizon, stride)?,
            test: make_windows(&parts.test, lookback, horizon, stride)?,
        })
    }

    /// Splits each series separately and pools the windows, in series order.
    pub fn from_pool(pool: &[MultivariateSeries], split: SplitSpec, lookback: usize, horizon: usize, stride: usize) -> Result<Self> {
        let mut out = Self {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for series in pool {
            let s = Self::from_series(series, split, lookback, horizon, stride)?;
            out.train.extend(s.train);
            out.val.extend(s.val);
            out.test.extend(s.test);
        }
        Ok(out)
    }
}

/// A stacked batch: normalized look-backs, raw targets and their normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `[B, C, L]`, instance-normalized.
    pub x: Tensor,
    /// `[B, C, T]`, data scale.
    pub y: Tensor,
    pub norm: NormBatch,
    /// Window origins.
    pub ids: Vec<u64>,
}

impl Batch {
    pub fn from_windows(windows: &[WindowPair], indices: &[usize]) -> Result<Self> {
        let first = indices
            .first()
            .map(|&i| &windows[i])
            .ok_or_else(|| Error::contract("empty batch"))?;
        let (c, l, t) = (first.channels(), first.lookback(), first.horizon());
        let b = indices.len();
        let mut x = Vec::with_capacity(b * c * l);
        let mut y = Vec::with_capacity(b * c * t);
        let mut states: Vec<NormState> = Vec::with_capacity(b);
        let mut ids = Vec::with_capacity(b);
        for &i in indices {
            let w = &windows[i];
            if (w.channels(), w.lookback(), w.horizon()) != (c, l, t) {
                return Err(Error::contract("windows in a batch must share one geometry"));
            }
            let (normalized, state) = instance_normalize(w);
            x.extend(normalized.x.iter().flatten());
            y.extend(w.y.iter().flatten());
            states.push(state);
            ids.push(w.origin as u64);
        }
        Ok(Self {
            x: Tensor::from_vec(vec![b, c, l], x)?,
            y: Tensor::from_vec(vec![b, c, t], y)?,
            norm: NormBatch::from_states(&states),
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// The frozen teacher and the trainable projector that maps into its space.
#[derive(Debug, Clone)]
pub struct Guidance<'a> {
    pub teacher: &'a TeacherHandle,
    pub projector: Projector,
}

impl<'a> Guidance<'a> {
    pub fn new(teacher: &'a TeacherHandle, student: &StudentForecaster, seed: u64) -> Result<Self> {
        Ok(Self {
            teacher,
            projector: Projector::new(student.d_f(), teacher.d_g(), seed)?,
        })
    }

    pub fn with_projector(teacher: &'a TeacherHandle, projector: Projector) -> Result<Self> {
        if projector.d_g() != teacher.d_g() {
            return Err(Error::contract(format!(
                "projector maps to width {}, teacher embeddings have width {}",
                projector.d_g(),
                teacher.d_g()
            )));
        }
        Ok(Self { teacher, projector })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub pred: f64,
    pub tsra: Option<f64>,
    pub total: f64,
    /// Largest gradient magnitude that reached a teacher parameter (0 when none did).
    pub teacher_grad_abs_max: f64,
}

fn finite(component: &'static str, value: f64, step: u64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            component,
            epoch: 0,
            step: step as usize,
        })
    }
}

/// One forward/backward pass and one optimizer update of student (and projector).
pub fn train_step(
    student: &mut StudentForecaster,
    guidance: Option<&mut Guidance<'_>>,
    batch: &Batch,
    optimizer: &mut Adam,
    cfg: &TrainConfig,
) -> Result<StepLosses> {
    if batch.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    let mut tape = Tape::new();
    let student_vars = student.bind(&mut tape);
    let x = tape.constant(&batch.x);
    let y = tape.constant(&batch.y);
    let (h_f, y_hat) = student.forward(&mut tape, &student_vars, x, &batch.norm)?;

    let step = optimizer.steps() + 1;
    let (terms, guided) = match guidance {
        Some(g) => {
            let teacher_out = g.teacher.encode(&mut tape, x, &batch.ids)?;
            let projector_vars = g.projector.bind(&mut tape);
            let inputs = AlignmentInputs {
                projector: &g.projector,
                projector_vars: &projector_vars,
                h_f,
                h_g: teacher_out.embedding,
            };
            let terms = total_loss(&mut tape, &cfg.alignment, y_hat, y, Some(inputs))?;
            (terms, Some((g, projector_vars, teacher_out.params)))
        }
        None => (total_loss(&mut tape, &cfg.alignment, y_hat, y, None)?, None),
    };

    let pred = finite("prediction loss", tape.scalar(terms.pred), step)?;
    let tsra = terms.tsra.map(|v| finite("alignment loss", tape.scalar(v), step)).transpose()?;
    let total = finite("total loss", tape.scalar(terms.total), step)?;

    let grads = tape.backward(terms.total)?;
    student.zero_grad();
    student.accumulate(&grads, &student_vars);

    let mut teacher_grad_abs_max = 0.0f64;
    match guided {
        Some((g, projector_vars, teacher_params)) => {
            for &v in &teacher_params {
                if let Some(gr) = grads.get(v) {
                    teacher_grad_abs_max = gr.iter().fold(teacher_grad_abs_max, |m, x| m.max(x.abs()));
                }
            }
            g.projector.params_mut().zero_grad();
            g.projector.accumulate(&grads, &projector_vars);
            let [enc, head] = student.param_sets_mut();
            optimizer.step(&mut [enc, head, g.projector.params_mut()]);
        }
        None => {
            let [enc, head] = student.param_sets_mut();
            optimizer.step(&mut [enc, head]);
        }
    }

    Ok(StepLosses {
        pred,
        tsra,
        total,
        teacher_grad_abs_max,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_pred: f64,
    pub train_tsra: Option<f64>,
    pub train_total: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub guided: bool,
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were restored, when early stopping is enabled.
    pub best_epoch: Option<usize>,
    pub steps: u64,
    pub test: Metrics,
    pub teacher_checksum_before: Option<String>,
    pub teacher_checksum_after: Option<String>,
}

impl RunRecord {
    /// Per-epoch log as CSV, full precision.
    pub fn epochs_csv(&self) -> String {
        let mut out = String::from("epoch,train_pred,train_tsra,train_total,val_mse\n");
        for e in &self.epochs {
            let tsra = e.train_tsra.map_or_else(String::new, |v| format!("{v:?}"));
            let _ = writeln!(out, "{},{:?},{},{:?},{:?}", e.epoch, e.train_pred, tsra, e.train_total, e.val_mse);
        }
        out
    }
}

struct Snapshot {
    val_mse: f64,
    epoch: usize,
    student: [ParamSet; 2],
    projector: Option<ParamSet>,
}

/// Trains for `cfg.epochs` epochs of shuffled mini-batches, tracking validation
/// MSE. With early stopping enabled the best-validation parameters are restored
/// before the test evaluation.
pub fn fit(
    student: &mut StudentForecaster,
    mut guidance: Option<&mut Guidance<'_>>,
    data: &WindowSplits,
    cfg: &TrainConfig,
) -> Result<RunRecord> {
    cfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() || data.test.is_empty() {
        return Err(Error::contract("train, validation and test windows must all be nonempty"));
    }
    let checksum_before = guidance.as_ref().map(|g| g.teacher.current_checksum());
    let mut optimizer = Adam::new(cfg.learning_rate);
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<Snapshot> = None;
    let mut stale = 0;

    for epoch in 0..cfg.epochs {
        let (mut pred, mut tsra, mut total, mut seen) = (0.0, 0.0, 0.0, 0usize);
        for (i, indices) in epoch_batches(data.train.len(), cfg.batch_size, cfg.seed, epoch as u64)
            .iter()
            .enumerate()
        {
            let batch = Batch::from_windows(&data.train, indices)?;
            let losses = train_step(student, guidance.as_deref_mut(), &batch, &mut optimizer, cfg).map_err(|e| match e {
                Error::NonFinite { component, .. } => Error::NonFinite { component, epoch, step: i },
                other => other,
            })?;
            let w = batch.len() as f64;
            pred += w * losses.pred;
            tsra += w * losses.tsra.unwrap_or(0.0);
            total += w * losses.total;
            seen += batch.len();
        }
        let n = seen as f64;
        let val_mse = evaluate(student, &data.val)?.mse;
        epochs.push(EpochLog {
            epoch,
            train_pred: pred / n,
            train_tsra: guidance.is_some().then_some(tsra / n),
            train_total: total / n,
            val_mse,
        });

        if cfg.early_stop_patience > 0 {
            if best.as_ref().is_none_or(|b| val_mse < b.val_mse) {
                best = Some(Snapshot {
                    val_mse,
                    epoch,
                    student: [student.encoder_params().clone(), student.head_params().clone()],
                    projector: guidance.as_ref().map(|g| g.projector.params().clone()),
                });
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.early_stop_patience {
                    break;
                }
            }
        }
    }

    let best_epoch = best.map(|snap| {
        let [enc, head] = snap.student;
        *student.encoder_params_mut() = enc;
        *student.head_params_mut() = head;
        if let (Some(g), Some(p)) = (guidance.as_deref_mut(), snap.projector) {
            *g.projector.params_mut() = p;
        }
        snap.epoch
    });
    student.zero_grad();

    let test = evaluate(student, &data.test)?;
    Ok(RunRecord {
        config: *cfg,
        guided: guidance.is_some(),
        epochs,
        best_epoch,
        steps: optimizer.steps(),
        test,
        teacher_checksum_after: guidance.as_ref().map(|g| g.teacher.current_checksum()),
        teacher_checksum_before: checksum_before,
    })
}

pub(crate) const EVAL_BATCH: usize = 256;

/// MSE and MAE of denormalized forecasts against raw targets, averaged over
/// every window, channel and horizon step. Takes no teacher.
pub fn evaluate(student: &StudentForecaster, windows: &[WindowPair]) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(Error::contract("cannot evaluate on zero windows"));
    }
    let (mut sq, mut abs, mut count) = (0.0, 0.0, 0usize);
    let indices: Vec<usize> = (0..windows.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let batch = Batch::from_windows(windows, chunk)?;
        let mut tape = Tape::new();
        let vars = student.bind_frozen(&mut tape);
        let x = tape.constant(&batch.x);
        let (_, y_hat) = student.forward(&mut tape, &vars, x, &batch.norm)?;
        for (p, t) in tape.value(y_hat).iter().zip(batch.y.data()) {
            let e = p - t;
            sq += e * e;
            abs += e.abs();
        }
        count += batch.y.len();
    }
    Ok(Metrics {
        mse: sq / count as f64,
        mae: abs / count as f64,
    })
}
