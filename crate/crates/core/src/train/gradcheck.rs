use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Batch, TrainConfig};
use crate::align::{total_loss, AlignmentInputs, Projector};
use crate::error::{Error, Result};
use crate::models::{StudentForecaster, TeacherHandle};
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Largest accepted relative error.
    pub tol: f64,
    /// Coordinates checked at most; larger parameter sets are sampled.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            max_coords: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordCheck {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub worst: Option<CoordCheck>,
    pub passed: bool,
    /// Set when a loss or gradient was not finite.
    pub failure: Option<String>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.worst.map_or(0.0, |w| w.rel_error)
    }
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares analytic gradients against central differences.
///
/// `loss` maps parameter tensors to `(loss, gradient per tensor)`. Up to
/// `max_coords` coordinates are checked, sampled deterministically from
/// `seed` when there are more.
pub fn grad_check<F>(params: &[Tensor], mut loss: F, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor]) -> Result<(f64, Vec<Vec<f64>>)>,
{
    if opts.h.is_nan() || opts.h <= 0.0 {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    let (value, analytic) = loss(params)?;
    if analytic.len() != params.len() || analytic.iter().zip(params).any(|(g, p)| g.len() != p.len()) {
        return Err(Error::contract("gradient layout does not match parameters"));
    }
    let mut report = GradCheckReport {
        checked: 0,
        worst: None,
        passed: false,
        failure: None,
    };
    if !value.is_finite() {
        report.failure = Some(format!("loss is not finite ({value})"));
        return Ok(report);
    }

    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(t, p)| (0..p.len()).map(move |i| (t, i)))
        .collect();
    let chosen: Vec<(usize, usize)> = if coords.len() <= opts.max_coords {
        coords
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut picks = rand::seq::index::sample(&mut rng, coords.len(), opts.max_coords).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(|k| coords[k]).collect()
    };

    let mut work = params.to_vec();
    for (t, i) in chosen {
        let original = work[t].data()[i];
        work[t].data_mut()[i] = original + opts.h;
        let (plus, _) = loss(&work)?;
        work[t].data_mut()[i] = original - opts.h;
        let (minus, _) = loss(&work)?;
        work[t].data_mut()[i] = original;

        let numeric = (plus - minus) / (2.0 * opts.h);
        let a = analytic[t][i];
        if !(numeric.is_finite() && a.is_finite()) {
            report.failure = Some(format!(
                "non-finite gradient at tensor {t} index {i} (analytic {a}, numeric {numeric})"
            ));
            return Ok(report);
        }
        let check = CoordCheck {
            tensor: t,
            index: i,
            analytic: a,
            numeric,
            rel_error: relative_error(a, numeric),
        };
        report.checked += 1;
        if report.worst.is_none_or(|w| check.rel_error > w.rel_error) {
            report.worst = Some(check);
        }
    }
    report.passed = report.max_rel_error() < opts.tol;
    Ok(report)
}

/// Gradient check of the full guided objective over student and projector
/// parameters, plus the largest gradient that reached the teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCheck {
    pub report: GradCheckReport,
    /// Parameter tensors in check order: encoder, head, projector.
    pub names: Vec<String>,
    pub teacher_grad_abs_max: f64,
}

pub fn check_reguider_loss(
    student: &StudentForecaster,
    teacher: &TeacherHandle,
    projector: &Projector,
    batch: &Batch,
    cfg: &TrainConfig,
    opts: GradCheckOptions,
) -> Result<LossCheck> {
    let names: Vec<String> = student
        .encoder_params()
        .iter()
        .chain(student.head_params().iter())
        .chain(projector.params().iter())
        .map(|(n, _)| n.to_owned())
        .collect();
    let params: Vec<Tensor> = student
        .encoder_params()
        .tensors()
        .chain(student.head_params().tensors())
        .chain(projector.params().tensors())
        .cloned()
        .collect();
    let mut teacher_grad_abs_max = 0.0f64;
    let mut evaluate = |values: &[Tensor]| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut s = student.clone();
        let mut p = projector.clone();
        let [enc, head] = s.param_sets_mut();
        for (dst, src) in enc
            .tensors_mut()
            .chain(head.tensors_mut())
            .chain(p.params_mut().tensors_mut())
            .zip(values)
        {
            *dst = src.clone();
        }
        let mut tape = Tape::new();
        let svars = s.bind(&mut tape);
        let pvars = p.bind(&mut tape);
        let x = tape.constant(&batch.x);
        let y = tape.constant(&batch.y);
        let (h_f, y_hat) = s.forward(&mut tape, &svars, x, &batch.norm)?;
        let teacher_out = teacher.encode(&mut tape, x, &batch.ids)?;
        let inputs = AlignmentInputs {
            projector: &p,
            projector_vars: &pvars,
            h_f,
            h_g: teacher_out.embedding,
        };
        let terms = total_loss(&mut tape, &cfg.alignment, y_hat, y, Some(inputs))?;
        let grads = tape.backward(terms.total)?;
        for &v in &teacher_out.params {
            if let Some(g) = grads.get(v) {
                teacher_grad_abs_max = g.iter().fold(teacher_grad_abs_max, |m, x| m.max(x.abs()));
            }
        }
        let vars = svars.encoder.iter().chain(&svars.head).chain(&pvars);
        let per_tensor = vars.zip(values).map(|(&v, t)| grads.get_or_zeros(v, t.len())).collect();
        Ok((tape.scalar(terms.total), per_tensor))
    };
    let report = grad_check(&params, &mut evaluate, opts)?;
    Ok(LossCheck {
        report,
        names,
        teacher_grad_abs_max,
    })
}
