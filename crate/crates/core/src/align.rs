//! Representation alignment: distance functions between student and teacher
//! embeddings, the learnable projection from student to teacher width, and
//! the composite training objective.
//!
//! Every distance is computed row-wise over `[B, d]` batches, so a single
//! pair is just the `B = 1` case:
//!
//! | metric      | value for one pair `(a, b)`                        |
//! |-------------|----------------------------------------------------|
//! | `euclidean` | `‖a − b‖²`                                         |
//! | `cosine`    | `1 − a·b / (max(‖a‖, ε) · max(‖b‖, ε))`            |
//! | `kl`        | `Σ p (ln p − ln q)`, `p = softmax(a)`, `q = softmax(b)` |
//!
//! The teacher side is expected to arrive already wrapped in
//! [`Tape::stop_gradient`]; only the student embedding and the projector
//! receive gradient from these losses.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::models::Initializer;
use crate::tensor::{Gradients, ParamSet, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Euclidean,
    Cosine,
    Kl,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Euclidean, Metric::Cosine, Metric::Kl];
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
            Metric::Kl => "kl",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            "kl" => Ok(Metric::Kl),
            other => Err(Error::contract(format!(
                "unknown metric {other:?} (expected euclidean, cosine or kl)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentConfig {
    pub metric: Metric,
    /// Weight of the alignment term in the total loss.
    pub lambda: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            metric: Metric::Euclidean,
            lambda: 0.5,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::contract(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Affine map from the student embedding width `d_f` to the teacher width `d_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    params: ParamSet,
    d_f: usize,
    d_g: usize,
}

impl Projector {
    pub fn new(d_f: usize, d_g: usize, seed: u64) -> Result<Self> {
        if d_f == 0 || d_g == 0 {
            return Err(Error::contract("projector widths must be positive"));
        }
        let mut params = ParamSet::new();
        Initializer::new(seed, 1).affine(&mut params, "proj.w", "proj.b", d_f, d_g);
        Ok(Self { params, d_f, d_g })
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (ws, bs) = (weight.shape().to_vec(), bias.shape().to_vec());
        if ws.len() != 2 || bs.len() != 1 || bs[0] != ws[1] {
            return Err(Error::shape("projector", &ws, &bs));
        }
        let mut params = ParamSet::new();
        params.push("proj.w", weight);
        params.push("proj.b", bias);
        Ok(Self {
            params,
            d_f: ws[0],
            d_g: ws[1],
        })
    }

    pub fn identity(d: usize) -> Result<Self> {
        let mut w = Tensor::zeros(vec![d, d]);
        (0..d).for_each(|i| w.data_mut()[i * d + i] = 1.0);
        Self::from_parts(w, Tensor::zeros(vec![d]))
    }

    pub fn d_f(&self) -> usize {
        self.d_f
    }

    pub fn d_g(&self) -> usize {
        self.d_g
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.bind(tape)
    }

    pub fn accumulate(&mut self, grads: &Gradients, vars: &[Var]) {
        self.params.accumulate(grads, vars);
    }

    /// `h_f @ W + b`.
    pub fn project(&self, tape: &mut Tape, vars: &[Var], h_f: Var) -> Result<Var> {
        let shape = tape.shape(h_f);
        if shape.len() != 2 || shape[1] != self.d_f {
            return Err(Error::shape("project", shape, &[0, self.d_f]));
        }
        crate::models::affine(tape, h_f, vars[0], vars[1])
    }
}

/// Row-wise distance between `a` and `b` (same shape); drops the last axis.
pub fn sim_rows(tape: &mut Tape, metric: Metric, a: Var, b: Var) -> Result<Var> {
    let (sa, sb) = (tape.shape(a), tape.shape(b));
    if sa != sb || sa.is_empty() {
        return Err(Error::shape("sim", sa, sb));
    }
    let last = sa.len() - 1;
    match metric {
        Metric::Euclidean => {
            let diff = tape.sub(a, b)?;
            Ok(tape.sq_norm(diff))
        }
        Metric::Cosine => {
            let prod = tape.mul(a, b)?;
            let dot = tape.sum_axis(prod, last)?;
            let na = tape.norm(a);
            let nb = tape.norm(b);
            let q = tape.div(dot, na)?;
            let q = tape.div(q, nb)?;
            Ok(tape.affine(q, -1.0, 1.0))
        }
        Metric::Kl => {
            if sa[last] < 2 {
                return Err(Error::contract("kl alignment needs embeddings of width >= 2"));
            }
            let p = tape.softmax(a)?;
            let q = tape.softmax(b)?;
            let lp = tape.log(p);
            let lq = tape.log(q);
            let diff = tape.sub(lp, lq)?;
            let terms = tape.mul(p, diff)?;
            tape.sum_axis(terms, last)
        }
    }
}

/// Distance between two vectors, evaluated on a throwaway tape.
pub fn sim(metric: Metric, h1: &[f64], h2: &[f64]) -> Result<f64> {
    if h1.len() != h2.len() || h1.is_empty() {
        return Err(Error::shape("sim", &[h1.len()], &[h2.len()]));
    }
    let mut tape = Tape::new();
    let a = tape.constant_from(vec![h1.len()], h1.to_vec())?;
    let b = tape.constant_from(vec![h2.len()], h2.to_vec())?;
    let s = sim_rows(&mut tape, metric, a, b)?;
    Ok(tape.scalar(s))
}

pub fn sim_euclidean(h1: &[f64], h2: &[f64]) -> Result<f64> {
    sim(Metric::Euclidean, h1, h2)
}

pub fn sim_cosine(h1: &[f64], h2: &[f64]) -> Result<f64> {
    sim(Metric::Cosine, h1, h2)
}

pub fn sim_kl(h1: &[f64], h2: &[f64]) -> Result<f64> {
    sim(Metric::Kl, h1, h2)
}

/// Batch mean of `sim(project(h_f[i]), h_g[i])`.
pub fn tsra_loss(tape: &mut Tape, metric: Metric, projector: &Projector, projector_vars: &[Var], h_f: Var, h_g: Var) -> Result<Var> {
    let (sf, sg) = (tape.shape(h_f), tape.shape(h_g));
    if sf.len() != 2 || sg.len() != 2 || sf[0] != sg[0] {
        return Err(Error::shape("tsra_loss", sf, sg));
    }
    let projected = projector.project(tape, projector_vars, h_f)?;
    let per_window = sim_rows(tape, metric, projected, h_g)?;
    Ok(tape.mean(per_window))
}

/// Mean squared error over every entry.
pub fn pred_loss_mse(tape: &mut Tape, y_hat: Var, y: Var) -> Result<Var> {
    let diff = tape.sub(y_hat, y)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean(sq))
}

/// Student side of the alignment term: projector and the embeddings to align.
pub struct AlignmentInputs<'a> {
    pub projector: &'a Projector,
    pub projector_vars: &'a [Var],
    pub h_f: Var,
    /// Teacher embedding, already stop-gradient wrapped.
    pub h_g: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub pred: Var,
    pub tsra: Option<Var>,
    pub total: Var,
}

/// `L_pred + lambda * L_tsra`; without alignment inputs the total is `L_pred` itself.
pub fn total_loss(tape: &mut Tape, cfg: &AlignmentConfig, y_hat: Var, y: Var, alignment: Option<AlignmentInputs<'_>>) -> Result<LossTerms> {
    cfg.validate()?;
    let pred = pred_loss_mse(tape, y_hat, y)?;
    let Some(a) = alignment else {
        return Ok(LossTerms {
            pred,
            tsra: None,
            total: pred,
        });
    };
    let tsra = tsra_loss(tape, cfg.metric, a.projector, a.projector_vars, a.h_f, a.h_g)?;
    let weighted = tape.scale(tsra, cfg.lambda);
    let total = tape.add(pred, weighted)?;
    Ok(LossTerms {
        pred,
        tsra: Some(tsra),
        total,
    })
}
