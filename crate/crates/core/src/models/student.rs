use std::fmt;
use std::str::FromStr;

use super::{affine, patch_encode, Checkpoint, Geometry, Initializer, NormBatch};
use crate::error::{Error, Result};
use crate::tensor::{Gradients, ParamSet, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StudentKind {
    /// Flattened look-back, one affine map to `d_f`, relu.
    TwoStageLinear,
    /// Patch MLP encoder with mean pooling over patches and channels.
    PatchMlp,
}

impl fmt::Display for StudentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudentKind::TwoStageLinear => "two_stage_linear",
            StudentKind::PatchMlp => "patch_mlp",
        })
    }
}

impl FromStr for StudentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_stage_linear" => Ok(StudentKind::TwoStageLinear),
            "patch_mlp" => Ok(StudentKind::PatchMlp),
            other => Err(Error::contract(format!("unknown student kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudentConfig {
    pub kind: StudentKind,
    pub d_f: usize,
    /// Patch MLP hidden width; unused by the linear student.
    pub hidden: usize,
    pub patch_len: usize,
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            kind: StudentKind::TwoStageLinear,
            d_f: 64,
            hidden: 64,
            patch_len: 16,
        }
    }
}

/// Tape handles for one bound student.
#[derive(Debug, Clone)]
pub struct StudentVars {
    pub encoder: Vec<Var>,
    pub head: Vec<Var>,
}

/// A forecaster split into an encoder producing `H_f` and a head that sees only `H_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentForecaster {
    config: StudentConfig,
    geometry: Geometry,
    seed: u64,
    encoder: ParamSet,
    head: ParamSet,
}

impl StudentForecaster {
    pub fn new(config: StudentConfig, geometry: Geometry, seed: u64) -> Result<Self> {
        if config.d_f == 0 {
            return Err(Error::contract("student embedding width must be positive"));
        }
        let mut init = Initializer::new(seed, 0);
        let mut encoder = ParamSet::new();
        match config.kind {
            StudentKind::TwoStageLinear => {
                init.affine(&mut encoder, "enc.w", "enc.b", geometry.channels * geometry.lookback, config.d_f);
            }
            StudentKind::PatchMlp => {
                if config.patch_len == 0 || !geometry.lookback.is_multiple_of(config.patch_len) || config.hidden == 0 {
                    return Err(Error::contract(format!(
                        "patch_mlp needs hidden >= 1 and a patch length dividing L={} (got {})",
                        geometry.lookback, config.patch_len
                    )));
                }
                init.affine(&mut encoder, "enc.w1", "enc.b1", config.patch_len, config.hidden);
                init.affine(&mut encoder, "enc.w2", "enc.b2", config.hidden, config.d_f);
            }
        }
        let mut head = ParamSet::new();
        init.affine(&mut head, "head.w", "head.b", config.d_f, geometry.channels * geometry.horizon);
        Ok(Self {
            config,
            geometry,
            seed,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &StudentConfig {
        &self.config
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn d_f(&self) -> usize {
        self.config.d_f
    }

    pub fn encoder_params(&self) -> &ParamSet {
        &self.encoder
    }

    pub fn head_params(&self) -> &ParamSet {
        &self.head
    }

    pub fn encoder_params_mut(&mut self) -> &mut ParamSet {
        &mut self.encoder
    }

    pub fn head_params_mut(&mut self) -> &mut ParamSet {
        &mut self.head
    }

    /// Encoder then head parameter sets, the order the optimizer walks them.
    pub fn param_sets_mut(&mut self) -> [&mut ParamSet; 2] {
        [&mut self.encoder, &mut self.head]
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.encoder.flat_values();
        v.extend(self.head.flat_values());
        v
    }

    pub fn bind(&self, tape: &mut Tape) -> StudentVars {
        StudentVars {
            encoder: self.encoder.bind(tape),
            head: self.head.bind(tape),
        }
    }

    /// Binds all parameters as constants (inference).
    pub fn bind_frozen(&self, tape: &mut Tape) -> StudentVars {
        StudentVars {
            encoder: self.encoder.bind_frozen(tape),
            head: self.head.bind_frozen(tape),
        }
    }

    pub fn accumulate(&mut self, grads: &Gradients, vars: &StudentVars) {
        self.encoder.accumulate(grads, &vars.encoder);
        self.head.accumulate(grads, &vars.head);
    }

    pub fn zero_grad(&mut self) {
        self.encoder.zero_grad();
        self.head.zero_grad();
    }

    /// `[B, C, L]` normalized look-back to `H_f` of shape `[B, d_f]`.
    pub fn encode(&self, tape: &mut Tape, vars: &StudentVars, x: Var) -> Result<Var> {
        let batch = self.geometry.check_input(tape, x)?;
        match self.config.kind {
            StudentKind::TwoStageLinear => {
                let flat = tape.reshape(x, vec![batch, self.geometry.channels * self.geometry.lookback])?;
                let z = affine(tape, flat, vars.encoder[0], vars.encoder[1])?;
                Ok(tape.relu(z))
            }
            StudentKind::PatchMlp => patch_encode(tape, &vars.encoder, x, &self.geometry, self.config.patch_len, false),
        }
    }

    /// `H_f` to a denormalized `[B, C, T]` forecast.
    pub fn predict_head(&self, tape: &mut Tape, vars: &StudentVars, h_f: Var, norm: &NormBatch) -> Result<Var> {
        let shape = tape.shape(h_f).to_vec();
        if shape.len() != 2 || shape[1] != self.config.d_f {
            return Err(Error::shape("predict_head", &shape, &[0, self.config.d_f]));
        }
        let z = affine(tape, h_f, vars.head[0], vars.head[1])?;
        let y = tape.reshape(z, vec![shape[0], self.geometry.channels, self.geometry.horizon])?;
        norm.denormalize(tape, y)
    }

    /// Returns `(H_f, Y_hat)`.
    pub fn forward(&self, tape: &mut Tape, vars: &StudentVars, x: Var, norm: &NormBatch) -> Result<(Var, Var)> {
        let h_f = self.encode(tape, vars, x)?;
        let y_hat = self.predict_head(tape, vars, h_f, norm)?;
        Ok((h_f, y_hat))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set("role", "student");
        ck.set("kind", self.config.kind);
        ck.set("channels", self.geometry.channels);
        ck.set("lookback", self.geometry.lookback);
        ck.set("horizon", self.geometry.horizon);
        ck.set("d_f", self.config.d_f);
        ck.set("hidden", self.config.hidden);
        ck.set("patch_len", self.config.patch_len);
        ck.set("seed", self.seed);
        for (name, t) in self.encoder.iter().chain(self.head.iter()) {
            ck.params.push(name, t.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.get("role")? != "student" {
            return Err(Error::Format {
                kind: "RGM1",
                message: "checkpoint does not hold a student".into(),
            });
        }
        let config = StudentConfig {
            kind: ck.get("kind")?.parse()?,
            d_f: ck.parse("d_f")?,
            hidden: ck.parse("hidden")?,
            patch_len: ck.parse("patch_len")?,
        };
        let geometry = Geometry::new(ck.parse("channels")?, ck.parse("lookback")?, ck.parse("horizon")?)?;
        let mut student = Self::new(config, geometry, ck.parse("seed")?)?;
        for set in student.param_sets_mut() {
            ck.fill(set)?;
        }
        Ok(student)
    }
}
