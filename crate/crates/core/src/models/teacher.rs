use std::fmt;
use std::str::FromStr;

use super::{param_digest, patch_encode, Checkpoint, Geometry, StudentConfig, StudentForecaster, StudentKind};
use crate::dataset::{MultivariateSeries, SplitSpec};
use crate::embeddings::EmbeddingCache;
use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Tape, Var};
use crate::train::{fit, RunRecord, TrainConfig, WindowSplits};

/// Which activation of the desk teacher's encoder is exposed as `H_g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeacherLayer {
    /// Pooled hidden activations (width = hidden).
    Hidden,
    /// Pooled final encoder output (width = d_g).
    Output,
}

impl fmt::Display for TeacherLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TeacherLayer::Hidden => "hidden",
            TeacherLayer::Output => "output",
        })
    }
}

impl FromStr for TeacherLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hidden" => Ok(TeacherLayer::Hidden),
            "output" => Ok(TeacherLayer::Output),
            other => Err(Error::contract(format!("unknown teacher layer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TeacherConfig {
    /// Encoder output width.
    pub d_g: usize,
    pub hidden: usize,
    pub patch_len: usize,
    pub layer: TeacherLayer,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            d_g: 128,
            hidden: 128,
            patch_len: 16,
            layer: TeacherLayer::Output,
        }
    }
}

impl TeacherConfig {
    /// Width of the exposed embedding.
    pub fn embedding_width(&self) -> usize {
        match self.layer {
            TeacherLayer::Hidden => self.hidden,
            TeacherLayer::Output => self.d_g,
        }
    }
}

/// A patch-MLP encoder with fixed parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DeskTeacher {
    config: TeacherConfig,
    geometry: Geometry,
    params: ParamSet,
}

impl DeskTeacher {
    /// Builds a teacher from the encoder of a `patch_mlp` student.
    pub fn from_student(student: &StudentForecaster, layer: TeacherLayer) -> Result<Self> {
        let cfg = student.config();
        if cfg.kind != StudentKind::PatchMlp {
            return Err(Error::contract("desk teachers are patch_mlp encoders"));
        }
        Ok(Self {
            config: TeacherConfig {
                d_g: cfg.d_f,
                hidden: cfg.hidden,
                patch_len: cfg.patch_len,
                layer,
            },
            geometry: *student.geometry(),
            params: student.encoder_params().clone(),
        })
    }

    pub fn config(&self) -> &TeacherConfig {
        &self.config
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TeacherSource {
    Desk(DeskTeacher),
    Cached(EmbeddingCache),
}

/// Teacher encode result. `params` are the tape handles of the teacher
/// parameters (empty for a cache); they are bound as trainable leaves so a
/// caller can confirm that no gradient reaches them.
#[derive(Debug, Clone)]
pub struct TeacherOutput {
    pub embedding: Var,
    pub params: Vec<Var>,
}

/// A frozen teacher encoder. Parameters are only reachable by shared reference.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherHandle {
    source: TeacherSource,
    checksum: String,
}

impl TeacherHandle {
    pub fn from_desk(teacher: DeskTeacher) -> Self {
        let checksum = param_digest(&teacher.params);
        Self {
            source: TeacherSource::Desk(teacher),
            checksum,
        }
    }

    pub fn from_cache(cache: EmbeddingCache) -> Self {
        let checksum = cache.checksum().to_owned();
        Self {
            source: TeacherSource::Cached(cache),
            checksum,
        }
    }

    pub fn source(&self) -> &TeacherSource {
        &self.source
    }

    pub fn d_g(&self) -> usize {
        match &self.source {
            TeacherSource::Desk(t) => t.config.embedding_width(),
            TeacherSource::Cached(c) => c.d_g(),
        }
    }

    /// Digest recorded when the teacher was frozen.
    pub fn frozen_checksum(&self) -> &str {
        &self.checksum
    }

    /// Digest of the parameters as they are now.
    pub fn current_checksum(&self) -> String {
        match &self.source {
            TeacherSource::Desk(t) => param_digest(&t.params),
            TeacherSource::Cached(c) => c.checksum().to_owned(),
        }
    }

    /// `H_g` of shape `[B, d_g]`, stop-gradient wrapped. `window_ids` are the
    /// window origins, used by cached teachers.
    pub fn encode(&self, tape: &mut Tape, x: Var, window_ids: &[u64]) -> Result<TeacherOutput> {
        let (raw, params) = match &self.source {
            TeacherSource::Desk(t) => {
                let params = t.params.bind(tape);
                let hidden_only = t.config.layer == TeacherLayer::Hidden;
                let h = patch_encode(tape, &params, x, &t.geometry, t.config.patch_len, hidden_only)?;
                (h, params)
            }
            TeacherSource::Cached(cache) => {
                let batch = tape.shape(x).first().copied().unwrap_or(0);
                if batch != window_ids.len() {
                    return Err(Error::contract(format!("{} window ids for a batch of {batch}", window_ids.len())));
                }
                let block = cache.lookup(window_ids)?;
                (tape.constant_from(vec![batch, cache.d_g()], block)?, Vec::new())
            }
        };
        Ok(TeacherOutput {
            embedding: tape.stop_gradient(raw),
            params,
        })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let TeacherSource::Desk(t) = &self.source else {
            return Err(Error::contract("cached teachers are stored as RGE1 files, not checkpoints"));
        };
        let mut ck = Checkpoint::new();
        ck.set("role", "teacher");
        ck.set("kind", "desk_teacher");
        ck.set("channels", t.geometry.channels);
        ck.set("lookback", t.geometry.lookback);
        ck.set("horizon", t.geometry.horizon);
        ck.set("d_g", t.config.d_g);
        ck.set("hidden", t.config.hidden);
        ck.set("patch_len", t.config.patch_len);
        ck.set("layer", t.config.layer);
        ck.set("checksum", &self.checksum);
        for (name, tensor) in t.params.iter() {
            ck.params.push(name, tensor.clone());
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.get("role")? != "teacher" {
            return Err(Error::Format {
                kind: "RGM1",
                message: "checkpoint does not hold a teacher".into(),
            });
        }
        let config = TeacherConfig {
            d_g: ck.parse("d_g")?,
            hidden: ck.parse("hidden")?,
            patch_len: ck.parse("patch_len")?,
            layer: ck.get("layer")?.parse()?,
        };
        let geometry = Geometry::new(ck.parse("channels")?, ck.parse("lookback")?, ck.parse("horizon")?)?;
        let mut shell = StudentForecaster::new(
            StudentConfig {
                kind: StudentKind::PatchMlp,
                d_f: config.d_g,
                hidden: config.hidden,
                patch_len: config.patch_len,
            },
            geometry,
            0,
        )?;
        ck.fill(shell.encoder_params_mut())?;
        let handle = Self::from_desk(DeskTeacher::from_student(&shell, config.layer)?);
        if let Ok(stored) = ck.get("checksum") {
            if stored != handle.checksum {
                return Err(Error::Format {
                    kind: "RGM1",
                    message: "teacher checksum does not match its parameters".into(),
                });
            }
        }
        Ok(handle)
    }
}

/// Trains a `patch_mlp` forecaster on the training split with plain MSE,
/// drops its head and freezes the encoder as a teacher.
pub fn pretrain_teacher(
    series: &MultivariateSeries,
    split: SplitSpec,
    geometry: Geometry,
    stride: usize,
    config: TeacherConfig,
    train: &TrainConfig,
) -> Result<(TeacherHandle, RunRecord)> {
    let data = WindowSplits::from_series(series, split, geometry.lookback, geometry.horizon, stride)?;
    pretrain_teacher_on(&data, geometry, config, train)
}

/// [`pretrain_teacher`] over prepared windows, e.g. pooled from several series.
pub fn pretrain_teacher_on(
    data: &WindowSplits,
    geometry: Geometry,
    config: TeacherConfig,
    train: &TrainConfig,
) -> Result<(TeacherHandle, RunRecord)> {
    let mut student = StudentForecaster::new(
        StudentConfig {
            kind: StudentKind::PatchMlp,
            d_f: config.d_g,
            hidden: config.hidden,
            patch_len: config.patch_len,
        },
        geometry,
        train.seed,
    )?;
    let record = fit(&mut student, None, data, train)?;
    let teacher = DeskTeacher::from_student(&student, config.layer)?;
    Ok((TeacherHandle::from_desk(teacher), record))
}
