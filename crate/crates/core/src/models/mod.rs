//! Student forecasters (encoder + head) and frozen teacher encoders.

mod checkpoint;
mod student;
mod teacher;

pub use checkpoint::Checkpoint;
pub use student::{StudentConfig, StudentForecaster, StudentKind, StudentVars};
pub use teacher::{
    pretrain_teacher, pretrain_teacher_on, DeskTeacher, TeacherConfig, TeacherHandle, TeacherLayer, TeacherOutput, TeacherSource,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Tape, Tensor, Var};

/// Window geometry shared by every model: `C` channels, look-back `L`, horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub channels: usize,
    pub lookback: usize,
    pub horizon: usize,
}

impl Geometry {
    pub fn new(channels: usize, lookback: usize, horizon: usize) -> Result<Self> {
        if channels == 0 || lookback == 0 || horizon == 0 {
            return Err(Error::contract(format!(
                "geometry must be positive, got C={channels} L={lookback} T={horizon}"
            )));
        }
        Ok(Self {
            channels,
            lookback,
            horizon,
        })
    }

    /// Checks that `x` is `[B, C, L]` and returns `B`.
    pub fn check_input(&self, tape: &Tape, x: Var) -> Result<usize> {
        let shape = tape.shape(x);
        if shape.len() != 3 || shape[1] != self.channels || shape[2] != self.lookback {
            return Err(Error::shape("encode", shape, &[0, self.channels, self.lookback]));
        }
        Ok(shape[0])
    }
}

/// Seeded uniform initializer: weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero biases.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    /// `stream` separates the draws of different components built from one seed.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn affine(&mut self, params: &mut ParamSet, weight: &str, bias: &str, fan_in: usize, fan_out: usize) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = (0..fan_in * fan_out).map(|_| self.rng.random_range(-bound..=bound)).collect();
        params.push(weight, Tensor::from_vec(vec![fan_in, fan_out], w).expect("positive dims"));
        params.push(bias, Tensor::zeros(vec![fan_out]));
    }
}

/// `x @ w + b` over the last axis of a rank-2 input.
pub(crate) fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let z = tape.matmul(x, w)?;
    tape.add_bias(z, b)
}

/// Per-window normalization statistics for a batch, `[B, C]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NormBatch {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormBatch {
    pub fn from_states(states: &[crate::dataset::NormState]) -> Self {
        Self {
            mean: states.iter().flat_map(|s| s.mean.iter().copied()).collect(),
            std: states.iter().flat_map(|s| s.std.iter().copied()).collect(),
        }
    }

    /// Identity normalization (mean 0, std 1) for `batch` windows of `channels` channels.
    pub fn identity(batch: usize, channels: usize) -> Self {
        Self {
            mean: vec![0.0; batch * channels],
            std: vec![1.0; batch * channels],
        }
    }

    fn expand(values: &[f64], horizon: usize) -> Vec<f64> {
        values.iter().flat_map(|&v| std::iter::repeat_n(v, horizon)).collect()
    }

    /// Maps a normalized `[B, C, T]` prediction back to the data scale.
    pub fn denormalize(&self, tape: &mut Tape, y: Var) -> Result<Var> {
        let shape = tape.shape(y).to_vec();
        if shape.len() != 3 || shape[0] * shape[1] != self.mean.len() {
            return Err(Error::shape("denormalize", &shape, &[self.mean.len()]));
        }
        let std = tape.constant_from(shape.clone(), Self::expand(&self.std, shape[2]))?;
        let mean = tape.constant_from(shape.clone(), Self::expand(&self.mean, shape[2]))?;
        let scaled = tape.mul(y, std)?;
        tape.add(scaled, mean)
    }
}

/// SHA-256 over parameter names, shapes and little-endian values.
pub fn param_digest(params: &ParamSet) -> String {
    let mut h = Sha256::new();
    for (name, t) in params.iter() {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((t.shape().len() as u64).to_le_bytes());
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// The patch encoder shared by `patch_mlp` students and desk teachers.
///
/// Each channel is cut into `L / patch_len` patches; every patch goes through
/// `affine -> relu -> affine` and the results are mean-pooled over patches and
/// channels. With `hidden_only` the second affine is skipped and the pooled
/// hidden activations are returned.
pub(crate) fn patch_encode(
    tape: &mut Tape,
    params: &[Var],
    x: Var,
    geometry: &Geometry,
    patch_len: usize,
    hidden_only: bool,
) -> Result<Var> {
    let batch = geometry.check_input(tape, x)?;
    if patch_len == 0 || !geometry.lookback.is_multiple_of(patch_len) {
        return Err(Error::contract(format!(
            "look-back {} is not divisible by patch length {patch_len}",
            geometry.lookback
        )));
    }
    let tokens = geometry.channels * (geometry.lookback / patch_len);
    let rows = tape.reshape(x, vec![batch * tokens, patch_len])?;
    let hidden = affine(tape, rows, params[0], params[1])?;
    let hidden = tape.relu(hidden);
    let out = if hidden_only {
        hidden
    } else {
        affine(tape, hidden, params[2], params[3])?
    };
    let width = tape.shape(out)[1];
    let grouped = tape.reshape(out, vec![batch, tokens, width])?;
    tape.mean_axis(grouped, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initializer_is_deterministic_and_bounded() {
        let build = |seed| {
            let mut p = ParamSet::new();
            Initializer::new(seed, 0).affine(&mut p, "w", "b", 16, 4);
            p
        };
        let a = build(1);
        assert_eq!(a, build(1));
        assert_ne!(a, build(2));
        let bound = 0.25;
        assert!(a.get("w").unwrap().data().iter().all(|v| v.abs() <= bound));
        assert!(a.get("b").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn digest_tracks_values() {
        let mut p = ParamSet::new();
        Initializer::new(3, 0).affine(&mut p, "w", "b", 4, 4);
        let d = param_digest(&p);
        assert_eq!(d.len(), 64);
        assert_eq!(d, param_digest(&p.clone()));
        p.get_mut("b").unwrap().data_mut()[0] = 1e-300;
        assert_ne!(d, param_digest(&p));
    }
}
