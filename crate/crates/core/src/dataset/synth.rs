use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::MultivariateSeries;
use crate::error::{Error, Result};

/// Sums of sinusoids with an optional regime shift and Gaussian noise.
///
/// Each channel draws a level plus an amplitude and phase per period. At
/// `shift_at` every channel switches to a freshly drawn regime.
///
/// Textual form: `synth:channels=2,length=6000,periods=24;96,shift=4000,noise=0.1,seed=7`.
/// Omitted keys keep their defaults; `shift=none` disables the shift.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub channels: usize,
    pub length: usize,
    pub periods: Vec<f64>,
    pub shift_at: Option<usize>,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            channels: 2,
            length: 6000,
            periods: vec![24.0, 96.0],
            shift_at: Some(4000),
            noise_std: 0.1,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let body = text
            .strip_prefix("synth:")
            .or_else(|| (text == "synth").then_some(""))
            .ok_or_else(|| Error::contract(format!("not a synthetic dataset spec: {text:?}")))?;
        let mut spec = Self::default();
        for item in body.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::contract(format!("expected key=value in {item:?}")))?;
            let bad = || Error::contract(format!("invalid value for {key}: {value:?}"));
            match key {
                "channels" => spec.channels = value.parse().map_err(|_| bad())?,
                "length" => spec.length = value.parse().map_err(|_| bad())?,
                "periods" => {
                    spec.periods = value
                        .split(';')
                        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
                        .collect::<Result<_>>()?
                }
                "shift" => {
                    spec.shift_at = match value {
                        "none" => None,
                        v => Some(v.parse().map_err(|_| bad())?),
                    }
                }
                "noise" => spec.noise_std = value.parse().map_err(|_| bad())?,
                "seed" => spec.seed = value.parse().map_err(|_| bad())?,
                _ => return Err(Error::contract(format!("unknown synth key {key:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.length == 0 {
            return Err(Error::contract("synthetic series needs channels >= 1 and length >= 1"));
        }
        if self.periods.is_empty() || self.periods.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::contract("synthetic periods must be positive"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::contract("noise std must be nonnegative"));
        }
        Ok(())
    }

    /// Same family, different draw: `factor` times longer with the shift
    /// at the same relative position.
    pub fn pool(&self, factor: usize, seed: u64) -> Self {
        Self {
            length: self.length * factor,
            shift_at: self.shift_at.map(|s| s * factor),
            seed,
            ..self.clone()
        }
    }

    pub fn generate(&self) -> Result<MultivariateSeries> {
        self.validate()?;
        let mut params = ChaCha8Rng::seed_from_u64(self.seed);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(self.seed);
        noise_rng.set_stream(1);
        let noise = Normal::new(0.0, self.noise_std).map_err(|e| Error::contract(e.to_string()))?;

        let regimes = if self.shift_at.is_some() { 2 } else { 1 };
        let mut values = Vec::with_capacity(self.channels);
        for _ in 0..self.channels {
            let draws: Vec<(f64, Vec<(f64, f64)>)> = (0..regimes)
                .map(|_| {
                    let level = params.random_range(-0.5..0.5);
                    let waves = self
                        .periods
                        .iter()
                        .map(|_| (params.random_range(0.5..1.5), params.random_range(0.0..TAU)))
                        .collect();
                    (level, waves)
                })
                .collect();
            let channel = (0..self.length)
                .map(|t| {
                    let regime = match self.shift_at {
                        Some(s) if t >= s => 1,
                        _ => 0,
                    };
                    let (level, waves) = &draws[regime];
                    let signal: f64 = waves
                        .iter()
                        .zip(&self.periods)
                        .map(|((amp, phase), period)| amp * (TAU * t as f64 / period + phase).sin())
                        .sum();
                    level + signal + noise.sample(&mut noise_rng)
                })
                .collect();
            values.push(channel);
        }
        let names = (0..self.channels).map(|c| format!("ch{c}")).collect();
        MultivariateSeries::new(names, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let s = SynthSpec::parse("synth:channels=3,length=500,periods=12;48,shift=none,noise=0.2,seed=9").unwrap();
        assert_eq!(s.channels, 3);
        assert_eq!(s.length, 500);
        assert_eq!(s.periods, vec![12.0, 48.0]);
        assert_eq!(s.shift_at, None);
        assert_eq!(s.noise_std, 0.2);
        assert_eq!(s.seed, 9);
        assert_eq!(SynthSpec::parse("synth").unwrap(), SynthSpec::default());
        assert!(SynthSpec::parse("synth:bogus=1").is_err());
        assert!(SynthSpec::parse("data.csv").is_err());
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let spec = SynthSpec {
            length: 300,
            shift_at: Some(200),
            ..SynthSpec::default()
        };
        let a = spec.generate().unwrap();
        assert_eq!(a, spec.generate().unwrap());
        assert_eq!((a.channels(), a.len()), (2, 300));
        let b = spec.pool(1, 8).generate().unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn noiseless_series_is_periodic_within_a_regime() {
        let spec = SynthSpec {
            length: 200,
            periods: vec![10.0, 20.0],
            shift_at: None,
            noise_std: 0.0,
            ..SynthSpec::default()
        };
        let s = spec.generate().unwrap();
        for t in 0..180 {
            assert!((s.channel(0)[t] - s.channel(0)[t + 20]).abs() < 1e-9);
        }
    }
}
