#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reguider::dataset::{MultivariateSeries, WindowPair};
use reguider::models::{DeskTeacher, Geometry, StudentConfig, StudentForecaster, StudentKind, TeacherHandle, TeacherLayer};
use reguider::train::Batch;

/// C=2, L=8, T=4.
pub fn toy_geometry() -> Geometry {
    Geometry::new(2, 8, 4).unwrap()
}

pub fn student(kind: StudentKind, d_f: usize, seed: u64) -> StudentForecaster {
    let config = StudentConfig {
        kind,
        d_f,
        hidden: 7,
        patch_len: 4,
    };
    StudentForecaster::new(config, toy_geometry(), seed).unwrap()
}

/// A randomly initialized desk teacher with output width `d_g`.
pub fn desk_teacher(d_g: usize, seed: u64) -> TeacherHandle {
    let shell = student(StudentKind::PatchMlp, d_g, seed);
    TeacherHandle::from_desk(DeskTeacher::from_student(&shell, TeacherLayer::Output).unwrap())
}

pub fn random_windows(n: usize, seed: u64) -> Vec<WindowPair> {
    let g = toy_geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| WindowPair {
            x: (0..g.channels)
                .map(|_| (0..g.lookback).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect(),
            y: (0..g.channels)
                .map(|_| (0..g.horizon).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect(),
            origin: i * 3,
        })
        .collect()
}

pub fn toy_batch(b: usize, seed: u64) -> Batch {
    let windows = random_windows(b, seed);
    Batch::from_windows(&windows, &(0..b).collect::<Vec<_>>()).unwrap()
}

/// Two channels of noisy sinusoids.
pub fn sinusoid_series(n: usize, seed: u64) -> MultivariateSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..2)
        .map(|c| {
            (0..n)
                .map(|t| {
                    let phase = t as f64 / (12.0 + 4.0 * c as f64);
                    (std::f64::consts::TAU * phase).sin() + 0.05 * rng.random_range(-1.0..1.0)
                })
                .collect()
        })
        .collect();
    MultivariateSeries::new(vec!["a".into(), "b".into()], values).unwrap()
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}
