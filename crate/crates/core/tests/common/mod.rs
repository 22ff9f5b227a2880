#![allow(dead_code)]

use lowrank_phases::rng::{gaussian_matrix, rng_from_seed};
use lowrank_phases::{GroundTruth, ProblemInstance, SensingOperator, TruthKind};
use nalgebra::DMatrix;

pub fn instance(n: usize, r_star: usize, m: usize, seed: u64) -> ProblemInstance {
    let truth = GroundTruth::generate(n, r_star, TruthKind::Orthonormal, seed).unwrap();
    let op = SensingOperator::gaussian(n, m, seed.wrapping_add(1)).unwrap();
    ProblemInstance::new(truth, op).unwrap()
}

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    gaussian_matrix(rows, cols, 1.0, &mut rng_from_seed(seed))
}

pub fn symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let g = gaussian(n, n, seed);
    (&g + g.transpose()) * 0.5
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
