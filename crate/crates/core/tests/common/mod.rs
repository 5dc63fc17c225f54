#![allow(dead_code)]

use dpkalman::noise::{self, StreamTag};
use dpkalman::privacy::Trajectory;
use dpkalman::{Matrix, SystemModel, Vector};
use proptest::prelude::*;

pub fn case_study() -> SystemModel {
    SystemModel::with_zero_mean(
        Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
        Matrix::identity(2, 2),
        Matrix::identity(2, 2) * 10.0,
    )
    .unwrap()
}

pub const CASE_SIGMA: f64 = 2.9663;

/// A diagonal-C system with its per-channel noise scales.
#[derive(Debug, Clone)]
pub struct Sample {
    pub system: SystemModel,
    pub sigma: Vec<f64>,
}

/// `A Aᵀ + s I` for an `n x n` entry vector `a`.
pub fn spd_from(n: usize, a: &[f64], shift: f64) -> Matrix {
    let a = Matrix::from_row_slice(n, n, a);
    let m = &a * a.transpose() + Matrix::identity(n, n) * shift;
    (&m + m.transpose()) * 0.5
}

pub fn symmetric_from(n: usize, a: &[f64]) -> Matrix {
    let a = Matrix::from_row_slice(n, n, a);
    (&a + a.transpose()) * 0.5
}

/// Random systems with `n ≤ max_n`, invertible diagonal `C` (so observable) and `W ≻ 0`.
pub fn diagonal_system(max_n: usize) -> impl Strategy<Value = Sample> {
    (1..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(-1.2f64..1.2, n * n),
            prop::collection::vec((0.3f64..2.0, any::<bool>()), n),
            prop::collection::vec(-1.0f64..1.0, n * n),
            0.1f64..2.0,
            prop::collection::vec(0.2f64..3.0, n),
        )
            .prop_map(move |(h, c, a, shift, sigma)| {
                let c = Vector::from_iterator(n, c.into_iter().map(|(m, neg)| if neg { -m } else { m }));
                let system = SystemModel::with_zero_mean(
                    Matrix::from_row_slice(n, n, &h),
                    Matrix::from_diagonal(&c),
                    spd_from(n, &a, shift),
                )
                .unwrap();
                Sample { system, sigma }
            })
    })
}

/// True states `x(0..T)` and privatized outputs `ỹ(0..T)`, with `x(0) = x̂⁻(0)`.
pub fn sample_path(system: &SystemModel, sigma: &[f64], horizon: usize, seed: u64, trial: u64) -> (Vec<Vector>, Trajectory) {
    let w_factor = system.w().clone().cholesky().expect("W is SPD").l();
    let mut process = noise::substream(seed, trial, StreamTag::Process);
    let mut privacy = noise::substream(seed, trial, StreamTag::Privacy);
    let sigma = Vector::from_column_slice(sigma);
    let mut x = system.x0_hat().clone();
    let (mut states, mut outputs) = (Vec::with_capacity(horizon), Vec::with_capacity(horizon));
    for _ in 0..horizon {
        let v = noise::standard_normal_vector(&mut privacy, system.output_dim()).component_mul(&sigma);
        outputs.push(system.c() * &x + v);
        states.push(x.clone());
        x = system.h() * &x + noise::correlated_normal(&mut process, &w_factor);
    }
    (states, Trajectory::new(system.output_dim(), outputs).unwrap())
}
