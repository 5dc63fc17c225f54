//! Fixtures shared by the benchmarks in `benches/`.

use dpkalman::{Matrix, SystemModel};

/// Double integrator with `W = 10 I`, observed directly.
pub fn case_study() -> SystemModel {
    SystemModel::with_zero_mean(
        Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
        Matrix::identity(2, 2),
        Matrix::identity(2, 2) * 10.0,
    )
    .expect("valid model")
}

/// `n` coupled random-walk states with unit observation of each.
pub fn chain(n: usize) -> SystemModel {
    let h = Matrix::from_fn(n, n, |i, j| match j as isize - i as isize {
        0 => 0.95,
        1 => 0.1,
        _ => 0.0,
    });
    let w = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.2f64.powi((i as i32 - j as i32).abs()) });
    SystemModel::with_zero_mean(h, Matrix::identity(n, n), w).expect("valid model")
}
