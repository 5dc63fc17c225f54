//! Steady-state Kalman filter run by the recipient of privatized outputs.
//!
//! The gain is fixed at its steady-state value from the first sample on.
//! At each step the measurement update with `ỹ(k)` comes first, then the
//! time prediction to `k + 1`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::privacy::{PrivacyConfig, Trajectory};
use crate::riccati::{self, RiccatiSolution};
use crate::system::SystemModel;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSolution {
    pub system: SystemModel,
    pub v: Matrix,
    pub riccati: RiccatiSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterState {
    pub k: usize,
    pub x_hat_prior: Vector,
    pub x_hat: Vector,
}

impl FilterSolution {
    pub fn solve(system: &SystemModel, v: Matrix) -> Result<Self> {
        let riccati = riccati::solve_dare(system, &v)?;
        Ok(Self {
            system: system.clone(),
            v,
            riccati,
        })
    }

    /// Solves with `V = diag(σᵢ²)` from a privacy configuration.
    pub fn for_privacy(system: &SystemModel, privacy: &PrivacyConfig) -> Result<Self> {
        Self::solve(system, privacy.noise_covariance())
    }

    /// Solves with `V = diag(σᵢ²)`.
    pub fn with_sigma(system: &SystemModel, sigma: &[f64]) -> Result<Self> {
        let v = Matrix::from_diagonal(&Vector::from_iterator(sigma.len(), sigma.iter().map(|s| s * s)));
        Self::solve(system, v)
    }

    pub fn gain(&self) -> &Matrix {
        &self.riccati.gain
    }

    /// `x̂⁻(k+1) = H x̂(k)`.
    pub fn predict(&self, x_hat: &Vector) -> Vector {
        self.system.h() * x_hat
    }

    /// `x̂(k) = x̂⁻(k) + Σ̄ Cᵀ V⁻¹ (ỹ(k) − C x̂⁻(k))`.
    pub fn update(&self, x_hat_prior: &Vector, y_tilde: &Vector) -> Vector {
        let innovation = y_tilde - self.system.c() * x_hat_prior;
        x_hat_prior + self.gain() * innovation
    }

    pub fn run(&self, y_tilde: &Trajectory, x0_hat: &Vector) -> Result<Vec<FilterState>> {
        run_filter(self, y_tilde, x0_hat)
    }
}

pub fn run_filter(sol: &FilterSolution, y_tilde: &Trajectory, x0_hat: &Vector) -> Result<Vec<FilterState>> {
    let (n, q) = (sol.system.state_dim(), sol.system.output_dim());
    if y_tilde.dim() != q {
        return Err(Error::dims(format!("measurements have dimension {}, expected {q}", y_tilde.dim())));
    }
    if x0_hat.len() != n {
        return Err(Error::dims(format!("initial estimate has length {}, expected {n}", x0_hat.len())));
    }
    if y_tilde.is_empty() {
        return Err(Error::dims("measurement trajectory is empty"));
    }
    let mut prior = x0_hat.clone();
    let mut states = Vec::with_capacity(y_tilde.len());
    for (k, y) in y_tilde.samples().iter().enumerate() {
        let x_hat = sol.update(&prior, y);
        let next = sol.predict(&x_hat);
        states.push(FilterState {
            k,
            x_hat_prior: prior,
            x_hat,
        });
        prior = next;
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn solution(h: Matrix, sigma: f64) -> FilterSolution {
        let n = h.nrows();
        let sys = SystemModel::with_zero_mean(h, Matrix::identity(n, n), Matrix::identity(n, n)).unwrap();
        FilterSolution::with_sigma(&sys, &vec![sigma; n]).unwrap()
    }

    #[test]
    fn predict_examples() {
        let x = v(&[2.0, 3.0]);
        assert_eq!(solution(Matrix::identity(2, 2), 1.0).predict(&x), x);
        assert_eq!(solution(Matrix::zeros(2, 2), 1.0).predict(&x), v(&[0.0, 0.0]));
        let shear = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert_eq!(solution(shear, 1.0).predict(&x), v(&[5.0, 3.0]));
    }

    #[test]
    fn update_examples() {
        let sol = solution(Matrix::identity(2, 2), 1.0);
        let prior = v(&[1.5, -0.5]);
        assert_eq!(sol.update(&prior, &prior), prior);

        // Stable dynamics keep Σ bounded, so a huge V drives the gain to zero.
        let quiet = solution(Matrix::identity(2, 2) * 0.5, 1e4);
        let out = quiet.update(&prior, &v(&[10.0, 10.0]));
        let scale = prior.amax() + 1.0;
        assert!((&out - &prior).amax() / scale < 1e-5);

        let scalar = solution(Matrix::identity(1, 1), 1.0);
        let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(scalar.update(&v(&[0.0]), &v(&[1.0]))[0], golden - 1.0, epsilon = 1e-10);
    }

    #[test]
    fn run_filter_single_step_and_errors() {
        let sol = solution(Matrix::identity(2, 2), 2.0);
        let x0 = v(&[1.0, 2.0]);
        let y = Trajectory::new(2, vec![x0.clone()]).unwrap();
        let states = run_filter(&sol, &y, &x0).unwrap();
        assert_eq!(states.len(), 1);
        assert_eq!(states[0].x_hat, x0);

        let wrong = Trajectory::new(3, vec![Vector::zeros(3)]).unwrap();
        assert!(matches!(run_filter(&sol, &wrong, &x0), Err(Error::DimensionMismatch(_))));
        let empty = Trajectory::new(2, vec![]).unwrap();
        assert!(run_filter(&sol, &empty, &x0).is_err());
    }

    #[test]
    fn run_filter_converges_to_constant_measurement() {
        let sol = solution(Matrix::identity(2, 2), 3.0);
        let c = v(&[4.0, -7.0]);
        let x0 = Vector::zeros(2);
        let y = Trajectory::new(2, vec![c.clone(); 1000]).unwrap();
        let states = run_filter(&sol, &y, &x0).unwrap();
        let last = &states.last().unwrap().x_hat;
        assert!((last - &c).norm() < (&x0 - &c).norm() * 1e-2);
    }
}
