//! Steady-state Riccati solver.
//!
//! The a priori covariance is the fixed point of
//!
//! ```text
//! Σ = H (Σ⁻¹ + Cᵀ V⁻¹ C)⁻¹ Hᵀ + W
//! ```
//!
//! iterated from `Σ₀ = W` (the solution always dominates `W`). The inner
//! inverse is the a posteriori covariance `Σ̄`, so each step is "posterior,
//! then propagate". Inverses go through Cholesky factors and the iterate is
//! re-symmetrized after every step.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::system::SystemModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DareOptions {
    pub max_iterations: usize,
    /// Stop once `‖Σ_{k+1} − Σ_k‖_F / ‖Σ_{k+1}‖_F` falls below this...
    pub change_tol: f64,
    /// ...and the fixed-point residual is below this.
    pub residual_tol: f64,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            change_tol: 1e-12,
            residual_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiccatiSolution {
    /// A priori covariance `Σ`.
    pub sigma: Matrix,
    /// A posteriori covariance `Σ̄`.
    pub sigma_bar: Matrix,
    /// Steady-state gain `Σ̄ Cᵀ V⁻¹`.
    pub gain: Matrix,
    /// Relative Frobenius residual of the fixed-point equation at `sigma`.
    pub residual: f64,
    pub iterations: usize,
}

impl RiccatiSolution {
    pub fn trace_prior(&self) -> f64 {
        self.sigma.trace()
    }

    pub fn trace_posterior(&self) -> f64 {
        self.sigma_bar.trace()
    }

    pub fn log_det_prior(&self) -> f64 {
        linalg::log_det_spd(&self.sigma).unwrap_or(f64::NEG_INFINITY)
    }

    pub fn log_det_posterior(&self) -> f64 {
        linalg::log_det_spd(&self.sigma_bar).unwrap_or(f64::NEG_INFINITY)
    }
}

/// `Cᵀ V⁻¹ C` and `V⁻¹`, or `SingularV` when `V` is not symmetric positive definite.
fn information(c: &Matrix, v: &Matrix) -> Result<(Matrix, Matrix)> {
    if !v.is_square() || v.nrows() != c.nrows() {
        return Err(Error::dims(format!(
            "V must be {q}x{q}, got {}x{}",
            v.nrows(),
            v.ncols(),
            q = c.nrows()
        )));
    }
    if linalg::max_asymmetry(v) > linalg::SYMMETRY_TOL {
        return Err(Error::SingularV);
    }
    let v_inv = linalg::spd_inverse(v).ok_or(Error::SingularV)?;
    let info = linalg::symmetrize(&(c.transpose() * &v_inv * c));
    Ok((info, v_inv))
}

/// `(Σ⁻¹ + info)⁻¹` without the conditioning check.
fn posterior_from_information(sigma: &Matrix, info: &Matrix) -> Result<Matrix> {
    let sigma_inv = linalg::spd_inverse(sigma).ok_or(Error::SingularSigma { ratio: 0.0 })?;
    linalg::spd_inverse(&(sigma_inv + info)).ok_or(Error::SingularSigma { ratio: 0.0 })
}

/// A posteriori covariance `(Cᵀ V⁻¹ C + Σ⁻¹)⁻¹`.
pub fn posterior_covariance(sigma: &Matrix, c: &Matrix, v: &Matrix) -> Result<Matrix> {
    if !sigma.is_square() || sigma.nrows() != c.ncols() {
        return Err(Error::dims("Σ must be n x n with n = columns of C"));
    }
    let (lo, hi) = linalg::extreme_eigenvalues(sigma)?;
    if hi <= 0.0 || lo < 1e-12 * hi {
        let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
        return Err(Error::SingularSigma { ratio });
    }
    let (info, _) = information(c, v)?;
    posterior_from_information(sigma, &info)
}

fn propagate(h: &Matrix, posterior: &Matrix, w: &Matrix) -> Matrix {
    linalg::symmetrize(&(h * posterior * h.transpose() + w))
}

/// Solves the filtering DARE for `system` with privacy-noise covariance `v`.
pub fn solve_dare(system: &SystemModel, v: &Matrix) -> Result<RiccatiSolution> {
    solve_dare_with(system, v, DareOptions::default())
}

pub fn solve_dare_with(system: &SystemModel, v: &Matrix, opts: DareOptions) -> Result<RiccatiSolution> {
    let (h, c, w) = (system.h(), system.c(), system.w());
    // System properties first: they are input errors whatever V is.
    if !system.is_observable() {
        return Err(Error::NotDetectable);
    }
    if !system.is_controllable()? {
        return Err(Error::NotStabilizable);
    }
    let (info, v_inv) = information(c, v)?;

    let mut sigma = linalg::symmetrize(w);
    let mut residual = f64::INFINITY;
    for iteration in 1..=opts.max_iterations {
        let posterior = posterior_from_information(&sigma, &info)?;
        let next = propagate(h, &posterior, w);
        let change = linalg::relative_frobenius(&next, &sigma).min(linalg::relative_frobenius(&sigma, &next));
        sigma = next;
        if change < opts.change_tol {
            residual = fixed_point_residual(&sigma, h, w, &info)?;
            if residual < opts.residual_tol {
                let sigma_bar = posterior_from_information(&sigma, &info)?;
                let gain = &sigma_bar * c.transpose() * &v_inv;
                return Ok(RiccatiSolution {
                    sigma,
                    sigma_bar,
                    gain,
                    residual,
                    iterations: iteration,
                });
            }
        }
        if !sigma.iter().all(|x| x.is_finite()) {
            return Err(Error::NoConvergence { iterations: iteration, residual: f64::NAN });
        }
    }
    if residual.is_infinite() {
        residual = fixed_point_residual(&sigma, h, w, &info).unwrap_or(f64::NAN);
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        residual,
    })
}

fn fixed_point_residual(sigma: &Matrix, h: &Matrix, w: &Matrix, info: &Matrix) -> Result<f64> {
    let mapped = propagate(h, &posterior_from_information(sigma, info)?, w);
    Ok(linalg::relative_frobenius(&mapped, sigma))
}

/// Relative Frobenius residual `‖Σ − (H(Σ⁻¹+CᵀV⁻¹C)⁻¹Hᵀ + W)‖_F / ‖Σ‖_F`.
pub fn dare_residual(system: &SystemModel, v: &Matrix, sigma: &Matrix) -> Result<f64> {
    let (info, _) = information(system.c(), v)?;
    fixed_point_residual(sigma, system.h(), system.w(), &info)
}
