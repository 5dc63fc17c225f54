//! Choosing `ε` so the steady-state MSE lands in a target interval.
//!
//! With the isotropic minimal-noise mechanism, the trace bounds turn into
//! conditions on `ε` alone:
//!
//! ```text
//! (1/8)·((1 + sqrt(36η + 1)) / η)²  ≤  ε  ≤  1/η'
//! ```
//!
//! where `η` controls the upper target (`η₃` a priori, `η₄` a posteriori) and
//! `η'` the lower target (`η₁`, `η₂`). These are sufficient conditions only:
//! an empty interval is a legitimate answer and is reported as infeasible.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::error::{Error, Result};
use crate::filter::FilterSolution;
use crate::linalg;
use crate::privacy::{self, CALIBRATION_DELTA_RANGE};
use crate::system::SystemModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationKind {
    /// Target on the prediction MSE `tr Σ`.
    Apriori,
    /// Target on the estimation MSE `tr Σ̄`.
    Aposteriori,
}

impl std::str::FromStr for CalibrationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "apriori" => Ok(Self::Apriori),
            "aposteriori" => Ok(Self::Aposteriori),
            other => Err(Error::Config(format!("unknown calibration kind `{other}` (expected apriori|aposteriori)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationTarget {
    pub kind: CalibrationKind,
    pub b_l: f64,
    pub b_u: f64,
    pub delta: f64,
    pub adjacency_b: f64,
}

impl CalibrationTarget {
    /// Checks the system-independent invariants.
    pub fn validate(&self) -> Result<()> {
        let invalid = |field, reason: String| Err(Error::InvalidTarget { field, reason });
        if !self.b_l.is_finite() || !self.b_u.is_finite() {
            return invalid("B_l", "bounds must be finite".into());
        }
        if self.b_l >= self.b_u {
            return invalid("B_u", format!("B_u = {} must exceed B_l = {}", self.b_u, self.b_l));
        }
        let (lo, hi) = CALIBRATION_DELTA_RANGE;
        if !(self.delta >= lo && self.delta <= hi) {
            return invalid("delta", format!("delta = {} must lie in [{lo:e}, {hi:e}]", self.delta));
        }
        if !(self.adjacency_b > 0.0 && self.adjacency_b.is_finite()) {
            return invalid("adjacency_B", format!("adjacency_B = {} must be positive", self.adjacency_b));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonInterval {
    pub kind: CalibrationKind,
    pub eps_min: f64,
    pub eps_max: f64,
    pub feasible: bool,
    pub eta_values: BTreeMap<String, f64>,
    pub sigma_at_eps_min: f64,
    pub sigma_at_eps_max: f64,
    pub sensitivity: f64,
    pub delta: f64,
}

impl EpsilonInterval {
    /// `n` evenly spaced points from `eps_min` to `eps_max` (empty if infeasible).
    pub fn grid(&self, n: usize) -> Vec<f64> {
        if !self.feasible || n == 0 {
            return Vec::new();
        }
        if n == 1 {
            return vec![0.5 * (self.eps_min + self.eps_max)];
        }
        (0..n)
            .map(|i| self.eps_min + (self.eps_max - self.eps_min) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Smallest `ε` with `(9 + sqrt(2ε)) / (2ε) ≤ η`.
pub fn epsilon_floor(eta: f64) -> f64 {
    ((1.0 + (36.0 * eta + 1.0).sqrt()) / eta).powi(2) / 8.0
}

/// System quantities shared by both calibrations.
struct Setup {
    n: f64,
    trace_w: f64,
    lambda_min_w: f64,
    trace_hth: f64,
    c_l: f64,
    c_u: f64,
    sensitivity: f64,
}

fn setup(system: &SystemModel, target: &CalibrationTarget, expected: CalibrationKind) -> Result<Setup> {
    if target.kind != expected {
        return Err(Error::InvalidTarget {
            field: "kind",
            reason: format!("expected a {expected:?} target"),
        });
    }
    target.validate()?;
    // Isotropic noise: the extreme channels are the extreme |Cᵢᵢ|.
    let ext = bounds::channel_extremes(system.c(), &vec![1.0; system.output_dim()])?;
    if ext.c_l == 0.0 {
        return Err(Error::DegenerateChannel { index: ext.l });
    }
    let sensitivity = privacy::sensitivity_bound(system.c(), target.adjacency_b)?;
    let (lambda_min_w, _) = linalg::extreme_eigenvalues(system.w())?;
    let h = system.h();
    Ok(Setup {
        n: system.state_dim() as f64,
        trace_w: system.w().trace(),
        lambda_min_w,
        trace_hth: (h.transpose() * h).trace(),
        c_l: ext.c_l,
        c_u: ext.c_u,
        sensitivity,
    })
}

fn interval(
    kind: CalibrationKind,
    target: &CalibrationTarget,
    sensitivity: f64,
    eta_upper: (&str, f64),
    eta_lower: (&str, f64),
) -> Result<EpsilonInterval> {
    let eps_min = epsilon_floor(eta_upper.1);
    let eps_max = 1.0 / eta_lower.1;
    let sigma_at = |eps: f64| {
        if eps.is_finite() && eps > 0.0 {
            privacy::gaussian_sigma(eps, target.delta, sensitivity)
        } else {
            Ok(f64::NAN)
        }
    };
    Ok(EpsilonInterval {
        kind,
        eps_min,
        eps_max,
        feasible: eps_min <= eps_max,
        eta_values: BTreeMap::from([(eta_upper.0.to_owned(), eta_upper.1), (eta_lower.0.to_owned(), eta_lower.1)]),
        sigma_at_eps_min: sigma_at(eps_min)?,
        sigma_at_eps_max: sigma_at(eps_max)?,
        sensitivity,
        delta: target.delta,
    })
}

/// `ε` interval keeping `tr Σ` in `[B_l, B_u]`.
pub fn calibrate_apriori(system: &SystemModel, target: &CalibrationTarget) -> Result<EpsilonInterval> {
    let s = setup(system, target, CalibrationKind::Apriori)?;
    if s.trace_hth == 0.0 {
        return Err(Error::DegenerateH);
    }
    if target.b_l <= s.trace_w {
        return Err(Error::InvalidTarget {
            field: "B_l",
            reason: format!("B_l = {} must exceed tr W = {}", target.b_l, s.trace_w),
        });
    }
    let denom = s.trace_hth * s.lambda_min_w - target.b_l + s.trace_w;
    if denom <= 0.0 {
        return Err(Error::InvalidTarget {
            field: "B_l",
            reason: format!(
                "B_l = {} must be below tr W + tr(HᵀH)·λ_min(W) = {}",
                target.b_l,
                s.trace_w + s.trace_hth * s.lambda_min_w
            ),
        });
    }
    let d2 = s.sensitivity.powi(2);
    let eta1 = ((target.b_l - s.trace_w) * s.lambda_min_w * s.c_u.powi(2) / (d2 * denom)).sqrt();
    let eta3 = ((target.b_u - s.trace_w) * s.c_l.powi(2) / (d2 * s.trace_hth)).sqrt();
    interval(CalibrationKind::Apriori, target, s.sensitivity, ("eta3", eta3), ("eta1", eta1))
}

/// `ε` interval keeping `tr Σ̄` in `[B_l, B_u]`.
pub fn calibrate_aposteriori(system: &SystemModel, target: &CalibrationTarget) -> Result<EpsilonInterval> {
    let s = setup(system, target, CalibrationKind::Aposteriori)?;
    if target.b_l <= 0.0 {
        return Err(Error::InvalidTarget {
            field: "B_l",
            reason: format!("B_l = {} must be positive", target.b_l),
        });
    }
    let denom = s.n - target.b_l / s.lambda_min_w;
    if denom <= 0.0 {
        return Err(Error::InvalidTarget {
            field: "B_l",
            reason: format!("B_l = {} must be below n·λ_min(W) = {}", target.b_l, s.n * s.lambda_min_w),
        });
    }
    let d2 = s.sensitivity.powi(2);
    let eta2 = (target.b_l * s.c_u.powi(2) / (d2 * denom)).sqrt();
    let eta4 = (target.b_u * s.c_l.powi(2) / (s.n * d2)).sqrt();
    interval(CalibrationKind::Aposteriori, target, s.sensitivity, ("eta4", eta4), ("eta2", eta2))
}

pub fn calibrate(system: &SystemModel, target: &CalibrationTarget) -> Result<EpsilonInterval> {
    match target.kind {
        CalibrationKind::Apriori => calibrate_apriori(system, target),
        CalibrationKind::Aposteriori => calibrate_aposteriori(system, target),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationCheck {
    pub epsilon: f64,
    pub sigma: f64,
    pub achieved_trace: f64,
    pub within_bounds: bool,
}

/// Solves the Riccati equation at the minimal noise for `epsilon` and reports
/// whether the resulting MSE falls inside the target.
pub fn verify_calibration(system: &SystemModel, target: &CalibrationTarget, epsilon: f64) -> Result<CalibrationCheck> {
    target.validate()?;
    let sensitivity = privacy::sensitivity_bound(system.c(), target.adjacency_b)?;
    let sigma = privacy::gaussian_sigma(epsilon, target.delta, sensitivity)?;
    if sigma <= 0.0 {
        return Err(Error::SingularV);
    }
    let sol = FilterSolution::with_sigma(system, &vec![sigma; system.output_dim()])?;
    let achieved_trace = match target.kind {
        CalibrationKind::Apriori => sol.riccati.trace_prior(),
        CalibrationKind::Aposteriori => sol.riccati.trace_posterior(),
    };
    Ok(CalibrationCheck {
        epsilon,
        sigma,
        achieved_trace,
        within_bounds: achieved_trace >= target.b_l && achieved_trace <= target.b_u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use approx::assert_abs_diff_eq;

    fn case_study() -> SystemModel {
        SystemModel::with_zero_mean(
            Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            Matrix::identity(2, 2),
            Matrix::identity(2, 2) * 10.0,
        )
        .unwrap()
    }

    fn target(kind: CalibrationKind, b_l: f64, b_u: f64) -> CalibrationTarget {
        CalibrationTarget {
            kind,
            b_l,
            b_u,
            delta: 0.001,
            adjacency_b: 1.0,
        }
    }

    #[test]
    fn apriori_tight_target_is_infeasible() {
        let out = calibrate_apriori(&case_study(), &target(CalibrationKind::Apriori, 34.0, 46.0)).unwrap();
        assert_abs_diff_eq!(out.eta_values["eta3"], 2.944, epsilon = 1e-3);
        assert_abs_diff_eq!(out.eta_values["eta1"], 2.958, epsilon = 1e-3);
        assert_abs_diff_eq!(out.eps_min, 1.856, epsilon = 1e-3);
        assert_abs_diff_eq!(out.eps_max, 0.338, epsilon = 1e-3);
        assert!(!out.feasible);
        assert!(out.grid(10).is_empty());
    }

    #[test]
    fn apriori_wide_target_round_trips() {
        let t = target(CalibrationKind::Apriori, 21.0, 2000.0);
        let out = calibrate_apriori(&case_study(), &t).unwrap();
        assert_abs_diff_eq!(out.eta_values["eta3"], 25.69, epsilon = 1e-2);
        assert_abs_diff_eq!(out.eta_values["eta1"], 0.587, epsilon = 1e-3);
        assert_abs_diff_eq!(out.eps_min, 0.187, epsilon = 1e-3);
        assert_abs_diff_eq!(out.eps_max, 1.703, epsilon = 1e-3);
        assert!(out.feasible);
        assert!(out.sigma_at_eps_min > out.sigma_at_eps_max);
        let check = verify_calibration(&case_study(), &t, 1.0).unwrap();
        assert!(check.within_bounds, "{check:?}");
    }

    #[test]
    fn apriori_invalid_targets() {
        let err = calibrate_apriori(&case_study(), &target(CalibrationKind::Apriori, 19.0, 40.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidTarget { field: "B_l", .. }));
        let err = calibrate_apriori(&case_study(), &target(CalibrationKind::Apriori, 55.0, 60.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidTarget { field: "B_l", .. }));
        let zero_h =
            SystemModel::with_zero_mean(Matrix::zeros(2, 2), Matrix::identity(2, 2), Matrix::identity(2, 2)).unwrap();
        let err = calibrate_apriori(&zero_h, &target(CalibrationKind::Apriori, 3.0, 4.0)).unwrap_err();
        assert_eq!(err, Error::DegenerateH);
        let err = calibrate_apriori(&case_study(), &target(CalibrationKind::Apriori, 30.0, 25.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidTarget { field: "B_u", .. }));
        let mut bad_delta = target(CalibrationKind::Apriori, 21.0, 40.0);
        bad_delta.delta = 0.2;
        assert!(matches!(
            calibrate_apriori(&case_study(), &bad_delta),
            Err(Error::InvalidTarget { field: "delta", .. })
        ));
    }

    #[test]
    fn aposteriori_examples() {
        let t = target(CalibrationKind::Aposteriori, 1.8, 100.0);
        let out = calibrate_aposteriori(&case_study(), &t).unwrap();
        assert_abs_diff_eq!(out.eta_values["eta4"], 7.071, epsilon = 1e-3);
        assert_abs_diff_eq!(out.eta_values["eta2"], 0.9945, epsilon = 1e-4);
        assert_abs_diff_eq!(out.eps_min, 0.721, epsilon = 1e-3);
        assert_abs_diff_eq!(out.eps_max, 1.006, epsilon = 1e-3);
        assert!(out.feasible);
        assert!(verify_calibration(&case_study(), &t, 0.9).unwrap().within_bounds);

        let out = calibrate_aposteriori(&case_study(), &target(CalibrationKind::Aposteriori, 1.8, 50.0)).unwrap();
        assert_abs_diff_eq!(out.eta_values["eta4"], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.eps_min, 1.044, epsilon = 1e-3);
        assert!(!out.feasible);

        let err = calibrate_aposteriori(&case_study(), &target(CalibrationKind::Aposteriori, 25.0, 50.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidTarget { field: "B_l", .. }));
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let err = calibrate_apriori(&case_study(), &target(CalibrationKind::Aposteriori, 21.0, 40.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidTarget { field: "kind", .. }));
    }

    #[test]
    fn epsilon_floor_solves_pivot_inequality() {
        for eta in [0.5, 2.944, 7.071, 25.69, 400.0] {
            let eps = epsilon_floor(eta);
            let pivot = (9.0 + (2.0 * eps).sqrt()) / (2.0 * eps);
            assert!(pivot <= eta + 1e-9, "eta {eta}: pivot {pivot}");
            assert_abs_diff_eq!(pivot, eta, epsilon = 1e-9 * eta.max(1.0));
        }
    }

    #[test]
    fn grid_spans_interval() {
        let out = calibrate_apriori(&case_study(), &target(CalibrationKind::Apriori, 21.0, 2000.0)).unwrap();
        let g = out.grid(10);
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], out.eps_min);
        assert_abs_diff_eq!(g[9], out.eps_max, epsilon = 1e-15);
    }
}
