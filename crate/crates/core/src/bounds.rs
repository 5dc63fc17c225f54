//! Closed-form bounds on the steady-state error covariances as functions of
//! the per-channel privacy noise.
//!
//! All bounds need a square diagonal `C`, which makes
//! `Cᵀ V⁻¹ C = diag(Cᵢᵢ² / σᵢ²)`. Its smallest and largest entries (channels
//! `l` and `u`) drive every bound here.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::system::SystemModel;

/// Channels with the least (`l`) and most (`u`) information per unit noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelExtremes {
    pub l: usize,
    pub u: usize,
    pub c_l: f64,
    pub c_u: f64,
    pub sigma_l: f64,
    pub sigma_u: f64,
}

impl ChannelExtremes {
    /// `λ_n(Cᵀ V⁻¹ C) = C_l² / σ_l²`.
    pub fn min_ratio(&self) -> f64 {
        (self.c_l / self.sigma_l).powi(2)
    }

    /// `λ_1(Cᵀ V⁻¹ C) = C_u² / σ_u²`.
    pub fn max_ratio(&self) -> f64 {
        (self.c_u / self.sigma_u).powi(2)
    }
}

/// Picks `l = argmin Cᵢᵢ²/σᵢ²` and `u = argmax`, ties going to the lowest index.
pub fn channel_extremes(c: &Matrix, sigma: &[f64]) -> Result<ChannelExtremes> {
    if !linalg::is_diagonal(c) {
        return Err(Error::NotDiagonal);
    }
    if sigma.len() != c.nrows() {
        return Err(Error::dims(format!("sigma has {} entries, C is {}x{}", sigma.len(), c.nrows(), c.ncols())));
    }
    if let Some((index, &value)) = sigma.iter().enumerate().find(|(_, s)| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::NonPositiveSigma { index, value });
    }
    let ratio = |i: usize| (c[(i, i)] / sigma[i]).powi(2);
    let (mut l, mut u) = (0, 0);
    for i in 1..sigma.len() {
        if ratio(i) < ratio(l) {
            l = i;
        }
        if ratio(i) > ratio(u) {
            u = i;
        }
    }
    Ok(ChannelExtremes {
        l,
        u,
        c_l: c[(l, l)],
        c_u: c[(u, u)],
        sigma_l: sigma[l],
        sigma_u: sigma[u],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    AprioriTrace,
    AposterioriTrace,
    AprioriLogdet,
    AposterioriLogdet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub lower: f64,
    /// `None` when the bound's hypothesis fails.
    pub upper: Option<f64>,
    pub applicable: bool,
    pub intermediates: BTreeMap<String, f64>,
}

impl BoundReport {
    /// Whether `value` lies inside `[lower, upper]` (an absent upper bound is +∞).
    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && self.upper.is_none_or(|u| value <= u)
    }
}

/// Quantities of `H` and `W` that every bound uses.
struct Spectral {
    n: usize,
    trace_w: f64,
    lambda_min_w: f64,
    lambda_max_w: f64,
    trace_hth: f64,
    det_h: f64,
    det_w: f64,
    singular_h: Vec<f64>,
}

impl Spectral {
    fn of(system: &SystemModel) -> Result<Self> {
        let (h, w) = (system.h(), system.w());
        let (lambda_min_w, lambda_max_w) = linalg::extreme_eigenvalues(w)?;
        Ok(Self {
            n: system.state_dim(),
            trace_w: w.trace(),
            lambda_min_w,
            lambda_max_w,
            trace_hth: (h.transpose() * h).trace(),
            det_h: linalg::determinant(h),
            det_w: linalg::determinant(w),
            singular_h: linalg::singular_values(h),
        })
    }

    fn intermediates(&self, ext: &ChannelExtremes) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        out.insert("n".into(), self.n as f64);
        out.insert("trace_w".into(), self.trace_w);
        out.insert("lambda_min_w".into(), self.lambda_min_w);
        out.insert("lambda_max_w".into(), self.lambda_max_w);
        out.insert("trace_hth".into(), self.trace_hth);
        out.insert("det_h".into(), self.det_h);
        out.insert("det_w".into(), self.det_w);
        for (i, s) in self.singular_h.iter().enumerate() {
            out.insert(format!("s_h_{i}"), *s);
        }
        out.insert("channel_l".into(), ext.l as f64);
        out.insert("channel_u".into(), ext.u as f64);
        out.insert("c_l".into(), ext.c_l);
        out.insert("c_u".into(), ext.c_u);
        out.insert("sigma_l".into(), ext.sigma_l);
        out.insert("sigma_u".into(), ext.sigma_u);
        out
    }
}

fn prepare(system: &SystemModel, sigma: &[f64]) -> Result<(Spectral, ChannelExtremes)> {
    let ext = channel_extremes(system.c(), sigma)?;
    if ext.c_l == 0.0 {
        return Err(Error::DegenerateChannel { index: ext.l });
    }
    Ok((Spectral::of(system)?, ext))
}

/// Bounds on `tr Σ`, the steady-state prediction MSE.
pub fn apriori_trace_bounds(system: &SystemModel, sigma: &[f64]) -> Result<BoundReport> {
    let (sp, ext) = prepare(system, sigma)?;
    let (su2, sl2) = (ext.sigma_u.powi(2), ext.sigma_l.powi(2));
    let lower = sp.trace_w + su2 * sp.trace_hth * sp.lambda_min_w / (su2 + sp.lambda_min_w * ext.c_u.powi(2));
    let upper = sp.trace_w + sl2 * sp.trace_hth / ext.c_l.powi(2);
    Ok(BoundReport {
        kind: BoundKind::AprioriTrace,
        lower,
        upper: Some(upper),
        applicable: true,
        intermediates: sp.intermediates(&ext),
    })
}

/// Bounds on `tr Σ̄`, the steady-state estimation MSE.
pub fn aposteriori_trace_bounds(system: &SystemModel, sigma: &[f64]) -> Result<BoundReport> {
    let (sp, ext) = prepare(system, sigma)?;
    let n = sp.n as f64;
    let (su2, sl2) = (ext.sigma_u.powi(2), ext.sigma_l.powi(2));
    let lower = n * su2 / (ext.c_u.powi(2) + su2 / sp.lambda_min_w);
    let upper = n * sl2 / ext.c_l.powi(2);
    Ok(BoundReport {
        kind: BoundKind::AposterioriTrace,
        lower,
        upper: Some(upper),
        applicable: true,
        intermediates: sp.intermediates(&ext),
    })
}

/// Bounds on `ln det Σ`.
///
/// The upper bound only holds under
/// `s₁²(H) < 1 + η·C_l²/σ_l²` with `η = s_n²(H)·max γᵢ + λ_n(W)` and
/// `γᵢ = σᵢ² Wᵢᵢ / (σᵢ² + Cᵢᵢ² Wᵢᵢ)`. When that fails the report is marked
/// not applicable and carries only the lower bound. The upper expression is
/// reported as-is, including its trace-scale right-hand side.
pub fn apriori_logdet_bounds(system: &SystemModel, sigma: &[f64]) -> Result<BoundReport> {
    let (sp, ext) = prepare(system, sigma)?;
    let w = system.w();
    let c = system.c();
    let n = sp.n;

    let gamma: Vec<f64> = (0..n)
        .map(|i| {
            let s2 = sigma[i].powi(2);
            s2 * w[(i, i)] / (s2 + c[(i, i)].powi(2) * w[(i, i)])
        })
        .collect();
    let gamma_max = gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s1 = sp.singular_h.first().copied().unwrap_or(0.0);
    let sn = sp.singular_h.last().copied().unwrap_or(0.0);
    let eta = sn * sn * gamma_max + sp.lambda_min_w;

    let (su2, sl2) = (ext.sigma_u.powi(2), ext.sigma_l.powi(2));
    let precondition_rhs = 1.0 + eta * ext.min_ratio();
    let applicable = s1 * s1 < precondition_rhs;

    let sum_sq_singular: f64 = sp.singular_h.iter().map(|s| s * s).sum();
    let upper = applicable.then(|| {
        sl2 * sp.lambda_max_w / (sl2 + eta * ext.c_l.powi(2) - sl2 * s1 * s1) * sum_sq_singular + sp.trace_w
    });
    let lower = (su2 * sp.det_h.powi(2) / (su2 / sp.lambda_min_w + ext.c_u.powi(2) + su2 * (n as f64).ln())
        + sp.det_w)
        .ln();

    let mut intermediates = sp.intermediates(&ext);
    for (i, g) in gamma.iter().enumerate() {
        intermediates.insert(format!("gamma_{i}"), *g);
    }
    intermediates.insert("eta".into(), eta);
    intermediates.insert("precondition_lhs".into(), s1 * s1);
    intermediates.insert("precondition_rhs".into(), precondition_rhs);

    Ok(BoundReport {
        kind: BoundKind::AprioriLogdet,
        lower,
        upper,
        applicable,
        intermediates,
    })
}

/// Bounds on `ln det Σ̄`.
pub fn aposteriori_logdet_bounds(system: &SystemModel, sigma: &[f64]) -> Result<BoundReport> {
    let (sp, ext) = prepare(system, sigma)?;
    let n = sp.n as f64;
    let su2 = ext.sigma_u.powi(2);
    let lower = n * (su2 / (ext.c_u.powi(2) + su2 / sp.lambda_min_w)).ln();
    let upper = n * ext.sigma_l.powi(2).ln() - n * ext.c_l.powi(2).ln();
    Ok(BoundReport {
        kind: BoundKind::AposterioriLogdet,
        lower,
        upper: Some(upper),
        applicable: true,
        intermediates: sp.intermediates(&ext),
    })
}

/// The four reports in a fixed order: a priori trace, a posteriori trace,
/// a priori log-det, a posteriori log-det.
pub fn all_bounds(system: &SystemModel, sigma: &[f64]) -> Result<[BoundReport; 4]> {
    Ok([
        apriori_trace_bounds(system, sigma)?,
        aposteriori_trace_bounds(system, sigma)?,
        apriori_logdet_bounds(system, sigma)?,
        aposteriori_logdet_bounds(system, sigma)?,
    ])
}

/// Entropy of `N(μ, cov)`: `(n/2) ln(2πe) + ½ ln det cov`.
pub fn differential_entropy(cov: &Matrix) -> Result<f64> {
    linalg::ensure_symmetric(cov)?;
    let log_det = linalg::log_det_spd(cov).ok_or_else(|| Error::NotPositiveDefinite { name: "covariance".into() })?;
    let n = cov.nrows() as f64;
    Ok(0.5 * n * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + 0.5 * log_det)
}
