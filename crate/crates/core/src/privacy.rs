//! Gaussian mechanism for output trajectories.
//!
//! A system publishes `ỹ(k) = y(k) + v(k)` with `v(k) ~ N(0, σ² I)`. With
//! adjacency radius `B`, the ℓ₂ sensitivity of the output map is at most
//! `s₁(C)·B`, and `(ε, δ)`-differential privacy holds whenever
//!
//! ```text
//! σ ≥ Δ/(2ε) · (K_δ + sqrt(K_δ² + 2ε)),   K_δ = Q⁻¹(δ)
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::noise::{self, StreamTag};

/// Range of `δ` the calibration formulas are valid for.
pub const CALIBRATION_DELTA_RANGE: (f64, f64) = (1e-5, 1e-1);

/// Standard normal tail probability `Q(y) = P(Z > y)`.
pub fn q_function(y: f64) -> f64 {
    0.5 * libm::erfc(y / std::f64::consts::SQRT_2)
}

fn normal_pdf(y: f64) -> f64 {
    (-0.5 * y * y).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Acklam's rational approximation of the standard normal quantile
/// (relative error ~1e-9), used as the starting point for refinement.
#[allow(clippy::excessive_precision)] // published coefficients, kept verbatim
fn normal_quantile_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549671366224160e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// `K_δ = Q⁻¹(δ)`, the point whose upper normal tail has mass `δ`.
pub fn q_inverse(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::OutOfDomain {
            name: "delta",
            value: delta,
            domain: "(0, 1)",
        });
    }
    if delta == 0.5 {
        return Ok(0.0);
    }
    // Q⁻¹(δ) = Φ⁻¹(1 − δ) = −Φ⁻¹(δ); refine with Halley steps on Q(x) − δ.
    let mut x = -normal_quantile_guess(delta);
    for _ in 0..20 {
        let err = q_function(x) - delta;
        let pdf = normal_pdf(x);
        if pdf == 0.0 {
            break;
        }
        // Q' = −φ, Q'' = xφ.
        let newton = err / pdf;
        let step = newton / (1.0 - 0.5 * x * newton);
        x += step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    Ok(x)
}

/// Upper bound `s₁(C)·B` on the ℓ₂ sensitivity of the output map.
pub fn sensitivity_bound(c: &Matrix, adjacency_b: f64) -> Result<f64> {
    if !(adjacency_b > 0.0 && adjacency_b.is_finite()) {
        return Err(Error::OutOfDomain {
            name: "adjacency_B",
            value: adjacency_b,
            domain: "(0, inf)",
        });
    }
    linalg::ensure_finite("C", c)?;
    let s1 = linalg::singular_values(c).first().copied().unwrap_or(0.0);
    Ok(s1 * adjacency_b)
}

/// Smallest noise scale the Gaussian mechanism allows for `(ε, δ)` and sensitivity `Δ`.
pub fn gaussian_sigma(epsilon: f64, delta: f64, sensitivity: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::OutOfDomain {
            name: "epsilon",
            value: epsilon,
            domain: "(0, inf)",
        });
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::OutOfDomain {
            name: "delta",
            value: delta,
            domain: "(0, 0.5)",
        });
    }
    if !(sensitivity >= 0.0 && sensitivity.is_finite()) {
        return Err(Error::OutOfDomain {
            name: "sensitivity",
            value: sensitivity,
            domain: "[0, inf)",
        });
    }
    let k = q_inverse(delta)?;
    Ok(sensitivity / (2.0 * epsilon) * (k + (k * k + 2.0 * epsilon).sqrt()))
}

/// Privacy parameters together with the per-channel noise scales actually used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacyConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub adjacency_b: f64,
    pub sensitivity: f64,
    pub k_delta: f64,
    pub sigma: Vec<f64>,
}

impl PrivacyConfig {
    /// Minimal isotropic mechanism for outputs `y = Cx`.
    pub fn calibrate(epsilon: f64, delta: f64, adjacency_b: f64, c: &Matrix) -> Result<Self> {
        let sensitivity = sensitivity_bound(c, adjacency_b)?;
        let sigma = gaussian_sigma(epsilon, delta, sensitivity)?;
        Ok(Self {
            epsilon,
            delta,
            adjacency_b,
            sensitivity,
            k_delta: q_inverse(delta)?,
            sigma: vec![sigma; c.nrows()],
        })
    }

    /// Replaces the noise scales. Scales below [`Self::minimum_sigma`] are
    /// accepted (e.g. to reproduce rounded published values); check
    /// [`Self::meets_mechanism_bound`] before relying on the privacy guarantee.
    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != self.sigma.len() {
            return Err(Error::dims(format!(
                "sigma must have {} entries, got {}",
                self.sigma.len(),
                sigma.len()
            )));
        }
        if let Some(&s) = sigma.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::OutOfDomain {
                name: "sigma",
                value: s,
                domain: "[0, inf)",
            });
        }
        self.sigma = sigma;
        Ok(self)
    }

    pub fn minimum_sigma(&self) -> f64 {
        self.sensitivity / (2.0 * self.epsilon) * (self.k_delta + (self.k_delta.powi(2) + 2.0 * self.epsilon).sqrt())
    }

    pub fn meets_mechanism_bound(&self) -> bool {
        let floor = self.minimum_sigma();
        self.sigma.iter().all(|&s| s >= floor)
    }

    /// `V = diag(σ₁², …, σ_q²)`.
    pub fn noise_covariance(&self) -> Matrix {
        Matrix::from_diagonal(&Vector::from_iterator(self.sigma.len(), self.sigma.iter().map(|s| s * s)))
    }
}

/// A finite sequence of equally sized real vectors indexed by time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    samples: Vec<Vector>,
}

impl Trajectory {
    pub fn new(dim: usize, samples: Vec<Vector>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::dims("trajectory dimension must be positive"));
        }
        for (k, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::dims(format!("sample {k} has length {}, expected {dim}", s.len())));
            }
            if !s.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { name: format!("sample {k}") });
            }
        }
        Ok(Self { dim, samples })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Vector] {
        &self.samples
    }
}

/// Adds independent `N(0, σᵢ²)` noise to every channel of every sample.
pub fn privatize(y: &Trajectory, sigma: &[f64], rng_seed: u64) -> Result<Trajectory> {
    if sigma.len() != y.dim() {
        return Err(Error::dims(format!("sigma has {} entries, trajectory dimension is {}", sigma.len(), y.dim())));
    }
    if let Some(&s) = sigma.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::OutOfDomain {
            name: "sigma",
            value: s,
            domain: "[0, inf)",
        });
    }
    let mut rng = noise::substream(rng_seed, 0, StreamTag::Privacy);
    let samples = y
        .samples()
        .iter()
        .map(|sample| {
            let z = noise::standard_normal_vector(&mut rng, y.dim());
            Vector::from_iterator(y.dim(), sample.iter().zip(z.iter()).zip(sigma).map(|((v, z), s)| v + s * z))
        })
        .collect();
    Ok(Trajectory { dim: y.dim(), samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Composite Simpson on the truncated tail integral.
    fn q_by_quadrature(y: f64) -> f64 {
        if y < 0.0 {
            return 1.0 - q_by_quadrature(-y);
        }
        // Tail beyond y + 12 is below 1e-32.
        let upper = y + 12.0;
        let steps = 24_000;
        let h = (upper - y) / steps as f64;
        let mut sum = normal_pdf(y) + normal_pdf(upper);
        for i in 1..steps {
            let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += weight * normal_pdf(y + i as f64 * h);
        }
        sum * h / 3.0
    }

    fn q_inverse_by_bisection(delta: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if q_by_quadrature(mid) > delta {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-10 {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn q_function_values() {
        assert_eq!(q_function(0.0), 0.5);
        assert!(q_function(40.0) < 1e-300);
        assert_abs_diff_eq!(q_function(1.6449), 0.05, epsilon = 1e-4);
        for y in [-2.0, -0.3, 0.7, 1.6449, 3.1, 5.0] {
            assert_abs_diff_eq!(q_function(y), q_by_quadrature(y), epsilon = 1e-12);
        }
    }

    #[test]
    fn q_inverse_matches_bisection_oracle() {
        assert_eq!(q_inverse(0.5).unwrap(), 0.0);
        // Frozen from the bisection oracle: 3.090232..., 1.644854...
        assert_abs_diff_eq!(q_inverse(0.001).unwrap(), 3.090232, epsilon = 1e-5);
        assert_abs_diff_eq!(q_inverse(0.05).unwrap(), 1.644854, epsilon = 1e-5);
        for delta in [0.001, 0.05, 1e-5] {
            assert_abs_diff_eq!(q_inverse(delta).unwrap(), q_inverse_by_bisection(delta), epsilon = 1e-8);
        }
    }

    #[test]
    fn q_inverse_round_trip() {
        let mut deltas: Vec<f64> = (1..=5).map(|e| 10f64.powi(-e)).collect();
        deltas.extend([0.2, 0.3, 0.4, 0.6, 0.9, 0.999]);
        for delta in deltas {
            let k = q_inverse(delta).unwrap();
            assert!((q_function(k) - delta).abs() <= 1e-12, "delta {delta}: {}", q_function(k));
        }
    }

    #[test]
    fn q_inverse_domain() {
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(q_inverse(bad), Err(Error::OutOfDomain { .. })));
        }
    }

    #[test]
    fn k_delta_enclosure_over_calibration_range() {
        let lo = q_inverse(CALIBRATION_DELTA_RANGE.1).unwrap();
        let hi = q_inverse(CALIBRATION_DELTA_RANGE.0).unwrap();
        assert_abs_diff_eq!(lo, 1.2815, epsilon = 1e-4);
        assert_abs_diff_eq!(hi, 4.2649, epsilon = 1e-4);
        assert!(1.0 <= lo && hi <= 4.5);
    }

    #[test]
    fn sensitivity_examples() {
        assert_eq!(sensitivity_bound(&Matrix::identity(2, 2), 1.0).unwrap(), 1.0);
        let c = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert_abs_diff_eq!(sensitivity_bound(&c, 3.0).unwrap(), 6.0, epsilon = 1e-14);
        assert!(sensitivity_bound(&c, 0.0).is_err());
    }

    #[test]
    fn sensitivity_matches_sphere_sampling() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let c = Matrix::from_fn(3, 3, |_, _| rng.random_range(-2.0..2.0));
        // Dense sampling of the unit sphere, then local refinement of the best
        // direction by power iteration on CᵀC (stays a sphere-restricted search).
        let mut best = 0.0_f64;
        let mut best_dir = Vector::zeros(3);
        for _ in 0..200_000 {
            let v = crate::noise::standard_normal_vector(&mut rng, 3).normalize();
            let norm = (&c * &v).norm();
            if norm > best {
                best = norm;
                best_dir = v;
            }
        }
        let gram = c.transpose() * &c;
        for _ in 0..50 {
            best_dir = (&gram * &best_dir).normalize();
        }
        best = best.max((&c * &best_dir).norm());
        assert_abs_diff_eq!(sensitivity_bound(&c, 1.0).unwrap(), best, epsilon = 1e-3);
    }

    #[test]
    fn gaussian_sigma_examples() {
        // Reported value 2.96 for the case study.
        assert_abs_diff_eq!(gaussian_sigma(3f64.ln(), 0.001, 1.0).unwrap(), 2.9663, epsilon = 5e-3);
        assert_eq!(gaussian_sigma(0.5, 0.01, 0.0).unwrap(), 0.0);
        let k = 1.644854_f64;
        let expected = 2.0 * (k + (k * k + 2.0).sqrt()) / 2.0;
        assert_abs_diff_eq!(gaussian_sigma(1.0, 0.05, 2.0).unwrap(), expected, epsilon = 1e-5);
        assert!(gaussian_sigma(0.0, 0.01, 1.0).is_err());
        assert!(gaussian_sigma(1.0, 0.5, 1.0).is_err());
        assert!(gaussian_sigma(1.0, 0.01, -1.0).is_err());
    }

    #[test]
    fn privacy_config_from_output_matrix() {
        let c = Matrix::identity(2, 2);
        let cfg = PrivacyConfig::calibrate(3f64.ln(), 0.001, 1.0, &c).unwrap();
        assert_eq!(cfg.sigma.len(), 2);
        assert!(cfg.meets_mechanism_bound());
        assert_abs_diff_eq!(cfg.k_delta, q_inverse(0.001).unwrap(), epsilon = 1e-15);
        let rounded = cfg.clone().with_sigma(vec![2.96, 2.96]).unwrap();
        assert!(!rounded.meets_mechanism_bound());
        assert!(cfg.with_sigma(vec![1.0]).is_err());
    }

    fn zeros(dim: usize, len: usize) -> Trajectory {
        Trajectory::new(dim, vec![Vector::zeros(dim); len]).unwrap()
    }

    #[test]
    fn privatize_without_noise_is_identity() {
        let y = Trajectory::new(2, vec![Vector::from_vec(vec![1.0, -2.0]), Vector::from_vec(vec![0.5, 3.0])]).unwrap();
        assert_eq!(privatize(&y, &[0.0, 0.0], 5).unwrap(), y);
    }

    #[test]
    fn privatize_is_deterministic_per_seed() {
        let y = zeros(3, 50);
        assert_eq!(privatize(&y, &[1.0, 2.0, 3.0], 9).unwrap(), privatize(&y, &[1.0, 2.0, 3.0], 9).unwrap());
        assert_ne!(privatize(&y, &[1.0, 2.0, 3.0], 9).unwrap(), privatize(&y, &[1.0, 2.0, 3.0], 10).unwrap());
    }

    #[test]
    fn privatize_noise_statistics() {
        let t = 100_000;
        let out = privatize(&zeros(2, t), &[3.0, 3.0], 2024).unwrap();
        for ch in 0..2 {
            let xs: Vec<f64> = out.samples().iter().map(|s| s[ch]).collect();
            let mean = xs.iter().sum::<f64>() / t as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
            assert!((8.83..=9.17).contains(&var), "channel {ch} variance {var}");
            let lag1 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / ((t - 1) as f64 * var);
            assert!(lag1.abs() <= 0.01, "channel {ch} lag-1 autocorrelation {lag1}");
        }
    }
}
