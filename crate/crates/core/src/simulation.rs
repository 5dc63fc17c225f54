//! Seeded Monte Carlo runs of the privatized system and its steady-state filter.
//!
//! Each trial draws from its own noise substreams (initial state, process
//! noise, privacy noise), so results do not depend on how trials are
//! scheduled across threads. Summaries are reduced in trial order.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds;
use crate::error::{Error, Result};
use crate::filter::FilterSolution;
use crate::linalg::{self, Matrix, Vector};
use crate::noise::{self, StreamTag};
use crate::system::SystemModel;

pub const DEFAULT_BURN_IN: usize = 10;

/// Distribution of the true initial state `x(0)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialState {
    /// `x(0) = x̂⁻(0)` exactly.
    #[default]
    AtMean,
    /// `x(0) ~ N(x̂⁻(0), cov)`.
    Gaussian(Matrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub system: SystemModel,
    /// Per-channel privacy noise scales.
    pub sigma: Vec<f64>,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub initial_state: InitialState,
    pub burn_in: usize,
}

impl SimulationConfig {
    pub fn new(system: SystemModel, sigma: Vec<f64>, horizon: usize, trials: usize, seed: u64) -> Self {
        Self {
            system,
            sigma,
            horizon,
            trials,
            seed,
            initial_state: InitialState::AtMean,
            burn_in: DEFAULT_BURN_IN,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon_T must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.sigma.len() != self.system.output_dim() {
            return Err(Error::dims(format!(
                "sigma has {} entries, system has {} outputs",
                self.sigma.len(),
                self.system.output_dim()
            )));
        }
        if let InitialState::Gaussian(cov) = &self.initial_state {
            let n = self.system.state_dim();
            if cov.shape() != (n, n) {
                return Err(Error::dims(format!("initial covariance must be {n}x{n}")));
            }
            linalg::ensure_symmetric(cov)?;
        }
        Ok(())
    }

    /// Steps `k ≥ burn_in` enter the averages; at least the last step always does.
    pub fn effective_burn_in(&self) -> usize {
        self.burn_in.min(self.horizon.saturating_sub(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationRecord {
    pub k: usize,
    pub sq_err_prior: f64,
    pub sq_err_post: f64,
    pub bound_prior_lo: f64,
    pub bound_prior_hi: f64,
    pub bound_post_lo: f64,
    pub bound_post_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub trials: usize,
    pub horizon_t: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub mean_sq_err_prior: f64,
    pub mean_sq_err_post: f64,
    /// Standard error of the mean, from the spread of per-trial averages.
    pub stderr_prior: f64,
    pub stderr_post: f64,
    pub trace_prior: f64,
    pub trace_post: f64,
    pub bound_prior_lo: f64,
    pub bound_prior_hi: f64,
    pub bound_post_lo: f64,
    pub bound_post_hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    /// `records[trial][k]`.
    pub records: Vec<Vec<SimulationRecord>>,
    pub summary: SimulationSummary,
}

/// Trace bounds `(prior_lo, prior_hi, post_lo, post_hi)`, NaN when `C` is not diagonal.
fn trace_bounds(system: &SystemModel, sigma: &[f64]) -> Result<[f64; 4]> {
    let prior = bounds::apriori_trace_bounds(system, sigma);
    let post = bounds::aposteriori_trace_bounds(system, sigma);
    match (prior, post) {
        (Ok(a), Ok(b)) => Ok([a.lower, a.upper.unwrap_or(f64::NAN), b.lower, b.upper.unwrap_or(f64::NAN)]),
        (Err(Error::NotDiagonal), _) | (_, Err(Error::NotDiagonal)) => Ok([f64::NAN; 4]),
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

fn cholesky_factor(m: &Matrix, name: &str) -> Result<Matrix> {
    if m.iter().all(|v| *v == 0.0) {
        return Ok(Matrix::zeros(m.nrows(), m.ncols()));
    }
    nalgebra::Cholesky::new(linalg::symmetrize(m))
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite { name: name.into() })
}

struct Runner<'a> {
    config: &'a SimulationConfig,
    filter: FilterSolution,
    process_factor: Matrix,
    initial_factor: Option<Matrix>,
    bounds: [f64; 4],
}

impl Runner<'_> {
    fn trial(&self, trial: usize) -> Vec<SimulationRecord> {
        let cfg = self.config;
        let sys = &cfg.system;
        let index = trial as u64;
        let mut process_rng = noise::substream(cfg.seed, index, StreamTag::Process);
        let mut privacy_rng = noise::substream(cfg.seed, index, StreamTag::Privacy);
        let sigma = Vector::from_column_slice(&cfg.sigma);

        let mut x = sys.x0_hat().clone();
        if let Some(factor) = &self.initial_factor {
            let mut rng = noise::substream(cfg.seed, index, StreamTag::InitialState);
            x += noise::correlated_normal(&mut rng, factor);
        }
        let mut prior = sys.x0_hat().clone();
        let [prior_lo, prior_hi, post_lo, post_hi] = self.bounds;

        let mut out = Vec::with_capacity(cfg.horizon);
        for k in 0..cfg.horizon {
            let v = noise::standard_normal_vector(&mut privacy_rng, sys.output_dim()).component_mul(&sigma);
            let y_tilde = sys.c() * &x + v;
            let estimate = self.filter.update(&prior, &y_tilde);
            out.push(SimulationRecord {
                k,
                sq_err_prior: (&x - &prior).norm_squared(),
                sq_err_post: (&x - &estimate).norm_squared(),
                bound_prior_lo: prior_lo,
                bound_prior_hi: prior_hi,
                bound_post_lo: post_lo,
                bound_post_hi: post_hi,
            });
            prior = self.filter.predict(&estimate);
            x = sys.h() * &x + noise::correlated_normal(&mut process_rng, &self.process_factor);
        }
        out
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs all trials (in parallel on the current rayon pool).
pub fn simulate(config: &SimulationConfig) -> Result<SimulationOutput> {
    config.validate()?;
    let filter = FilterSolution::with_sigma(&config.system, &config.sigma)?;
    let runner = Runner {
        config,
        process_factor: cholesky_factor(config.system.w(), "W")?,
        initial_factor: match &config.initial_state {
            InitialState::AtMean => None,
            InitialState::Gaussian(cov) => Some(cholesky_factor(cov, "initial covariance")?),
        },
        bounds: trace_bounds(&config.system, &config.sigma)?,
        filter,
    };

    let records: Vec<Vec<SimulationRecord>> = (0..config.trials).into_par_iter().map(|t| runner.trial(t)).collect();

    let burn_in = config.effective_burn_in();
    let per_trial = |field: fn(&SimulationRecord) -> f64| -> Vec<f64> {
        records
            .iter()
            .map(|trial| {
                let tail = &trial[burn_in..];
                tail.iter().map(field).sum::<f64>() / tail.len() as f64
            })
            .collect()
    };
    let (mean_prior, se_prior) = mean_and_stderr(&per_trial(|r| r.sq_err_prior));
    let (mean_post, se_post) = mean_and_stderr(&per_trial(|r| r.sq_err_post));
    let [prior_lo, prior_hi, post_lo, post_hi] = runner.bounds;

    let summary = SimulationSummary {
        trials: config.trials,
        horizon_t: config.horizon,
        burn_in,
        seed: config.seed,
        mean_sq_err_prior: mean_prior,
        mean_sq_err_post: mean_post,
        stderr_prior: se_prior,
        stderr_post: se_post,
        trace_prior: runner.filter.riccati.trace_prior(),
        trace_post: runner.filter.riccati.trace_posterior(),
        bound_prior_lo: prior_lo,
        bound_prior_hi: prior_hi,
        bound_post_lo: post_lo,
        bound_post_hi: post_hi,
    };
    Ok(SimulationOutput { records, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViolationStats {
    pub frac_steps_prior_outside: f64,
    pub frac_steps_post_outside: f64,
}

/// Fraction of steps whose instantaneous squared error falls outside the MSE bounds.
pub fn bound_violation_stats(records: &[SimulationRecord]) -> Result<ViolationStats> {
    if records.is_empty() {
        return Err(Error::Config("no records to summarize".into()));
    }
    let total = records.len() as f64;
    let outside = |value: f64, lo: f64, hi: f64| value < lo || value > hi;
    let prior = records
        .iter()
        .filter(|r| outside(r.sq_err_prior, r.bound_prior_lo, r.bound_prior_hi))
        .count();
    let post = records
        .iter()
        .filter(|r| outside(r.sq_err_post, r.bound_post_lo, r.bound_post_hi))
        .count();
    Ok(ViolationStats {
        frac_steps_prior_outside: prior as f64 / total,
        frac_steps_post_outside: post as f64 / total,
    })
}

pub const CSV_HEADER: &str = "trial,k,sq_err_prior,sq_err_post,bound_prior_lo,bound_prior_hi,bound_post_lo,bound_post_hi";

/// One row per `(trial, k)`, LF line endings.
pub fn write_csv<W: Write>(records: &[Vec<SimulationRecord>], out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    writer.write_record(CSV_HEADER.split(','))?;
    for (trial, rows) in records.iter().enumerate() {
        for r in rows {
            writer.write_record([
                trial.to_string(),
                r.k.to_string(),
                r.sq_err_prior.to_string(),
                r.sq_err_post.to_string(),
                r.bound_prior_lo.to_string(),
                r.bound_prior_hi.to_string(),
                r.bound_post_lo.to_string(),
                r.bound_post_hi.to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}
