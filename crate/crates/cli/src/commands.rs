use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use dpkalman::bounds;
use dpkalman::calibration;
use dpkalman::config::{ConfigFile, Model};
use dpkalman::network;
use dpkalman::simulation::{self, SimulationSummary};
use dpkalman::{BoundReport, CalibrationKind, Error, FilterSolution, Result};
use serde_json::{json, Value};

use crate::format::{opt6, sig6};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// What a successful command prints.
pub struct Report {
    pub json: Value,
    pub human: String,
    pub warnings: Vec<String>,
    pub status: u8,
}

impl Report {
    fn ok(json: Value, human: String) -> Self {
        Self {
            json,
            human,
            warnings: Vec::new(),
            status: EXIT_OK,
        }
    }
}

pub fn exit_status(e: &Error) -> u8 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INVALID
    }
}

/// Warns about noise scales below the mechanism's minimum (allowed, e.g. to
/// reproduce rounded published values, but no longer private).
fn sigma_warnings(model: &Model) -> Vec<String> {
    let below = |id: Option<&str>, p: &dpkalman::PrivacyConfig| {
        (!p.meets_mechanism_bound()).then(|| {
            let who = id.map(|id| format!("agent `{id}`: ")).unwrap_or_default();
            format!(
                "{who}sigma override {:?} is below the mechanism minimum {}; the (epsilon, delta) guarantee does not hold",
                p.sigma,
                sig6(p.minimum_sigma())
            )
        })
    };
    match model {
        Model::Single { privacy, .. } => below(None, privacy).into_iter().collect(),
        Model::Network(net) => net
            .agents
            .iter()
            .filter_map(|a| below(Some(&a.id), &a.privacy))
            .collect(),
    }
}

fn load(path: &Path) -> Result<(ConfigFile, Model)> {
    let cfg = ConfigFile::load(path)?;
    let model = cfg.model()?;
    Ok((cfg, model))
}

pub fn calibrate(path: &Path, kind: Option<CalibrationKind>) -> Result<Report> {
    let (cfg, model) = load(path)?;
    let target = cfg.calibration_target(kind)?;
    let interval = calibration::calibrate(model.system(), &target)?;

    let mut human = String::new();
    let _ = writeln!(human, "kind          {}", kind_name(interval.kind));
    let _ = writeln!(human, "target        [{}, {}]", sig6(target.b_l), sig6(target.b_u));
    let _ = writeln!(human, "eps_min       {}", sig6(interval.eps_min));
    let _ = writeln!(human, "eps_max       {}", sig6(interval.eps_max));
    for (name, eta) in &interval.eta_values {
        let _ = writeln!(human, "{name:<13} {}", sig6(*eta));
    }
    let _ = writeln!(human, "sigma(eps_min) {}", sig6(interval.sigma_at_eps_min));
    let _ = writeln!(human, "sigma(eps_max) {}", sig6(interval.sigma_at_eps_max));
    let _ = writeln!(
        human,
        "feasible      {}",
        if interval.feasible { "yes" } else { "no (eps_min > eps_max)" }
    );

    let mut report = Report::ok(json!({ "target": target, "interval": interval }), human);
    if !interval.feasible {
        report.status = EXIT_INFEASIBLE;
        report.warnings.push(format!(
            "infeasible target: eps_min = {} exceeds eps_max = {}",
            sig6(interval.eps_min),
            sig6(interval.eps_max)
        ));
    }
    Ok(report)
}

fn bounds_table(reports: &[BoundReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<20} {:>12} {:>12} {:>10}", "bound", "lower", "upper", "applicable");
    for r in reports {
        let kind = serde_json::to_value(r.kind).expect("kind serializes");
        let _ = writeln!(
            out,
            "{:<20} {:>12} {:>12} {:>10}",
            kind.as_str().unwrap_or("?"),
            sig6(r.lower),
            opt6(r.upper),
            r.applicable
        );
    }
    out
}

pub fn bounds(path: &Path) -> Result<Report> {
    let (_, model) = load(path)?;
    let sigma = model.sigma();
    let reports = bounds::all_bounds(model.system(), &sigma)?;

    let mut human = format!("sigma {}\n", sigma.iter().map(|s| sig6(*s)).collect::<Vec<_>>().join(" "));
    human.push_str(&bounds_table(&reports));
    let mut report = Report::ok(json!({ "sigma": sigma, "bounds": reports }), human);
    report.warnings = sigma_warnings(&model);
    Ok(report)
}

pub struct SimulateOptions {
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn summary_table(s: &SimulationSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "trials {}  horizon_T {}  burn_in {}  seed {}", s.trials, s.horizon_t, s.burn_in, s.seed);
    let _ = writeln!(
        out,
        "{:<10} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "", "mean", "stderr", "trace", "bound_lo", "bound_hi"
    );
    for (name, mean, se, tr, lo, hi) in [
        ("prior", s.mean_sq_err_prior, s.stderr_prior, s.trace_prior, s.bound_prior_lo, s.bound_prior_hi),
        ("posterior", s.mean_sq_err_post, s.stderr_post, s.trace_post, s.bound_post_lo, s.bound_post_hi),
    ] {
        let _ = writeln!(
            out,
            "{name:<10} {:>12} {:>12} {:>12} {:>12} {:>12}",
            sig6(mean),
            sig6(se),
            sig6(tr),
            sig6(lo),
            sig6(hi)
        );
    }
    out
}

pub fn simulate(path: &Path, opts: &SimulateOptions) -> Result<Report> {
    let (cfg, model) = load(path)?;
    let sim_cfg = cfg.simulation_config(&model, opts.seed)?;

    // Open outputs first so a bad path fails before the (possibly long) run.
    let csv_out = opts.out.as_deref().map(create).transpose()?;
    let summary_out = opts.summary.as_deref().map(create).transpose()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    let output = pool.install(|| simulation::simulate(&sim_cfg))?;

    if let (Some(mut w), Some(path)) = (csv_out, opts.out.as_deref()) {
        simulation::write_csv(&output.records, &mut w)?;
        w.flush().map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    if let (Some(mut w), Some(path)) = (summary_out, opts.summary.as_deref()) {
        let text = serde_json::to_string_pretty(&output.summary).expect("summary serializes");
        writeln!(w, "{text}")
            .and_then(|_| w.flush())
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }

    let mut report = Report::ok(json!(output.summary), summary_table(&output.summary));
    report.warnings = sigma_warnings(&model);
    Ok(report)
}

pub fn dare(path: &Path) -> Result<Report> {
    let (_, model) = load(path)?;
    let sol = FilterSolution::with_sigma(model.system(), &model.sigma())?;
    let r = &sol.riccati;
    let json = json!({
        "trace_sigma": r.trace_prior(),
        "trace_sigma_bar": r.trace_posterior(),
        "log_det_sigma": r.log_det_prior(),
        "log_det_sigma_bar": r.log_det_posterior(),
        "iterations": r.iterations,
        "residual": r.residual,
    });
    let mut human = String::new();
    let _ = writeln!(human, "tr Sigma          {}", sig6(r.trace_prior()));
    let _ = writeln!(human, "tr Sigma_bar      {}", sig6(r.trace_posterior()));
    let _ = writeln!(human, "ln det Sigma      {}", sig6(r.log_det_prior()));
    let _ = writeln!(human, "ln det Sigma_bar  {}", sig6(r.log_det_posterior()));
    let _ = writeln!(human, "iterations        {}", r.iterations);
    let _ = writeln!(human, "residual          {}", sig6(r.residual));
    let mut report = Report::ok(json, human);
    report.warnings = sigma_warnings(&model);
    Ok(report)
}

pub fn compose(path: &Path) -> Result<Report> {
    let cfg = ConfigFile::load(path)?;
    let net = cfg.network()?;
    let sigma = net.sigma();
    let sol = FilterSolution::with_sigma(&net.system, &sigma)?;
    let slices = network::per_agent_slices(&net, &sol)?;
    // Only available when every agent's C is diagonal.
    let network_bounds = match bounds::all_bounds(&net.system, &sigma) {
        Ok(b) => Some(b),
        Err(Error::NotDiagonal) => None,
        Err(e) => return Err(e),
    };

    let agents: Vec<Value> = net
        .agents
        .iter()
        .zip(&net.offsets)
        .zip(&net.output_offsets)
        .zip(&slices)
        .map(|(((a, s), o), slice)| {
            json!({
                "id": a.id,
                "state_offset": [s.start, s.end],
                "output_offset": [o.start, o.end],
                "trace_prior": slice.trace_prior,
                "trace_posterior": slice.trace_posterior,
            })
        })
        .collect();
    let json = json!({
        "state_dim": net.system.state_dim(),
        "output_dim": net.system.output_dim(),
        "agents": agents,
        "trace_prior": sol.riccati.trace_prior(),
        "trace_posterior": sol.riccati.trace_posterior(),
        "bounds": network_bounds,
    });

    let mut human = String::new();
    let _ = writeln!(
        human,
        "{} agents, n = {}, q = {}",
        net.len(),
        net.system.state_dim(),
        net.system.output_dim()
    );
    let _ = writeln!(
        human,
        "{:<12} {:>10} {:>10} {:>12} {:>12}",
        "agent", "state", "output", "tr Sigma", "tr Sigma_bar"
    );
    for (((a, s), o), slice) in net.agents.iter().zip(&net.offsets).zip(&net.output_offsets).zip(&slices) {
        let _ = writeln!(
            human,
            "{:<12} {:>10} {:>10} {:>12} {:>12}",
            a.id,
            format!("{}..{}", s.start, s.end),
            format!("{}..{}", o.start, o.end),
            sig6(slice.trace_prior),
            sig6(slice.trace_posterior)
        );
    }
    let _ = writeln!(
        human,
        "{:<12} {:>10} {:>10} {:>12} {:>12}",
        "network",
        "",
        "",
        sig6(sol.riccati.trace_prior()),
        sig6(sol.riccati.trace_posterior())
    );
    match &network_bounds {
        Some(b) => human.push_str(&bounds_table(b)),
        None => human.push_str("bounds unavailable: some agent has a non-diagonal C\n"),
    }

    let mut report = Report::ok(json, human);
    report.warnings = sigma_warnings(&Model::Network(net));
    Ok(report)
}

fn kind_name(kind: CalibrationKind) -> &'static str {
    match kind {
        CalibrationKind::Apriori => "apriori",
        CalibrationKind::Aposteriori => "aposteriori",
    }
}
