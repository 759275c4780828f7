use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use attractor_lab::attractor::{
    absorption_radius, barenblatt_entropy_lower, bump_cloud, collapse_rate_check, covering_entropy,
    synchronization_mc,
};
use attractor_lab::flow::{check_cocycle, FlowRun};
use attractor_lab::gelfand::DriftSpec;
use attractor_lab::noise::{sample_brownian, NoiseEnvironment};
use attractor_lab::oracles::{
    apriori_bound, barenblatt_field, barenblatt_support_radius, comparison_closed_form, equil_rate_bound,
    exponential_beta_integral, BarenblattParams,
};
use attractor_lab::stationary::{
    basis_norm_for, birkhoff_average, pullback_stationary, running_max_ratio, stationarity_check,
};
use attractor_lab::{Field, Mesh1D};

use crate::config::RunConfig;
use crate::error::{CliError, Stage};

/// One CSV file.
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($x.to_string()),*] };
}

/// Artifacts of one experiment. `failure` is set when a check did not pass;
/// the artifacts are still written.
pub struct Report {
    pub tables: Vec<Table>,
    pub json_files: Vec<(&'static str, String)>,
    pub summary: serde_json::Value,
    pub failure: Option<(&'static str, String)>,
}

impl Report {
    fn new(tables: Vec<Table>, summary: serde_json::Value) -> Self {
        Self {
            tables,
            json_files: Vec::new(),
            summary,
            failure: None,
        }
    }

    fn fail_if(mut self, failed: bool, stage: &'static str, detail: String) -> Self {
        if failed {
            self.failure = Some((stage, detail));
        }
        self
    }
}

fn noise(cfg: &RunConfig, drift: &DriftSpec) -> Result<NoiseEnvironment, CliError> {
    NoiseEnvironment::sample(&cfg.noise(cfg.run.seed), drift.triple.mesh, basis_norm_for(drift.kind()))
        .stage("noise")
}

fn initial(cfg: &RunConfig, mesh: Mesh1D) -> Field {
    let a = cfg.experiment.amplitude;
    Field::from_fn(mesh, |s| a * (PI * s / mesh.length).sin())
}

fn flow_run(cfg: &RunConfig) -> Result<FlowRun, CliError> {
    let drift = cfg.drift()?;
    let env = noise(cfg, &drift)?;
    let s_min = cfg.experiment.starts.iter().copied().fold(f64::INFINITY, f64::min);
    FlowRun::build(drift, env, (s_min, cfg.experiment.t), &cfg.pullback()).stage("pullback")
}

fn snap(x: f64, dt: f64) -> f64 {
    (x / dt).round() * dt
}

pub fn stationary(cfg: &RunConfig) -> Result<Report, CliError> {
    let drift = cfg.drift()?;
    let tr = &drift.triple;
    let env = noise(cfg, &drift)?;
    let pc = cfg.pullback();
    let e = &cfg.experiment;
    let sol = pullback_stationary(tr, &env, (e.t, e.t_end), &pc).stage("pullback")?;

    let mut path = Table::new("stationary.csv", &["t", "h_norm", "v_norm"]);
    for (t, u) in sol.u.times.iter().zip(&sol.u.states) {
        path.push(row![t, tr.h_norm_raw(u.values()), tr.v_norm_raw(u.values())]);
    }
    let mut ledger = Table::new("pullback.csv", &["start", "gap"]);
    for (i, s) in sol.pullback_starts.iter().enumerate() {
        let gap = if i == 0 { "NaN".to_string() } else { sol.cauchy_gaps[i - 1].to_string() };
        ledger.push(vec![s.to_string(), gap]);
    }
    let limit = 3.0 * pc.tol;
    let mut shifts = Table::new("stationarity.csv", &["h", "defect", "tolerance", "pass"]);
    let mut worst: f64 = 0.0;
    for h in &e.shifts {
        let d = stationarity_check(tr, &env, *h, &pc).stage("stationarity")?;
        worst = worst.max(d);
        shifts.push(row![h, d, limit, d <= limit]);
    }
    let mut birkhoff = Table::new("birkhoff.csv", &["window", "mean_h_sq", "running_max_ratio"]);
    let means = birkhoff_average(&sol, tr, 2, &e.windows).stage("birkhoff")?;
    let ratios = running_max_ratio(&sol, tr, 2, &e.windows);
    for ((w, m), r) in e.windows.iter().zip(&means).zip(&ratios) {
        birkhoff.push(row![w, m, r]);
    }
    let mut report = Report::new(
        vec![path, ledger, shifts, birkhoff],
        json!({ "doublings": sol.pullback_starts.len(), "max_stationarity_defect": worst }),
    );
    report.json_files.push(("stationary_ledger.json", sol.ledger_json()));
    Ok(report.fail_if(worst > limit, "stationarity", format!("defect {worst:e} above {limit:e}")))
}

pub fn flow(cfg: &RunConfig) -> Result<Report, CliError> {
    let run = flow_run(cfg)?;
    let tr = &run.drift.triple;
    let step = cfg.stepper();
    let pc = cfg.pullback();
    let t = cfg.experiment.t;
    let x = initial(cfg, tr.mesh);
    // Newton tolerance floors the budget; with a zero rate the dt term vanishes.
    let budget = run.dt_budget(step.dt).max(pc.tol);
    let mut table = Table::new(
        "flow.csv",
        &["s", "r", "t", "flow_defect", "cocycle_defect", "budget", "pass"],
    );
    let mut failed = 0;
    for &s in &cfg.experiment.starts {
        let r = snap(0.5 * (s + t), step.dt);
        let direct = run.flow_s(s, t, &x, &step).stage("flow")?;
        let mid = run.flow_s(s, r, &x, &step).stage("flow")?;
        let composed = run.flow_s(r, t, &mid, &step).stage("flow")?;
        let defect = tr.h_distance(&direct, &composed).stage("flow")?;
        let cocycle = check_cocycle(&run, s, t, &x, &step, &pc).stage("cocycle")?;
        let pass = defect <= budget && cocycle <= 5.0 * (pc.tol + budget);
        failed += usize::from(!pass);
        table.push(row![s, r, t, defect, cocycle, budget, pass]);
    }
    let d = run.diagnostics();
    Ok(Report::new(vec![table], json!({ "budget": budget, "max_rate": d.max_rate }))
        .fail_if(failed > 0, "flow", format!("{failed} rows above budget")))
}

pub fn absorb(cfg: &RunConfig) -> Result<Report, CliError> {
    let run = flow_run(cfg)?;
    let mut starts = cfg.experiment.starts.clone();
    starts.sort_by(f64::total_cmp);
    let s_min = starts[0];
    let rep = absorption_radius(&run, cfg.experiment.t, s_min, &starts, cfg.run.seed, &cfg.stepper())
        .stage("absorption")?;
    let mut table = Table::new("absorb.csv", &["s", "observed", "bound", "absorbed"]);
    for p in &rep.probes {
        table.push(row![p.start, p.observed, p.bound, p.start <= rep.s0]);
    }
    let summary = json!({
        "radius": rep.radius,
        "s0": rep.s0,
        "ergodic_rate": rep.ergodic_rate,
        "family_rate": rep.family_rate,
        "empirical_max": rep.empirical_max,
        "pass": rep.pass,
    });
    Ok(Report::new(vec![table], summary).fail_if(
        !rep.pass,
        "absorption",
        format!("empirical {} vs radius {}", rep.empirical_max, rep.radius),
    ))
}

pub fn collapse(cfg: &RunConfig) -> Result<Report, CliError> {
    let run = flow_run(cfg)?;
    let x = initial(cfg, run.drift.triple.mesh);
    let rep = collapse_rate_check(&run, &x, &cfg.experiment.starts, cfg.experiment.t, &cfg.stepper())
        .stage("collapse")?;
    let mut table = Table::new("collapse.csv", &["s", "observed_sq", "bound", "pass"]);
    let r = &rep.record;
    for ((s, o), b) in r.starts.iter().zip(&r.observed_sq).zip(&r.bounds) {
        table.push(row![s, o, b, *o <= b * 1.1]);
    }
    let summary = json!({ "lambda_sm": rep.lambda_sm, "reference_start": rep.reference_start, "pass": rep.pass });
    Ok(Report::new(vec![table], summary).fail_if(!rep.pass, "collapse", "observed above bound".into()))
}

pub fn sync(cfg: &RunConfig) -> Result<Report, CliError> {
    let drift = cfg.drift()?;
    let mesh = drift.triple.mesh;
    let e = &cfg.experiment;
    let (cloud, _) = bump_cloud(&drift.triple, 2, mesh.length / 4.0, e.bump_time).stage("bumps")?;
    let upper = cloud[3].clone();
    let lower = upper.scaled(-1.0);
    let template = cfg.noise(cfg.run.seed);
    let rep = synchronization_mc(&drift, (&lower, &upper), &e.times, e.paths, e.eps, &template, &cfg.stepper())
        .stage("sync")?;
    let mut table = Table::new("sync.csv", &["t", "probability", "wilson_lo", "wilson_hi"]);
    for ((t, p), (lo, hi)) in rep.times.iter().zip(&rep.probabilities).zip(&rep.intervals) {
        table.push(row![t, p, lo, hi]);
    }
    let monotone = rep.probabilities.windows(2).all(|w| w[1] <= w[0]);
    Ok(Report::new(
        vec![table],
        json!({ "paths": rep.paths, "eps": rep.eps, "order_violations": rep.order_violations, "nonincreasing": monotone }),
    ))
}

pub fn entropy(cfg: &RunConfig) -> Result<Report, CliError> {
    let drift = cfg.drift()?;
    let tr = &drift.triple;
    let e = &cfg.experiment;
    let mut counts = Table::new("entropy.csv", &["delta", "count", "ln_inv_delta", "ln_count", "exponent"]);
    for d in &e.deltas {
        match barenblatt_entropy_lower(*d, drift.alpha(), 1, tr.mesh, e.bump_time) {
            Ok(f) => counts.push(row![d, f.count, (1.0 / d).ln(), (f.count as f64).ln(), f.exponent]),
            Err(attractor_lab::LabError::NoBumpFits { .. }) => counts.push(row![d, 0, (1.0 / d).ln(), "", ""]),
            Err(err) => return Err(err).stage("entropy"),
        }
    }
    let radius = tr.mesh.length / (2.0 * e.bumps as f64);
    let mut covering = Table::new("covering.csv", &["m", "points", "separation", "delta", "count", "required"]);
    let mut short = 0;
    for m in 1..=e.bumps {
        let (cloud, sep) = bump_cloud(tr, m, radius, e.bump_time).stage("bumps")?;
        let count = covering_entropy(tr, &cloud, &[sep / 3.0]).stage("covering")?[0].1;
        let required = 1usize << (m - 1);
        short += usize::from(count < required);
        covering.push(row![m, cloud.len(), sep, sep / 3.0, count, required]);
    }
    Ok(Report::new(vec![counts, covering], json!({ "bump_radius": radius }))
        .fail_if(short > 0, "covering", format!("{short} bump clouds under-covered")))
}

fn rk4_comparison(q0: f64, beta: f64, h: f64, span: f64) -> f64 {
    let f = |y: f64| -h * y.max(0.0).powf(beta);
    let (mut y, mut t) = (q0, 0.0);
    while t < span {
        let rate = h * beta * y.max(1e-12).powf(beta - 1.0);
        let dt = (0.02 / rate).clamp(1e-9, 1e-2).min(span - t);
        let k1 = f(y);
        let k2 = f(y + 0.5 * dt * k1);
        let k3 = f(y + 0.5 * dt * k2);
        let k4 = f(y + dt * k3);
        y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += dt;
    }
    y
}

pub fn oracle(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut table = Table::new("oracle.csv", &["check", "value", "tolerance", "pass"]);
    let mut add = |name: &str, value: f64, tol: f64| {
        table.push(row![name, value, tol, value <= tol]);
        value <= tol
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (q0, beta, h, span) = (
            rng.random_range(0.1..20.0),
            rng.random_range(1.2..4.0),
            rng.random_range(0.1..5.0),
            rng.random_range(0.1..3.0),
        );
        let exact = comparison_closed_form(q0, beta, h * span).stage("oracle")?;
        worst = worst.max((rk4_comparison(q0, beta, h, span) - exact).abs() / exact);
    }
    let mut ok = add("comparison_vs_rk4", worst, 1e-6);

    let mesh = Mesh1D::new(8.0, 800).map_err(|e| CliError::Config(e.to_string()))?;
    let params = BarenblattParams::new(3.0, 1, 1.0).stage("oracle")?;
    let mut mass_drift: f64 = 0.0;
    let mut radius_err: f64 = 0.0;
    for t in [1.0, 1.5, 2.0] {
        let u = barenblatt_field(mesh, t, 4.0, &params).stage("oracle")?;
        let mass = mesh.spacing() * u.values().iter().sum::<f64>();
        mass_drift = mass_drift.max((mass - 1.0).abs());
        let r = barenblatt_support_radius(t, &params).stage("oracle")?;
        let back = BarenblattParams::mass_for_radius(3.0, 1, t, r).stage("oracle")?;
        radius_err = radius_err.max((back - 1.0).abs());
    }
    ok &= add("barenblatt_mass", mass_drift, 1e-3);
    ok &= add("barenblatt_radius_inverse", radius_err, 1e-10);

    let (p, h, beta) = (0.7, 1.3, 2.5);
    let bound = apriori_bound(&|_| p, &|_| h, beta, 0.0, 50.0).stage("oracle")?;
    let level = (2.0 * p / h).powf(1.0 / beta);
    ok &= add("apriori_constant_level", (bound.radius - level).abs() / level, 1e-12);

    let path = sample_brownian(cfg.run.seed, -10.0, 1.0, 0.01).stage("oracle")?;
    let closed = (0.5 * 2.0 * 3.0f64).powi(-2);
    let rate = equil_rate_bound(2.0, 3.0, 0.0, &path, -2.0, 1.0).stage("oracle")?;
    ok &= add("rate_bound_closed_form", (rate - closed).abs() / closed, 1e-10);

    let mut drops: f64 = 0.0;
    let mut last = 0.0;
    for j in 0..=100 {
        let v = exponential_beta_integral(1.0, &path, 1.0 - 0.1 * j as f64, 1.0).stage("oracle")?;
        drops = drops.max(last - v);
        last = v;
    }
    ok &= add("beta_integral_monotone", drops.max(0.0), 0.0);

    Ok(Report::new(vec![table], json!({ "all_pass": ok })).fail_if(!ok, "oracle", "an oracle check failed".into()))
}
