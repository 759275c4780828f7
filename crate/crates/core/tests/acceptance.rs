//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use attractor_lab::attractor::{
    absorption_radius, barenblatt_entropy_lower, bump_cloud, collapse_rate_check, covering_entropy,
    synchronization_mc,
};
use attractor_lab::flow::{check_cocycle, FlowRun};
use attractor_lab::gelfand::{measure_m_constant, probe_field, DriftParams, DriftSpec, TripleKind, TripleSpec};
use attractor_lab::noise::{
    dirichlet_basis, ou_stationary, power_law_eigenvalues, sample_brownian, sample_trace_class_wiener, BasisNorm,
    NoiseConfig, NoiseEnvironment,
};
use attractor_lab::oracles::{apriori_bound, barenblatt_field, comparison_closed_form, BarenblattParams};
use attractor_lab::stationary::{stationarity_check, verify_contraction, PullbackConfig};
use attractor_lab::stepper::{integrate, RandomPdeProblem, StepperConfig};
use attractor_lab::{Field, Mesh1D};

const COMPARISON_REL_TOL: f64 = 1e-6;
const BARENBLATT_L2_TOL: f64 = 0.02;
const BARENBLATT_MASS_TOL: f64 = 0.005;
const STATIONARITY_FACTOR: f64 = 3.0;
const COCYCLE_FACTOR: f64 = 5.0;
const ENTROPY_SLOPE_FRACTION: f64 = 0.85;
const SYNC_EPS: f64 = 0.05;
const OU_VARIANCE_TOL: f64 = 0.03;
const TRACE_REL_TOL: f64 = 0.05;
const MU_MOMENT_REL_TOL: f64 = 0.10;
const SEEDS: [u64; 5] = [101, 202, 303, 404, 505];

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Result<Outcome, attractor_lab::LabError>;

fn outcome(pass: bool, detail: String) -> Result<Outcome, attractor_lab::LabError> {
    Ok(Outcome { pass, detail })
}

fn sine(mesh: Mesh1D, amp: f64) -> Field {
    Field::from_fn(mesh, |s| amp * (PI * s / mesh.length).sin())
}

/// Classical RK4 on `y' = −h y^β + p` with steps shrunk where the right side is stiff.
fn rk4(y0: f64, beta: f64, h: f64, p: f64, span: f64) -> f64 {
    let f = |y: f64| -h * y.max(0.0).powf(beta) + p;
    let (mut y, mut t) = (y0, 0.0);
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

fn comparison_oracle() -> Result<Outcome, attractor_lab::LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let q0 = rng.random_range(0.1..20.0);
        let beta = rng.random_range(1.2..4.0);
        let h = rng.random_range(0.1..5.0);
        let span = rng.random_range(0.1..3.0);
        let exact = comparison_closed_form(q0, beta, h * span)?;
        worst = worst.max((rk4(q0, beta, h, 0.0, span) - exact).abs() / exact);
    }
    outcome(worst <= COMPARISON_REL_TOL, format!("max rel. error {worst:.2e}"))
}

fn apriori() -> Result<Outcome, attractor_lab::LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_ratio: f64 = 0.0;
    let t = 0.0;
    for _ in 0..20 {
        let p = rng.random_range(0.05..5.0);
        let h = rng.random_range(0.2..5.0);
        let beta = rng.random_range(1.5..4.0);
        let bound = apriori_bound(&|_| p, &|_| h, beta, t, 100.0)?;
        for start in [t - 10.0, t - 50.0] {
            if start > bound.a1 {
                return outcome(false, format!("a1 = {} later than start {start}", bound.a1));
            }
            let y0 = rng.random_range(1.0..50.0);
            let y = rk4(y0, beta, h, p, t - start);
            worst_ratio = worst_ratio.max(y / bound.radius);
        }
    }
    outcome(worst_ratio <= 1.0, format!("max y(t)/R = {worst_ratio:.4}"))
}

fn barenblatt_regression() -> Result<Outcome, attractor_lab::LabError> {
    let mesh = Mesh1D::new(8.0, 400)?;
    let drift = DriftSpec::new(DriftParams::p_laplace(3.0, 0.0), mesh)?;
    let params = BarenblattParams::new(3.0, 1, 1.0)?;
    let centre = 4.0;
    let initial = barenblatt_field(mesh, 1.0, centre, &params)?;
    let problem = RandomPdeProblem {
        rhs: &drift,
        forcing: None,
        t_start: 1.0,
        t_end: 2.0,
        initial: initial.clone(),
        triple: &drift.triple,
    };
    let cfg = StepperConfig {
        record_from: 2.0,
        ..StepperConfig::with_dt(1e-3)
    };
    let traj = integrate(&problem, &cfg)?;
    let end = traj.last().expect("final state");
    let exact = barenblatt_field(mesh, 2.0, centre, &params)?;
    let tr = &drift.triple;
    let rel = tr.h_distance(end, &exact)? / tr.h_norm(&exact)?;
    let mass = |f: &Field| mesh.spacing() * f.values().iter().sum::<f64>();
    let drift_rel = (mass(end) - mass(&initial)).abs() / mass(&initial);
    outcome(
        rel <= BARENBLATT_L2_TOL && drift_rel <= BARENBLATT_MASS_TOL,
        format!("L2 rel. error {rel:.4}, mass drift {drift_rel:.2e}"),
    )
}

fn contraction() -> Result<Outcome, attractor_lab::LabError> {
    let mesh = Mesh1D::new(1.0, 32)?;
    let tr = TripleSpec::new(TripleKind::PLaplace, 3.0, mesh)?;
    let c_hat = measure_m_constant(&tr, 200, 4);
    let nc = NoiseConfig::power_law(4, (-12.0, 5.0), 0.01, 0.0, 1.0, 8, 2.0);
    let noise = NoiseEnvironment::sample(&nc, mesh, BasisNorm::L2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let cfg = StepperConfig::with_dt(0.01);
    let (mut fails, mut worst) = (0, 0.0f64);
    for _ in 0..20 {
        let s1 = -(rng.random_range(1..=1000) as f64) * 0.01;
        let s2 = s1 + rng.random_range(0..=200) as f64 * 0.01;
        let t = s2 + rng.random_range(1..=200) as f64 * 0.01;
        let x = Field::from_values(mesh, probe_field(&mut rng, mesh))?.scaled(5.0);
        let y = Field::from_values(mesh, probe_field(&mut rng, mesh))?.scaled(5.0);
        let rep = verify_contraction(&tr, &noise, &x, &y, (s1, s2, t), c_hat, &cfg)?;
        worst = worst.max(rep.observed / rep.bound);
        fails += usize::from(!rep.pass);
    }
    outcome(fails == 0, format!("c_hat = {c_hat:.4}, max observed/bound {worst:.3e}, {fails} failures"))
}

fn stationarity() -> Result<Outcome, attractor_lab::LabError> {
    let mesh = Mesh1D::new(1.0, 32)?;
    let tr = TripleSpec::new(TripleKind::PLaplace, 3.0, mesh)?;
    let pc = PullbackConfig::default();
    let mut worst: f64 = 0.0;
    for seed in SEEDS {
        let nc = NoiseConfig::power_law(seed, (-90.0, 3.0), 0.01, 0.5, 1.0, 8, 2.0);
        let noise = NoiseEnvironment::sample(&nc, mesh, BasisNorm::L2)?;
        for h in [0.5, 1.0, 2.0] {
            worst = worst.max(stationarity_check(&tr, &noise, h, &pc)?);
        }
    }
    outcome(worst <= STATIONARITY_FACTOR * pc.tol, format!("max defect {worst:.2e}"))
}

fn flow_cocycle() -> Result<Outcome, attractor_lab::LabError> {
    let mesh = Mesh1D::new(1.0, 32)?;
    let pc = PullbackConfig::default();
    let cfg = StepperConfig::with_dt(0.01);
    let x = sine(mesh, 2.0);
    let (mut worst_flow, mut worst_cocycle) = (0.0f64, 0.0f64);
    let mut pass = true;
    for seed in SEEDS {
        let drift = DriftSpec::new(DriftParams::p_laplace(3.0, 0.0).with_noise(0.5, 1.0), mesh)?;
        let nc = NoiseConfig::power_law(seed, (-90.0, 4.0), 0.01, 0.5, 1.0, 8, 2.0);
        let noise = NoiseEnvironment::sample(&nc, mesh, BasisNorm::L2)?;
        let run = FlowRun::build(drift, noise, (-2.0, 3.0), &pc)?;
        let tr = &run.drift.triple;
        let direct = run.flow_s(-1.0, 1.0, &x, &cfg)?;
        let half = run.flow_s(-1.0, 0.0, &x, &cfg)?;
        let composed = run.flow_s(0.0, 1.0, &half, &cfg)?;
        let flow_defect = tr.h_distance(&direct, &composed)?;
        let budget = run.dt_budget(cfg.dt);
        pass &= flow_defect <= budget;
        let cocycle = check_cocycle(&run, 1.0, 2.0, &x, &cfg, &pc)?;
        pass &= cocycle <= COCYCLE_FACTOR * (pc.tol + budget);
        pass &= check_cocycle(&run, 0.0, 1.0, &x, &cfg, &pc)? == 0.0;
        pass &= run.flow_s(1.0, 1.0, &x, &cfg)? == x;
        worst_flow = worst_flow.max(flow_defect / budget.max(f64::MIN_POSITIVE));
        worst_cocycle = worst_cocycle.max(cocycle);
    }
    outcome(
        pass,
        format!("max flow defect/budget {worst_flow:.2e}, max cocycle defect {worst_cocycle:.2e}"),
    )
}

fn collapse() -> Result<Outcome, attractor_lab::LabError> {
    let mesh = Mesh1D::new(1.0, 32)?;
    let pc = PullbackConfig::default();
    let cfg = StepperConfig::with_dt(0.01);
    let x = sine(mesh, 3.0);
    let s_list: Vec<f64> = (1..=10).map(|i| 1.0 - 0.5 * i as f64).collect();
    let (mut runs, mut failed, mut worst) = (0, 0, 0.0f64);
    for alpha in [3.0, 4.0] {
        for mu in [0.0, 0.5] {
            for seed in SEEDS {
                let drift = DriftSpec::new(DriftParams::p_laplace(alpha, 0.0).with_noise(mu, 1.0), mesh)?;
                let nc = NoiseConfig::power_law(seed, (-80.0, 2.0), 0.01, mu, 1.0, 8, 2.0);
                let noise = NoiseEnvironment::sample(&nc, mesh, BasisNorm::L2)?;
                let run = FlowRun::build(drift, noise, (-5.0, 1.0), &pc)?;
                let rep = collapse_rate_check(&run, &x, &s_list, 1.0, &cfg)?;
                for (o, b) in rep.record.observed_sq.iter().zip(&rep.record.bounds) {
                    worst = worst.max(o / b);
                }
                runs += 1;
                failed += usize::from(!rep.pass);
            }
        }
    }
    outcome(failed == 0, format!("{runs} runs, {failed} failed, max observed/bound {worst:.3e}"))
}

fn absorption() -> Result<Outcome, attractor_lab::LabError> {
    let mesh = Mesh1D::new(1.0, 32)?;
    let pc = PullbackConfig::default();
    let cfg = StepperConfig::with_dt(0.01);
    let starts = [-20.0, -15.0, -10.0, -5.0, -2.0, -1.0, 0.0];
    let (mut pass, mut worst) = (true, 0.0f64);
    let mut s0_min = f64::INFINITY;
    for seed in SEEDS {
        let drift = DriftSpec::new(DriftParams::p_laplace(3.0, 0.0).with_noise(0.5, 1.0), mesh)?;
        let nc = NoiseConfig::power_law(seed, (-90.0, 2.0), 0.01, 0.5, 1.0, 8, 2.0);
        let noise = NoiseEnvironment::sample(&nc, mesh, BasisNorm::L2)?;
        let run = FlowRun::build(drift, noise, (-22.0, 1.0), &pc)?;
        let rep = absorption_radius(&run, 1.0, -20.0, &starts, seed, &cfg)?;
        let checked = rep.probes.iter().filter(|p| p.start <= rep.s0).count();
        pass &= rep.pass && checked > 0;
        worst = worst.max(rep.empirical_max / rep.radius);
        s0_min = s0_min.min(rep.s0);
    }
    outcome(pass, format!("max empirical/R {worst:.3e}, smallest s0 {s0_min:.2}"))
}

fn entropy() -> Result<Outcome, attractor_lab::LabError> {
    let mesh = Mesh1D::new(8.0, 400)?;
    let deltas: Vec<f64> = (0..=10).map(|i| 0.02 * 10f64.powf(i as f64 / 10.0)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = deltas
        .iter()
        .map(|d| {
            barenblatt_entropy_lower(*d, 3.0, 1, mesh, 1.0).map(|f| ((1.0 / d).ln(), (f.count as f64).ln()))
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .unzip();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let tr = TripleSpec::new(TripleKind::PLaplace, 3.0, mesh)?;
    let mut covers_ok = true;
    for m in 1..=10 {
        let (cloud, sep) = bump_cloud(&tr, m, 0.2, 0.05)?;
        let count = covering_entropy(&tr, &cloud, &[sep / 3.0])?[0].1;
        covers_ok &= count >= 1 << (m - 1);
    }
    outcome(
        slope >= ENTROPY_SLOPE_FRACTION && covers_ok,
        format!("slope {slope:.3}, covering counts ok: {covers_ok}"),
    )
}

fn synchronization() -> Result<Outcome, attractor_lab::LabError> {
    let mesh = Mesh1D::new(1.0, 32)?;
    let times = [10.0, 25.0, 50.0];
    let cfg = StepperConfig::with_dt(0.01);
    let run = |sigma: f64| -> Result<Vec<f64>, attractor_lab::LabError> {
        let drift = DriftSpec::new(DriftParams::p_laplace(3.0, 20.0).with_noise(0.0, sigma), mesh)?;
        let (cloud, _) = bump_cloud(&drift.triple, 2, 0.25, 0.05)?;
        let upper = cloud[3].clone();
        let lower = upper.scaled(-1.0);
        let nc = NoiseConfig::power_law(1000, (-1.0, 50.0), 0.01, 0.0, sigma, 8, 2.0);
        let rep = synchronization_mc(&drift, (&lower, &upper), &times, 100, SYNC_EPS, &nc, &cfg)?;
        Ok(rep.probabilities)
    };
    let noisy = run(1.0)?;
    let control = run(0.0)?;
    let monotone = noisy.windows(2).all(|w| w[1] <= w[0]);
    let stuck = control.iter().all(|p| *p == 1.0);
    outcome(monotone && stuck, format!("P(diam > {SYNC_EPS}) = {noisy:?}, control {control:?}"))
}

fn noise_statistics() -> Result<Outcome, attractor_lab::LabError> {
    const SAMPLES: u64 = 10_000;
    let mu = 0.5;
    let mesh = Mesh1D::new(1.0, 32)?;
    let eig = power_law_eigenvalues(8, 2.0, 1.0);
    let trace: f64 = eig.iter().sum();
    let basis = dirichlet_basis(mesh, 8, BasisNorm::L2)?;
    let tr = TripleSpec::new(TripleKind::PLaplace, 2.0, mesh)?;
    let (mut var, mut w2, mut mu2) = (0.0, 0.0, 0.0);
    for seed in 0..SAMPLES {
        let beta = sample_brownian(seed, -20.0, 0.5, 0.01)?;
        let ou = ou_stationary(&beta, mu, 20.0)?;
        let z = ou.z(0.0)?;
        var += z * z;
        mu2 += ou.mu(0.0)?.powi(2);
        let w = sample_trace_class_wiener(seed, &eig, &basis, (-0.5, 1.0), 0.5)?;
        w2 += tr.h_distance(&w.eval(1.0)?, &w.eval(0.0)?)?.powi(2);
    }
    let n = SAMPLES as f64;
    let (var, w2, mu2) = (var / n, w2 / n, mu2 / n);
    let expected_mu2 = (mu * mu).exp();
    let pass = (var - 0.5).abs() <= OU_VARIANCE_TOL
        && (w2 - trace).abs() <= TRACE_REL_TOL * trace
        && (mu2 - expected_mu2).abs() <= MU_MOMENT_REL_TOL * expected_mu2;
    outcome(
        pass,
        format!("OU variance {var:.4}, E|W1|^2 {w2:.4} vs {trace:.4}, E mu0^2 {mu2:.4} vs {expected_mu2:.4}"),
    )
}

fn main() {
    let criteria: [(&str, Check, Duration); 11] = [
        ("comparison closed form", comparison_oracle, Duration::from_secs(5)),
        ("a-priori bound", apriori, Duration::from_secs(10)),
        ("Barenblatt regression", barenblatt_regression, Duration::from_secs(120)),
        ("contraction bound", contraction, Duration::from_secs(60)),
        ("strict stationarity", stationarity, Duration::from_secs(180)),
        ("flow and cocycle", flow_cocycle, Duration::from_secs(180)),
        ("collapse rate", collapse, Duration::from_secs(300)),
        ("absorption radius", absorption, Duration::from_secs(180)),
        ("entropy scaling", entropy, Duration::from_secs(120)),
        ("synchronization trend", synchronization, Duration::from_secs(900)),
        ("noise statistics", noise_statistics, Duration::from_secs(30)),
    ];
    let mut failures = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && elapsed <= *limit, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!pass);
        println!(
            "{} [{:>2}] {name}: {detail} ({:.2}s, limit {}s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
