use attractor_lab::gelfand::{probe_field, DriftParams, DriftSpec, Reaction, TripleKind, TripleSpec};
use attractor_lab::linalg::dirichlet_eigenvalue;
use attractor_lab::noise::{BasisNorm, NoiseConfig, NoiseEnvironment};
use attractor_lab::oracles::linear_sde_exact;
use attractor_lab::stationary::{
    birkhoff_average, pullback_stationary, run_m_equation, weighted_v_integral, PullbackConfig,
};
use attractor_lab::stepper::StepperConfig;
use attractor_lab::{Field, Mesh1D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn env(seed: u64, mesh: Mesh1D, window: (f64, f64), dt: f64, mu: f64, modes: usize) -> NoiseEnvironment {
    let cfg = NoiseConfig::power_law(seed, window, dt, mu, 1.0, modes, 2.0);
    NoiseEnvironment::sample(&cfg, mesh, BasisNorm::L2).unwrap()
}

#[test]
fn linear_pullback_matches_exact_modal_solution() {
    let mesh = Mesh1D::new(1.0, 16).unwrap();
    let drift = DriftSpec::new(DriftParams::rde(Reaction::None), mesh).unwrap();
    // Backward Euler damps mode k by (1 + ν_k dt)^{-1}; two modes keep ν dt ≤ 0.08.
    let dt = 0.002;
    for mu in [0.0, 0.5] {
        let noise = env(8, mesh, (-80.0, 1.0), dt, mu, 2);
        let cfg = PullbackConfig { stepper: StepperConfig::with_dt(dt), ..PullbackConfig::default() };
        let sol = pullback_stationary(&drift.triple, &noise, (0.0, 1.0), &cfg).unwrap();
        let start = *sol.pullback_starts.last().unwrap();
        let exact = linear_sde_exact(&drift, &noise, &Field::zeros(mesh), start, 1.0, dt).unwrap();
        for t in [0.0, 0.5, 1.0] {
            let u = sol.state_at(t).unwrap();
            let e = exact.state_at(t, 1e-9).unwrap();
            let rel = drift.triple.h_distance(u, e).unwrap() / drift.triple.h_norm(e).unwrap();
            assert!(rel < 0.05, "mu {mu}, t {t}: relative error {rel}");
        }
    }
}

#[test]
fn pullback_limit_forgets_the_initial_datum() {
    let mesh = Mesh1D::new(1.0, 24).unwrap();
    let tr = TripleSpec::new(TripleKind::PLaplace, 3.0, mesh).unwrap();
    let noise = env(9, mesh, (-90.0, 2.0), 0.01, 0.5, 8);
    let cfg = PullbackConfig::default();
    let sol = pullback_stationary(&tr, &noise, (0.0, 2.0), &cfg).unwrap();
    let start = *sol.pullback_starts.last().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let v = probe_field(&mut rng, mesh);
        let x = Field::from_values(mesh, v).unwrap();
        let x = x.scaled(10.0 / tr.h_norm(&x).unwrap());
        let restarted = run_m_equation(&tr, &noise, start, &x, 0.0, 2.0, &cfg.stepper).unwrap();
        let gap = attractor_lab::stationary::sup_gap(&tr, &sol.u, &restarted);
        assert!(gap <= 2.0 * cfg.tol, "gap {gap}");
    }
}

#[test]
fn stationary_solution_is_adapted() {
    let mesh = Mesh1D::new(1.0, 16).unwrap();
    let tr = TripleSpec::new(TripleKind::Pme, 3.0, mesh).unwrap();
    let noise = env(10, mesh, (-40.0, 3.0), 0.01, 0.5, 6);
    let stepper = StepperConfig::with_dt(0.01);
    let zero = Field::zeros(mesh);
    let original = run_m_equation(&tr, &noise, -16.0, &zero, 0.0, 3.0, &stepper).unwrap();
    for cut in [0.5, 1.0, 2.37] {
        let perturbed_noise = noise.resampled_after(cut, 99).unwrap();
        let perturbed = run_m_equation(&tr, &perturbed_noise, -16.0, &zero, 0.0, 3.0, &stepper).unwrap();
        let mut differs_later = false;
        for ((t, a), b) in original.times.iter().zip(&original.states).zip(&perturbed.states) {
            if *t <= cut + 1e-12 {
                assert_eq!(a, b, "state at {t} changed after perturbing beyond {cut}");
            } else {
                differs_later |= a != b;
            }
        }
        assert!(differs_later);
    }
}

#[test]
fn weighted_v_integral_is_stable_under_window_doubling() {
    let mesh = Mesh1D::new(1.0, 16).unwrap();
    let tr = TripleSpec::new(TripleKind::PLaplace, 3.0, mesh).unwrap();
    let noise = env(11, mesh, (-200.0, 1.0), 0.01, 0.5, 6);
    let cfg = PullbackConfig::default();
    let short = pullback_stationary(&tr, &noise, (-30.0, 0.0), &cfg).unwrap();
    let long = pullback_stationary(&tr, &noise, (-60.0, 0.0), &cfg).unwrap();
    let (a, b) = (weighted_v_integral(&short, &tr, 0.1), weighted_v_integral(&long, &tr, 0.1));
    assert!(a.is_finite() && b.is_finite() && b >= a);
    assert!((b - a) / b < 0.2, "short {a}, long {b}");
}

#[test]
fn birkhoff_average_of_single_mode_matches_stationary_variance() {
    let mesh = Mesh1D::new(1.0, 12).unwrap();
    let tr = TripleSpec::new(TripleKind::Rde, 2.0, mesh).unwrap();
    let dt = 0.002;
    let cfg = NoiseConfig { eigenvalues: vec![1.0], ..NoiseConfig::power_law(12, (-70.0, 200.0), dt, 0.0, 1.0, 1, 2.0) };
    let noise = NoiseEnvironment::sample(&cfg, mesh, BasisNorm::L2).unwrap();
    let pc = PullbackConfig { stepper: StepperConfig::with_dt(dt), ..PullbackConfig::default() };
    let sol = pullback_stationary(&tr, &noise, (0.0, 200.0), &pc).unwrap();
    let lam = dirichlet_eigenvalue(1, mesh.n(), 1.0);
    // Stationary variance of X_{n+1} = (X_n + ΔW) / (1 + λ dt).
    let variance = 1.0 / (lam * (2.0 + lam * dt));
    let avg = birkhoff_average(&sol, &tr, 2, &[50.0, 200.0]).unwrap();
    let rel = (avg[1] - variance).abs() / variance;
    assert!(rel < 0.1, "Birkhoff average {} vs {variance}", avg[1]);
}
