//! Long-time diagnostics: absorption radii, pullback clouds, collapse onto a
//! single point, synchronization of order intervals and covering entropy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{Field, Mesh1D};
use crate::flow::FlowRun;
use crate::gelfand::{probe_field, DriftSpec, TripleSpec};
use crate::noise::{NoiseConfig, NoiseEnvironment};
use crate::oracles::{barenblatt_field, equil_rate_bound, BarenblattParams};
use crate::stationary::{basis_norm_for, BOUND_SLACK};
use crate::stepper::{integrate, step_count, RandomPdeProblem, StepperConfig};

/// Constants of the dissipation estimate
/// `2⟨A_ω(t,v), v⟩ ≤ a(t)‖v‖_H² + f̃(t)`, `a(t) = 2C + ε₃ − c_lin μ_t^{2−α}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionConstants {
    pub c_lin: f64,
    pub eps3: f64,
    /// Young parameter balancing the growth bound against coercivity.
    pub eps: f64,
    pub k_u: f64,
    pub k_m: f64,
    pub k0: f64,
}

impl AbsorptionConstants {
    /// Derived from the drift's structural constants, with `ε₃ = eps3_frac · c_lin`.
    pub fn new(drift: &DriftSpec, eps3_frac: f64) -> Self {
        let alpha = drift.alpha();
        let ap = drift.triple.alpha_conj();
        let lam = drift.triple.embedding_lambda;
        let c_a = drift.c;
        let kappa = 0.75 * c_a * 2f64.powf(1.0 - alpha);
        let c_lin = 2.0 * kappa / 3.0 * lam.powf(-alpha / 2.0);
        let eps = if drift.growth_c > 0.0 {
            c_a * ap / (4.0 * drift.growth_c)
        } else {
            1.0
        };
        let beta = alpha / 2.0;
        let k0 = if beta > 1.0 {
            c_lin * (beta - 1.0) / beta * beta.powf(-1.0 / (beta - 1.0))
        } else {
            0.0
        };
        Self {
            c_lin,
            eps3: eps3_frac * c_lin,
            eps,
            k_u: eps.powf(1.0 - alpha) * 2f64.powf(alpha) / alpha,
            k_m: (alpha * kappa / 3.0).powf(-1.0 / (alpha - 1.0)),
            k0,
        }
    }
}

/// Default `ε₃ / c_lin`.
pub const DEFAULT_EPS3_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionProbe {
    pub start: f64,
    /// `‖Z(t,s) T(s) x_s‖_H` for the tempered datum `x_s`.
    pub observed: f64,
    /// Bound on the same quantity from the recursion started at `s`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionReport {
    pub t: f64,
    pub constants: AbsorptionConstants,
    /// `η = −(1/(t−s)) ∫_s^t (a(r) + μ z_r) dr` over the whole window.
    pub ergodic_rate: f64,
    /// Growth rate `γ` of the tempered family `‖D(s)‖_H² = e^{γ|s|/2}`.
    pub family_rate: f64,
    /// `R(t,ω)`, with `R² = 1 + P(t)` and `P` the forced part of the recursion.
    pub radius: f64,
    /// Largest start at which every earlier family member is absorbed.
    pub s0: f64,
    pub probes: Vec<AbsorptionProbe>,
    pub empirical_max: f64,
    pub pass: bool,
}

/// Tempered datum at start `s`: a fixed direction scaled to `‖x‖_H² = e^{γ|s|/2}`.
pub fn tempered_datum(triple: &TripleSpec, direction: &[f64], gamma: f64, s: f64) -> Field {
    let norm = triple.h_norm_raw(direction);
    let scale = (0.25 * gamma * s.abs()).exp() / norm;
    Field::from_raw(triple.mesh, direction.iter().map(|v| v * scale).collect())
}

/// Explicit absorbing radius for `Z` at time `t`, checked against simulated
/// tempered families started at `probe_starts`.
///
/// The radius comes from the backward Euler recursion
/// `y_{n+1}(1 − dt a_{n+1}) ≤ ρ_n² y_n + dt f̃_{n+1}` with `ρ_n = e^{μ∫z}` over
/// the step, which bounds the discrete solution itself.
pub fn absorption_radius(
    run: &FlowRun,
    t: f64,
    s_min: f64,
    probe_starts: &[f64],
    seed: u64,
    cfg: &StepperConfig,
) -> Result<AbsorptionReport> {
    let drift = &run.drift;
    let triple = &drift.triple;
    let consts = AbsorptionConstants::new(drift, DEFAULT_EPS3_FRACTION);
    let alpha = drift.alpha();
    let ap = triple.alpha_conj();
    let mu = run.conjugation.mu_exponent();
    let steps = step_count(s_min, t, cfg.dt)?;
    let n = triple.n();
    let dt = cfg.dt;

    // Per-step coefficients on the grid s_min + j dt, j = 1..=steps.
    let mut a_coef = Vec::with_capacity(steps);
    let mut forcing = Vec::with_capacity(steps);
    let mut rho_sq = Vec::with_capacity(steps);
    let mut drift_avg = 0.0;
    let mut u = vec![0.0; n];
    let mut mu_u = vec![0.0; n];
    for j in 1..=steps {
        let r0 = s_min + (j - 1) as f64 * dt;
        let r = s_min + j as f64 * dt;
        let (z, mu_r) = run.conjugation.z_mu(r)?;
        run.conjugation.u_into(r, &mut u)?;
        let w = mu_r.powf(2.0 - alpha);
        let a = 2.0 * drift.big_c + consts.eps3 - consts.c_lin * w;
        let u_h2 = triple.h_norm_sq_raw(&u);
        let u_va = triple.v_norm_pow_raw(&u);
        triple.aux_m_into(&u, &mut mu_u);
        let m_dual = triple.dual_norm_raw(&mu_u);
        let f = mu_r * mu_r * (drift.f + consts.eps * drift.growth_f / ap)
            + (consts.k_u + 0.75 * drift.c) * w * u_va
            + 2.0 * drift.big_c * u_h2
            + if consts.eps3 > 0.0 { mu * mu * z * z * u_h2 / consts.eps3 } else { 0.0 }
            + consts.k_m * mu_r.powf((2.0 - alpha) / (1.0 - alpha)) * (2.0 * m_dual).powf(ap) / ap
            + consts.k0 * w;
        let rho = run.k(r0, r)?.recip();
        if !(1.0 - dt * a > 0.0) {
            return Err(LabError::InvalidParameter(format!(
                "dt = {dt} too large for the absorption recursion (a = {a})"
            )));
        }
        drift_avg += dt * (a + mu * z);
        a_coef.push(a);
        forcing.push(f);
        rho_sq.push(rho * rho);
    }
    let span = t - s_min;
    let avg = drift_avg / span;
    if !(avg < 0.0) {
        return Err(LabError::ErgodicRateNotNegative {
            average: avg,
            from: s_min,
            to: t,
        });
    }
    let eta = -avg;
    let gamma = eta.min(1.0);

    // Backward sweep: G[j] = product of multipliers from grid point j to t,
    // P[j] = forced part of the recursion started from 0 at grid point j.
    let mut g = vec![1.0; steps + 1];
    let mut p = vec![0.0; steps + 1];
    for j in (0..steps).rev() {
        let denom = 1.0 - dt * a_coef[j];
        let m = rho_sq[j] / denom;
        g[j] = g[j + 1] * m;
        // P[j] = Σ_{i ≥ j} (Π_{i<l<steps} ...) dt f_i / denom_i, accumulated as
        // P[j] = P[j+1] + G[j+1] dt f_j / denom_j.
        p[j] = p[j + 1] + g[j + 1] * dt * forcing[j] / denom;
    }
    let radius_sq = 1.0 + p[0];

    let direction = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        probe_field(&mut rng, triple.mesh)
    };
    // Initial bound at grid point j: ‖T(s)x‖² ≤ (μ_s ‖x‖ + ‖u_s‖)².
    let initial_bound = |j: usize| -> Result<f64> {
        let s = s_min + j as f64 * dt;
        let (_, mu_s) = run.conjugation.z_mu(s)?;
        let mut us = vec![0.0; n];
        run.conjugation.u_into(s, &mut us)?;
        let x_norm = (0.25 * gamma * s.abs()).exp();
        Ok((mu_s * x_norm + triple.h_norm_raw(&us)).powi(2))
    };
    let mut s0 = f64::NEG_INFINITY;
    for j in 0..=steps {
        if g[j] * initial_bound(j)? <= 1.0 {
            s0 = s_min + j as f64 * dt;
        } else {
            break;
        }
    }

    let mut probes = Vec::new();
    let mut empirical_max: f64 = 0.0;
    let mut pass = true;
    for &s in probe_starts {
        let j = step_count(s_min, s, dt)?;
        let x = tempered_datum(triple, &direction, gamma, s);
        let zs = run.conjugation.forward(s, &x)?;
        let zt = run.solve_z(s, t, &zs, cfg)?;
        let observed = triple.h_norm(&zt)?;
        let bound = (p[j] + g[j] * initial_bound(j)?).sqrt();
        if s <= s0 {
            empirical_max = empirical_max.max(observed);
            pass &= observed <= radius_sq.sqrt();
        }
        pass &= observed <= bound * (1.0 + 1e-9);
        probes.push(AbsorptionProbe {
            start: s,
            observed,
            bound,
        });
    }
    Ok(AbsorptionReport {
        t,
        constants: consts,
        ergodic_rate: eta,
        family_rate: gamma,
        radius: radius_sq.sqrt(),
        s0,
        probes,
        empirical_max,
        pass,
    })
}

/// Symmetric Hausdorff distance in `H`.
pub fn hausdorff(triple: &TripleSpec, a: &[Field], b: &[Field]) -> f64 {
    let one_sided = |x: &[Field], y: &[Field]| {
        x.iter()
            .map(|p| {
                y.iter()
                    .map(|q| triple.h_dist_raw(p.values(), q.values()))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    one_sided(a, b).max(one_sided(b, a))
}

/// Largest pairwise `H` distance.
pub fn diameter(triple: &TripleSpec, cloud: &[Field]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, a) in cloud.iter().enumerate() {
        for b in &cloud[i + 1..] {
            d = d.max(triple.h_dist_raw(a.values(), b.values()));
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseRecord {
    pub starts: Vec<f64>,
    pub observed_sq: Vec<f64>,
    pub bounds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRecord {
    pub deltas: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Finite approximation of the attractor section at `t_eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorEstimate {
    pub t_eval: f64,
    pub cloud: Vec<Field>,
    /// Start of each cloud member.
    pub member_starts: Vec<f64>,
    pub absorption_radius: Option<f64>,
    pub pullback_starts: Vec<f64>,
    /// Hausdorff distance between the sub-clouds of successive starts.
    pub start_drift: Vec<f64>,
    /// Trajectories that failed and were skipped, as `(start, message)`.
    pub failures: Vec<(f64, String)>,
    pub collapse: Option<CollapseRecord>,
    pub entropy: Option<EntropyRecord>,
}

impl AttractorEstimate {
    /// JSON with the cloud as nested arrays of nodal values.
    pub fn to_json(&self) -> String {
        let cloud: Vec<&[f64]> = self.cloud.iter().map(|f| f.values()).collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "t_eval": self.t_eval,
            "cloud": cloud,
            "member_starts": self.member_starts,
            "absorption_radius": self.absorption_radius,
            "pullback_starts": self.pullback_starts,
            "start_drift": self.start_drift,
            "failures": self.failures,
            "collapse": self.collapse,
            "entropy": self.entropy,
        }))
        .expect("estimate serializes")
    }

    /// Latest convergence diagnostic, `∞` with fewer than two starts.
    pub fn convergence(&self) -> f64 {
        self.start_drift.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// `{S(t,s)x : s ∈ starts, x ∈ samples}` with `samples` random data of
/// `H`-norm `radius` per start.
pub fn pullback_cloud(
    run: &FlowRun,
    t: f64,
    starts: &[f64],
    samples: usize,
    radius: f64,
    seed: u64,
    cfg: &StepperConfig,
) -> Result<AttractorEstimate> {
    if starts.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LabError::InvalidParameter("pullback starts must decrease".into()));
    }
    let triple = &run.drift.triple;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<Vec<f64>> = (0..samples.max(1))
        .map(|_| {
            let v = probe_field(&mut rng, triple.mesh);
            let scale = radius / triple.h_norm_raw(&v);
            v.iter().map(|x| x * scale).collect()
        })
        .collect();
    let mut cloud = Vec::new();
    let mut member_starts = Vec::new();
    let mut failures = Vec::new();
    let mut groups: Vec<Vec<Field>> = Vec::new();
    for &s in starts {
        let mut group = Vec::new();
        for d in &data {
            let x = Field::from_raw(triple.mesh, d.clone());
            match run.flow_s(s, t, &x, cfg) {
                Ok(y) => group.push(y),
                Err(e) => failures.push((s, e.to_string())),
            }
        }
        for g in &group {
            cloud.push(g.clone());
            member_starts.push(s);
        }
        groups.push(group);
    }
    let start_drift = groups.windows(2).map(|w| hausdorff(triple, &w[0], &w[1])).collect();
    Ok(AttractorEstimate {
        t_eval: t,
        cloud,
        member_starts,
        absorption_radius: None,
        pullback_starts: starts.to_vec(),
        start_drift,
        failures,
        collapse: None,
        entropy: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub t: f64,
    /// Earliest start, whose image stands in for the equilibrium.
    pub reference_start: f64,
    pub lambda_sm: f64,
    pub record: CollapseRecord,
    pub pass: bool,
}

/// Compare `‖S(t,s)x − S(t,s_min)x‖_H²` with the equilibrium rate bound at
/// every `s` in `s_list`.
pub fn collapse_rate_check(
    run: &FlowRun,
    x: &Field,
    s_list: &[f64],
    t: f64,
    cfg: &StepperConfig,
) -> Result<CollapseReport> {
    let drift = &run.drift;
    if !(drift.alpha() > 2.0) || !(drift.lambda_sm > 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "collapse check needs alpha > 2 and strong monotonicity, got alpha = {}, lambda = {}",
            drift.alpha(),
            drift.lambda_sm
        )));
    }
    let s_min = s_list.iter().copied().fold(f64::INFINITY, f64::min);
    let reference = run.flow_s(s_min, t, x, cfg)?;
    let mu = run.conjugation.mu_exponent();
    let mut record = CollapseRecord {
        starts: Vec::new(),
        observed_sq: Vec::new(),
        bounds: Vec::new(),
    };
    let mut pass = true;
    for &s in s_list {
        let y = run.flow_s(s, t, x, cfg)?;
        let observed = drift.triple.h_distance(&y, &reference)?.powi(2);
        let bound = equil_rate_bound(drift.lambda_sm, drift.alpha(), mu, &run.noise().beta, s, t)?;
        pass &= observed <= bound * (1.0 + BOUND_SLACK);
        record.starts.push(s);
        record.observed_sq.push(observed);
        record.bounds.push(bound);
    }
    Ok(CollapseReport {
        t,
        reference_start: s_min,
        lambda_sm: drift.lambda_sm,
        record,
        pass,
    })
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub times: Vec<f64>,
    pub eps: f64,
    pub paths: usize,
    /// Fraction of paths whose image diameter exceeds `eps`.
    pub probabilities: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    /// Nodewise order violations beyond `1e-8`, summed over paths and times.
    pub order_violations: usize,
}

/// Monte Carlo over independent paths of the interval image
/// `{φ(t)x, φ(t)m, φ(t)y}` with `m` the midpoint of `[x, y]`. Additive noise
/// only; path `p` uses seed `template.seed + p`.
pub fn synchronization_mc(
    drift: &DriftSpec,
    interval: (&Field, &Field),
    times: &[f64],
    paths: usize,
    eps: f64,
    template: &NoiseConfig,
    cfg: &StepperConfig,
) -> Result<SyncReport> {
    let (x, y) = interval;
    let triple = &drift.triple;
    if !x.le_with_tol(y, 0.0)? {
        return Err(LabError::InvalidParameter("interval needs x <= y nodewise".into()));
    }
    if drift.params.mu != 0.0 || template.mu != 0.0 {
        return Err(LabError::InvalidParameter("synchronization runs use additive noise only".into()));
    }
    let t_end = times.iter().copied().fold(0.0, f64::max);
    if times.iter().any(|t| *t <= 0.0) {
        return Err(LabError::InvalidParameter("observation times must be positive".into()));
    }
    let mid = x.lincomb(0.5, y, 0.5)?;
    let per_path = (0..paths)
        .into_par_iter()
        .map(|p| -> Result<(Vec<bool>, usize)> {
            let nc = NoiseConfig {
                seed: template.seed.wrapping_add(p as u64),
                t_min: -cfg.dt.max(template.dt),
                t_max: t_end,
                burn_in: 0.0,
                ..template.clone()
            };
            let noise = NoiseEnvironment::sample(&nc, triple.mesh, basis_norm_for(triple.kind))?;
            let mut images = Vec::new();
            for start in [x, &mid, y] {
                let problem = RandomPdeProblem {
                    rhs: drift,
                    forcing: Some(&noise),
                    t_start: 0.0,
                    t_end,
                    initial: start.clone(),
                    triple,
                };
                let traj = integrate(&problem, cfg)?;
                let at: Vec<Field> = times
                    .iter()
                    .map(|t| traj.state_at(*t, 1e-9 * (1.0 + t)).cloned())
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| LabError::Grid("observation time off the stepper grid".into()))?;
                images.push(at);
            }
            let mut violations = 0;
            let exceed = (0..times.len())
                .map(|i| {
                    let (a, m, b) = (&images[0][i], &images[1][i], &images[2][i]);
                    if !a.le_with_tol(m, 1e-8).unwrap_or(false) || !m.le_with_tol(b, 1e-8).unwrap_or(false) {
                        violations += 1;
                    }
                    diameter(triple, &[a.clone(), m.clone(), b.clone()]) > eps
                })
                .collect();
            Ok((exceed, violations))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut probabilities = Vec::new();
    let mut intervals = Vec::new();
    for i in 0..times.len() {
        let k = per_path.iter().filter(|(e, _)| e[i]).count();
        probabilities.push(k as f64 / paths.max(1) as f64);
        intervals.push(wilson_interval(k, paths));
    }
    Ok(SyncReport {
        times: times.to_vec(),
        eps,
        paths,
        probabilities,
        intervals,
        order_violations: per_path.iter().map(|(_, v)| v).sum(),
    })
}

/// Greedy covering counts by sets of diameter at most `2δ`: a point joins the
/// first cluster whose members all lie within `2δ` of it, else opens a new one.
/// Returns `(δ, N_δ, ln N_δ)`.
pub fn covering_entropy(triple: &TripleSpec, cloud: &[Field], deltas: &[f64]) -> Result<Vec<(f64, usize, f64)>> {
    if cloud.is_empty() {
        return Err(LabError::InvalidParameter("covering needs a nonempty cloud".into()));
    }
    Ok(deltas
        .iter()
        .map(|&delta| {
            let mut clusters: Vec<Vec<&Field>> = Vec::new();
            for p in cloud {
                let fits = |c: &Vec<&Field>| c.iter().all(|q| triple.h_dist_raw(q.values(), p.values()) <= 2.0 * delta);
                match clusters.iter_mut().find(|c| fits(c)) {
                    Some(c) => c.push(p),
                    None => clusters.push(vec![p]),
                }
            }
            (delta, clusters.len(), (clusters.len() as f64).ln())
        })
        .collect())
}

/// Exponent of the entropy lower bound `H_δ ≳ δ^{−d(α−2)/(d(α−2)+α)}`.
pub fn entropy_exponent(alpha: f64, d: usize) -> f64 {
    let df = d as f64;
    df * (alpha - 2.0) / (df * (alpha - 2.0) + alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpFamily {
    pub count: usize,
    /// Mass of each bump; its support radius at `s0` is `δ`.
    pub mass: f64,
    pub radius: f64,
    pub exponent: f64,
}

/// Disjoint Barenblatt bumps of support radius `δ` at time `s0` packed into
/// the domain: `⌊L / (2δ)⌋` of them.
pub fn barenblatt_entropy_lower(delta: f64, alpha: f64, d: usize, domain: Mesh1D, s0: f64) -> Result<BumpFamily> {
    if !(alpha > 2.0) || !(delta > 0.0) || !(s0 > 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "bump family needs alpha > 2, delta > 0, s0 > 0; got ({alpha}, {delta}, {s0})"
        )));
    }
    let count = (domain.length / (2.0 * delta)).floor() as usize;
    if count == 0 {
        return Err(LabError::NoBumpFits {
            radius: delta,
            length: domain.length,
        });
    }
    Ok(BumpFamily {
        count,
        mass: BarenblattParams::mass_for_radius(alpha, d, s0, delta)?,
        radius: delta,
        exponent: entropy_exponent(alpha, d),
    })
}

/// All `2^m` sums of subsets of `m` disjoint bumps of radius `δ` at `s0`, and
/// the guaranteed pairwise separation (smallest single-bump `H` norm).
pub fn bump_cloud(triple: &TripleSpec, m: usize, delta: f64, s0: f64) -> Result<(Vec<Field>, f64)> {
    let mesh = triple.mesh;
    let fam = barenblatt_entropy_lower(delta, triple.alpha.max(2.0 + 1e-12), 1, mesh, s0)?;
    if m > fam.count {
        return Err(LabError::NoBumpFits {
            radius: delta,
            length: mesh.length,
        });
    }
    if m >= 24 {
        return Err(LabError::InvalidParameter(format!("2^{m} cloud members is too many")));
    }
    let params = BarenblattParams::new(triple.alpha.max(2.0 + 1e-12), 1, fam.mass)?;
    let bumps: Vec<Field> = (0..m)
        .map(|i| barenblatt_field(mesh, s0, (2 * i + 1) as f64 * delta, &params))
        .collect::<Result<_>>()?;
    let separation = bumps
        .iter()
        .map(|b| triple.h_norm_raw(b.values()))
        .fold(f64::INFINITY, f64::min);
    let cloud = (0..1usize << m)
        .map(|mask| {
            let mut v = vec![0.0; mesh.n()];
            for (i, b) in bumps.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    for (o, x) in v.iter_mut().zip(b.values()) {
                        *o += x;
                    }
                }
            }
            Field::from_raw(mesh, v)
        })
        .collect();
    Ok((cloud, separation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gelfand::TripleKind;

    #[test]
    fn covering_two_points() {
        let mesh = Mesh1D::new(1.0, 3).unwrap();
        let tr = TripleSpec::new(TripleKind::PLaplace, 2.0, mesh).unwrap();
        let a = Field::zeros(mesh);
        // h = 0.25, so a unit H-distance needs a nodal value of 2.
        let b = Field::from_values(mesh, vec![0.0, 2.0, 0.0]).unwrap();
        assert!((tr.h_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let counts = covering_entropy(&tr, &[a.clone(), b.clone()], &[0.4, 0.6]).unwrap();
        assert_eq!((counts[0].1, counts[1].1), (2, 1));
        let counts = covering_entropy(&tr, &[b, a], &[0.4, 0.6]).unwrap();
        assert_eq!((counts[0].1, counts[1].1), (2, 1));
    }

    #[test]
    fn singleton_cloud_has_one_ball() {
        let mesh = Mesh1D::new(1.0, 5).unwrap();
        let tr = TripleSpec::new(TripleKind::PLaplace, 3.0, mesh).unwrap();
        let c = covering_entropy(&tr, &[Field::zeros(mesh)], &[1e-3, 1.0]).unwrap();
        assert!(c.iter().all(|(_, n, _)| *n == 1));
    }

    #[test]
    fn entropy_exponent_for_cubic_case() {
        assert!((entropy_exponent(3.0, 1) - 0.25).abs() < 1e-15);
        let mesh = Mesh1D::new(1.0, 50).unwrap();
        assert!(matches!(
            barenblatt_entropy_lower(0.6, 3.0, 1, mesh, 1.0),
            Err(LabError::NoBumpFits { .. })
        ));
        assert_eq!(barenblatt_entropy_lower(0.1, 3.0, 1, mesh, 1.0).unwrap().count, 5);
    }

    #[test]
    fn wilson_interval_brackets_estimate() {
        let (lo, hi) = wilson_interval(30, 100);
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
        let (lo, hi) = wilson_interval(100, 100);
        assert!(lo > 0.95 && hi == 1.0);
    }
}
