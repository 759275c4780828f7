//! Closed-form ground truth: comparison ODEs, Barenblatt profiles, the
//! equilibrium convergence rate and exact recursions for linear equations.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta as beta_fn;
use statrs::function::gamma::gamma;

use crate::error::{LabError, Result};
use crate::field::{Field, Mesh1D};
use crate::gelfand::{DriftSpec, Reaction, TripleKind};
use crate::linalg::{dirichlet_eigenvalue, dirichlet_eigenvector};
use crate::noise::{BrownianPath, NoiseEnvironment};
use crate::stepper::{step_count, Trajectory};

/// Floor `δ` applied to the source term `p` of the a-priori bound.
pub const APRIORI_P_FLOOR: f64 = 1e-8;

/// Explicit solution bound of `y' = −h y^β`, `y(s) = q0`, after `∫h = h_integral`:
/// `(q0^{−(β−1)} + (β−1)∫h)^{−1/(β−1)}`. `q0 = ∞` gives the data-free bound.
pub fn comparison_closed_form(q0: f64, beta: f64, h_integral: f64) -> Result<f64> {
    if !(beta > 1.0) || !(q0 >= 0.0) || !(h_integral >= 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "comparison bound needs beta > 1, q0 >= 0, int h >= 0; got ({q0}, {beta}, {h_integral})"
        )));
    }
    if q0 == 0.0 {
        return Ok(0.0);
    }
    let e = beta - 1.0;
    let base = if q0.is_infinite() { 0.0 } else { q0.powf(-e) };
    Ok((base + e * h_integral).powf(-1.0 / e))
}

/// Result of [`apriori_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriBound {
    pub radius: f64,
    /// Latest time before which the comparison bound has already dropped below
    /// the equilibrium level `(2p(t)/h(t))^{1/β}`.
    pub a1: f64,
}

/// Absorbing level `R(t, p, h) = sup_{r ∈ [a1 − 1, t]} (2p(r)/h(r))^{1/β}` for
/// subsolutions of `y' = −h y^β + p`, with `p` floored at [`APRIORI_P_FLOOR`].
///
/// `a1` is bracketed on a coarse grid over `[t − search_window, t]` and refined
/// by bisection of the accumulated `∫h`.
pub fn apriori_bound(
    p: &dyn Fn(f64) -> f64,
    h: &dyn Fn(f64) -> f64,
    beta: f64,
    t: f64,
    search_window: f64,
) -> Result<AprioriBound> {
    if !(beta > 1.0) || !(search_window > 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "a-priori bound needs beta > 1 and a positive window; got ({beta}, {search_window})"
        )));
    }
    let pf = |r: f64| p(r).max(APRIORI_P_FLOOR);
    let level = |r: f64| {
        let hr = h(r);
        if !(hr > 0.0) {
            return Err(LabError::InvalidParameter(format!("h must be positive, h({r}) = {hr}")));
        }
        Ok((2.0 * pf(r) / hr).powf(1.0 / beta))
    };
    let y_star = level(t)?;
    // ((β−1)/2 ∫_a^t h)^{−1/(β−1)} ≤ y* ⇔ ∫_a^t h ≥ target.
    let target = 2.0 * y_star.powf(-(beta - 1.0)) / (beta - 1.0);
    const COARSE: usize = 2000;
    let step = search_window / COARSE as f64;
    let mut acc = 0.0;
    let mut a1 = None;
    for j in 0..COARSE {
        let right = t - j as f64 * step;
        let left = right - step;
        let cell = 0.5 * step * (h(left) + h(right));
        if acc + cell >= target {
            let (mut lo, mut hi) = (left, right);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let part = 0.5 * (right - mid) * (h(mid) + h(right));
                if acc + part >= target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            a1 = Some(lo);
            break;
        }
        acc += cell;
    }
    let a1 = a1.ok_or(LabError::WindowExhausted {
        requested: t - search_window,
        lo: t - search_window,
        hi: t,
    })?;
    let from = a1 - 1.0;
    let samples = 4000;
    let mut radius: f64 = 0.0;
    for i in 0..=samples {
        let r = from + (t - from) * i as f64 / samples as f64;
        radius = radius.max(level(r)?);
    }
    Ok(AprioriBound { radius, a1 })
}

/// Self-similar source solution of `∂_t U = div(|∇U|^{α−2}∇U)` in `d`
/// dimensions, normalized to total mass `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarenblattParams {
    pub alpha: f64,
    pub d: usize,
    pub mass: f64,
    pub k: f64,
    pub q: f64,
    /// `C(M)`, fixed by the mass normalization.
    pub c_mass: f64,
}

impl BarenblattParams {
    pub fn new(alpha: f64, d: usize, mass: f64) -> Result<Self> {
        if !(alpha > 2.0) || d == 0 || !(mass > 0.0) {
            return Err(LabError::InvalidParameter(format!(
                "Barenblatt profile needs alpha > 2, d >= 1, M > 0; got ({alpha}, {d}, {mass})"
            )));
        }
        let df = d as f64;
        let k = 1.0 / (alpha - 2.0 + alpha / df);
        let q = (alpha - 2.0) / alpha * (k / df).powf(1.0 / (alpha - 1.0));
        let a = Self::space_exponent(alpha);
        let b = Self::outer_exponent(alpha);
        // ∫_{|y|<1} (1 − |y|^a)^b dy = |S^{d−1}| · B(d/a, b+1) / a
        let sphere = 2.0 * std::f64::consts::PI.powf(df / 2.0) / gamma(df / 2.0);
        let unit = sphere * beta_fn(df / a, b + 1.0) / a;
        // M = C^{b + d/a} q^{−d/a} · unit
        let c_mass = (mass * q.powf(df / a) / unit).powf(1.0 / (b + df / a));
        Ok(Self {
            alpha,
            d,
            mass,
            k,
            q,
            c_mass,
        })
    }

    fn space_exponent(alpha: f64) -> f64 {
        alpha / (alpha - 1.0)
    }

    fn outer_exponent(alpha: f64) -> f64 {
        (alpha - 1.0) / (alpha - 2.0)
    }

    /// Mass that makes the support radius at time `t` equal to `radius`.
    pub fn mass_for_radius(alpha: f64, d: usize, t: f64, radius: f64) -> Result<f64> {
        let unit = Self::new(alpha, d, 1.0)?;
        let r1 = barenblatt_support_radius(t, &unit)?;
        // support radius scales as C^{1/a} and C as M^{1/(b + d/a)}
        let a = Self::space_exponent(alpha);
        let b = Self::outer_exponent(alpha);
        let expo = 1.0 / (a * (b + d as f64 / a));
        Ok((radius / r1).powf(1.0 / expo))
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(LabError::InvalidParameter(format!("Barenblatt time must be positive, got {t}")));
    }
    Ok(())
}

/// `U(t, ξ)` at distance `|ξ| = r` from the centre.
pub fn barenblatt(t: f64, r: f64, params: &BarenblattParams) -> Result<f64> {
    check_time(t)?;
    let a = BarenblattParams::space_exponent(params.alpha);
    let b = BarenblattParams::outer_exponent(params.alpha);
    let df = params.d as f64;
    let inner = params.c_mass - params.q * r.abs().powf(a) * t.powf(-params.k * a / df);
    Ok(if inner > 0.0 {
        t.powf(-params.k) * inner.powf(b)
    } else {
        0.0
    })
}

/// `t^{k/d} (C(M)/q)^{(α−1)/α}`.
pub fn barenblatt_support_radius(t: f64, params: &BarenblattParams) -> Result<f64> {
    check_time(t)?;
    Ok(t.powf(params.k / params.d as f64) * (params.c_mass / params.q).powf((params.alpha - 1.0) / params.alpha))
}

/// One-dimensional profile sampled on `mesh`, centred at `center`.
pub fn barenblatt_field(mesh: Mesh1D, t: f64, center: f64, params: &BarenblattParams) -> Result<Field> {
    check_time(t)?;
    if params.d != 1 {
        return Err(LabError::InvalidParameter("mesh profiles need d = 1".into()));
    }
    Ok(Field::from_fn(mesh, |x| barenblatt(t, x - center, params).unwrap_or(0.0)))
}

/// `∫_s^t e^{q(β_r − β_t)} dr` by trapezoid on the path grid.
pub fn exponential_beta_integral(q: f64, beta_path: &BrownianPath, s: f64, t: f64) -> Result<f64> {
    if t <= s {
        return Ok(0.0);
    }
    let bt = beta_path.interpolate(t)?;
    let bs = beta_path.interpolate(s)?;
    let (js, _) = beta_path.locate(s)?;
    let mut prev = (s, (q * (bs - bt)).exp());
    let mut acc = 0.0;
    let mut j = js + 1;
    while j < beta_path.len() && beta_path.time(j) < t - 1e-12 * beta_path.dt {
        let r = beta_path.time(j);
        if r > s {
            let g = (q * (beta_path.values()[j] - bt)).exp();
            acc += 0.5 * (r - prev.0) * (prev.1 + g);
            prev = (r, g);
        }
        j += 1;
    }
    acc += 0.5 * (t - prev.0) * (prev.1 + 1.0);
    Ok(acc)
}

/// Equilibrium convergence bound
/// `((α/2 − 1) λ ∫_s^t e^{(α−2)μ(β_r−β_t)} dr)^{−2/(α−2)}`; `+∞` for `s = t`.
pub fn equil_rate_bound(
    lambda_sm: f64,
    alpha: f64,
    mu: f64,
    beta_path: &BrownianPath,
    s: f64,
    t: f64,
) -> Result<f64> {
    if !(alpha > 2.0) || !(lambda_sm > 0.0) || s > t {
        return Err(LabError::InvalidParameter(format!(
            "rate bound needs alpha > 2, lambda > 0, s <= t; got ({alpha}, {lambda_sm}, {s}, {t})"
        )));
    }
    let integral = exponential_beta_integral((alpha - 2.0) * mu, beta_path, s, t)?;
    if integral <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(((alpha / 2.0 - 1.0) * lambda_sm * integral).powf(-2.0 / (alpha - 2.0)))
}

/// Exact solution of `dX = aΔX dt + σ μ dW` for linear interpolation of the
/// noise path: per eigenmode,
/// `x_{n+1} = e^{−ν dt} x_n + (1 − e^{−ν dt})/(ν dt) ΔW_k` with `ν = a λ_k`.
pub fn linear_sde_exact(
    drift: &DriftSpec,
    noise: &NoiseEnvironment,
    initial: &Field,
    t_start: f64,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if drift.kind() != TripleKind::Rde {
        return Err(LabError::KindMismatch {
            expected: TripleKind::Rde.name().into(),
            found: drift.kind().name().into(),
        });
    }
    if drift.params.reaction != Reaction::None || drift.params.forcing.is_some() {
        return Err(LabError::InvalidParameter("exact recursion needs a purely linear drift".into()));
    }
    let mesh = drift.triple.mesh;
    mesh.ensure_same(initial.mesh())?;
    let steps = step_count(t_start, t_end, dt)?;
    let n = mesh.n();
    let h = mesh.spacing();
    let basis: Vec<Vec<f64>> = (1..=n).map(|k| dirichlet_eigenvector(k, n, mesh.length)).collect();
    let rates: Vec<f64> = (1..=n)
        .map(|k| drift.params.diffusion * dirichlet_eigenvalue(k, n, mesh.length))
        .collect();
    let project = |v: &[f64], e: &[f64]| h * v.iter().zip(e).map(|(a, b)| a * b).sum::<f64>();
    let decay: Vec<f64> = rates.iter().map(|r| (-r * dt).exp()).collect();
    let gain: Vec<f64> = rates
        .iter()
        .zip(&decay)
        .map(|(r, e)| if *r * dt > 1e-12 { (1.0 - e) / (r * dt) } else { 1.0 })
        .collect();
    let mut coeffs: Vec<f64> = basis.iter().map(|e| project(initial.values(), e)).collect();
    let synth = |c: &[f64]| {
        let mut out = vec![0.0; n];
        for (ck, e) in c.iter().zip(&basis) {
            for (o, x) in out.iter_mut().zip(e) {
                *o += ck * x;
            }
        }
        out
    };
    let mut traj = Trajectory {
        times: vec![t_start],
        states: vec![initial.clone()],
        ..Trajectory::default()
    };
    let mut inc = vec![0.0; n];
    for j in 0..steps {
        let t0 = t_start + j as f64 * dt;
        let t1 = if j + 1 == steps { t_end } else { t0 + dt };
        inc.iter_mut().for_each(|x| *x = 0.0);
        noise.accumulate_forcing(t0, t1, &mut inc)?;
        for (k, e) in basis.iter().enumerate() {
            coeffs[k] = decay[k] * coeffs[k] + gain[k] * project(&inc, e);
        }
        traj.times.push(t1);
        traj.states.push(Field::from_raw(mesh, synth(&coeffs)));
    }
    Ok(traj)
}
