//! Conjugated stochastic flows.
//!
//! `T(t)y = μ_t y − u_t` removes both noises, leaving the random PDE
//! `dZ = (A_ω(t, Z) + μ z_t Z) dt` with
//! `A_ω(t, v) = μ_t A(t, μ_t⁻¹(v + u_t)) + μ z_t u_t − M(u_t)`.
//! The linear term is cancelled by `Z̃ = k Z`, `k(s,t) = e^{−μ∫_s^t z}`, and the
//! resulting equation `dZ̃ = k A_ω(t, Z̃/k) dt` is what the stepper integrates.
//! `S(t,s)x = T(t)⁻¹ Z(t,s) T(s)x` is produced on demand.
//!
//! On a finite mesh every `u_t` lies in `V`, so only the regular branch of
//! `A_ω` is implemented.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::Field;
use crate::gelfand::DriftSpec;
use crate::linalg::Tridiagonal;
use crate::noise::NoiseEnvironment;
use crate::stationary::{pullback_stationary, PullbackConfig, StationarySolution};
use crate::stepper::{march, step_count, Rhs, StepperConfig, Trajectory};

/// `T(t) y = μ_t y − u_t` and its inverse.
#[derive(Debug, Clone)]
pub struct ConjugationMap {
    pub noise: NoiseEnvironment,
    /// `None` when no additive noise reaches the equation, so that `u ≡ 0`.
    pub u: Option<StationarySolution>,
}

impl ConjugationMap {
    pub fn mu_exponent(&self) -> f64 {
        self.noise.mu_exponent()
    }

    /// `(z_t, μ_t)`, interpolated between noise grid points.
    pub fn z_mu(&self, t: f64) -> Result<(f64, f64)> {
        let (z, mu, _) = self.noise.ou.interpolated(t)?;
        Ok((z, mu))
    }

    /// `u_t`, linear between stepper nodes; zero when `u ≡ 0`.
    pub fn u_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let Some(sol) = &self.u else {
            out.iter_mut().for_each(|o| *o = 0.0);
            return Ok(());
        };
        let times = &sol.u.times;
        let tol = 1e-9 * (1.0 + t.abs());
        let (lo, hi) = (times[0], *times.last().expect("nonempty record"));
        if t < lo - tol || t > hi + tol {
            return Err(LabError::WindowExhausted { requested: t, lo, hi });
        }
        let j = times.partition_point(|r| *r < t - tol);
        if (times[j] - t).abs() <= tol {
            out.copy_from_slice(sol.u.states[j].values());
            return Ok(());
        }
        let (a, b) = (&sol.u.states[j - 1], &sol.u.states[j]);
        let f = (t - times[j - 1]) / (times[j] - times[j - 1]);
        for ((o, x), y) in out.iter_mut().zip(a.values()).zip(b.values()) {
            *o = x + f * (y - x);
        }
        Ok(())
    }

    pub fn forward(&self, t: f64, y: &Field) -> Result<Field> {
        let (_, mu) = self.z_mu(t)?;
        let mut u = vec![0.0; y.len()];
        self.u_into(t, &mut u)?;
        let v = y.values().iter().zip(&u).map(|(a, b)| mu * a - b).collect();
        Ok(Field::from_raw(*y.mesh(), v))
    }

    pub fn inverse(&self, t: f64, y: &Field) -> Result<Field> {
        let (_, mu) = self.z_mu(t)?;
        let mut u = vec![0.0; y.len()];
        self.u_into(t, &mut u)?;
        let v = y.values().iter().zip(&u).map(|(a, b)| (a + b) / mu).collect();
        Ok(Field::from_raw(*y.mesh(), v))
    }
}

/// A drift paired with one sampled `ω` and its stationary solution.
pub struct FlowRun {
    pub drift: DriftSpec,
    pub conjugation: ConjugationMap,
    /// Window on which `u` is available.
    pub window: (f64, f64),
    k_cache: Mutex<HashMap<(i64, i64), f64>>,
    max_rate: Mutex<f64>,
}

/// Per-run diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowDiagnostics {
    /// Largest observed `‖Z_{n+1} − Z_n‖_H / dt`.
    pub max_rate: f64,
    pub cached_k: usize,
}

/// Multiplier of `dt · max_rate` in the flow-property budget.
pub const DT_BUDGET_FACTOR: f64 = 5.0;

impl FlowRun {
    /// Build the conjugation for `drift` on `noise`, computing `u` on `window`
    /// by pullback when additive noise is present.
    pub fn build(
        drift: DriftSpec,
        noise: NoiseEnvironment,
        window: (f64, f64),
        pullback: &PullbackConfig,
    ) -> Result<Self> {
        if (drift.params.mu - noise.mu_exponent()).abs() > 0.0 {
            return Err(LabError::InvalidParameter(format!(
                "drift mu = {} differs from the noise mu = {}",
                drift.params.mu,
                noise.mu_exponent()
            )));
        }
        let u = if noise.additive_is_trivial() {
            None
        } else {
            Some(pullback_stationary(&drift.triple, &noise, window, pullback)?)
        };
        Ok(Self {
            drift,
            conjugation: ConjugationMap { noise, u },
            window,
            k_cache: Mutex::new(HashMap::new()),
            max_rate: Mutex::new(0.0),
        })
    }

    pub fn noise(&self) -> &NoiseEnvironment {
        &self.conjugation.noise
    }

    fn is_plain(&self) -> bool {
        self.conjugation.mu_exponent() == 0.0 && self.conjugation.u.is_none()
    }

    /// `k(s,t) = e^{−μ ∫_s^t z_r dr}`, trapezoid on the noise grid.
    pub fn k(&self, s: f64, t: f64) -> Result<f64> {
        let mu = self.conjugation.mu_exponent();
        if mu == 0.0 {
            return Ok(1.0);
        }
        let dt = self.noise().dt();
        let key = ((s / dt).round() as i64, (t / dt).round() as i64);
        let on_grid = (key.0 as f64 * dt - s).abs() < 1e-9 * dt && (key.1 as f64 * dt - t).abs() < 1e-9 * dt;
        if on_grid {
            if let Some(v) = self.k_cache.lock().expect("k cache").get(&key) {
                return Ok(*v);
            }
        }
        let (_, _, cs) = self.noise().ou.interpolated(s)?;
        let (_, _, ct) = self.noise().ou.interpolated(t)?;
        let v = (-mu * (ct - cs)).exp();
        if on_grid {
            self.k_cache.lock().expect("k cache").insert(key, v);
        }
        Ok(v)
    }

    pub fn diagnostics(&self) -> FlowDiagnostics {
        FlowDiagnostics {
            max_rate: *self.max_rate.lock().expect("rate"),
            cached_k: self.k_cache.lock().expect("k cache").len(),
        }
    }

    /// Flow-property tolerance `5 dt max‖ΔZ/dt‖` from the runs so far.
    pub fn dt_budget(&self, dt: f64) -> f64 {
        DT_BUDGET_FACTOR * dt * self.diagnostics().max_rate
    }

    /// `A_ω(t, v) + μ z_t v`, the right-hand side of the `Z` equation.
    pub fn transformed_drift(&self, t: f64, v: &Field) -> Result<Field> {
        self.drift.triple.mesh.ensure_same(v.mesh())?;
        let n = v.len();
        let mut out = vec![0.0; n];
        if self.is_plain() {
            self.drift.apply_into(t, v.values(), &mut out);
            return Ok(Field::from_raw(*v.mesh(), out));
        }
        let (z, mu_t) = self.conjugation.z_mu(t)?;
        let mu = self.conjugation.mu_exponent();
        let mut u = vec![0.0; n];
        self.conjugation.u_into(t, &mut u)?;
        let arg: Vec<f64> = v.values().iter().zip(&u).map(|(a, b)| (a + b) / mu_t).collect();
        self.drift.apply_into(t, &arg, &mut out);
        let mut mu_u = vec![0.0; n];
        self.drift.triple.aux_m_into(&u, &mut mu_u);
        for i in 0..n {
            out[i] = mu_t * out[i] + mu * z * (u[i] + v.values()[i]) - mu_u[i];
        }
        Ok(Field::from_raw(*v.mesh(), out))
    }

    fn check_span(&self, s: f64, t: f64, cfg: &StepperConfig) -> Result<usize> {
        if t < s {
            return Err(LabError::InvalidParameter(format!("flow needs s <= t, got s = {s}, t = {t}")));
        }
        let lo = self.noise().t_lo();
        let hi = self.noise().t_hi();
        if s < lo || t > hi {
            return Err(LabError::WindowExhausted {
                requested: if s < lo { s } else { t },
                lo,
                hi,
            });
        }
        let noise_dt = self.noise().dt();
        let ratio = cfg.dt / noise_dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(LabError::Grid(format!(
                "stepper dt = {} is not a multiple of the noise dt = {noise_dt}",
                cfg.dt
            )));
        }
        step_count(s, t, cfg.dt)
    }

    /// Drive the `Z̃` equation, reporting every grid value of `Z` to `observe`.
    fn drive(
        &self,
        s: f64,
        t: f64,
        x: &Field,
        cfg: &StepperConfig,
        mut observe: impl FnMut(f64, &[f64]),
    ) -> Result<Vec<f64>> {
        self.drift.triple.mesh.ensure_same(x.mesh())?;
        if t == s {
            observe(s, x.values());
            return Ok(x.values().to_vec());
        }
        self.check_span(s, t, cfg)?;
        let rhs = FlowRhs { run: self, s };
        let triple = &self.drift.triple;
        let mut prev = x.values().to_vec();
        let mut rate: f64 = 0.0;
        let mut scratch = vec![0.0; x.len()];
        let mut failure = None;
        let mut diag = Trajectory::default();
        let last = march(
            &rhs,
            None,
            triple,
            s,
            t,
            x.values(),
            cfg,
            |k, r, w| {
                if failure.is_some() {
                    return;
                }
                let kk = match self.k(s, r) {
                    Ok(v) => v,
                    Err(e) => {
                        failure = Some(e);
                        return;
                    }
                };
                for (o, a) in scratch.iter_mut().zip(w) {
                    *o = a / kk;
                }
                if k > 0 {
                    rate = rate.max(triple.h_dist_raw(&scratch, &prev) / cfg.dt);
                }
                observe(r, &scratch);
                prev.copy_from_slice(&scratch);
            },
            &mut diag,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        {
            let mut m = self.max_rate.lock().expect("rate");
            *m = m.max(rate);
        }
        let kt = self.k(s, t)?;
        Ok(last.iter().map(|w| w / kt).collect())
    }

    /// `Z(t,s;ω)x`.
    pub fn solve_z(&self, s: f64, t: f64, x: &Field, cfg: &StepperConfig) -> Result<Field> {
        if t == s {
            self.drift.triple.mesh.ensure_same(x.mesh())?;
            return Ok(x.clone());
        }
        let v = self.drive(s, t, x, cfg, |_, _| {})?;
        Ok(Field::from_raw(*x.mesh(), v))
    }

    /// `Z(r,s;ω)x` at every grid time `r ∈ [s, t]`.
    pub fn solve_z_path(&self, s: f64, t: f64, x: &Field, cfg: &StepperConfig) -> Result<Trajectory> {
        let mut traj = Trajectory::default();
        let mesh = *x.mesh();
        self.drive(s, t, x, cfg, |r, v| {
            traj.times.push(r);
            traj.states.push(Field::from_raw(mesh, v.to_vec()));
        })?;
        Ok(traj)
    }

    /// `S(t,s;ω)x = T(t)⁻¹ Z(t,s) T(s) x`.
    pub fn flow_s(&self, s: f64, t: f64, x: &Field, cfg: &StepperConfig) -> Result<Field> {
        if t == s {
            self.drift.triple.mesh.ensure_same(x.mesh())?;
            return Ok(x.clone());
        }
        let y = self.conjugation.forward(s, x)?;
        let z = self.solve_z(s, t, &y, cfg)?;
        self.conjugation.inverse(t, &z)
    }

    /// `S(r,s;ω)x` at every grid time `r ∈ [s, t]`.
    pub fn flow_s_path(&self, s: f64, t: f64, x: &Field, cfg: &StepperConfig) -> Result<Trajectory> {
        let y = self.conjugation.forward(s, x)?;
        let mut z = self.solve_z_path(s, t, &y, cfg)?;
        for (r, state) in z.times.iter().zip(z.states.iter_mut()) {
            *state = self.conjugation.inverse(*r, state)?;
        }
        Ok(z)
    }

    /// `e^{(C(t−s) + 2μ∫_s^t z)/2} (μ_s/μ_t) ‖x − y‖_H`, the Lipschitz bound of
    /// `S(t,s)` with `C` the drift's structural constant.
    pub fn continuity_bound(&self, s: f64, t: f64, x: &Field, y: &Field) -> Result<f64> {
        let (_, mu_s) = self.conjugation.z_mu(s)?;
        let (_, mu_t) = self.conjugation.z_mu(t)?;
        let k = self.k(s, t)?;
        let growth = (0.5 * self.drift.big_c * (t - s)).exp() / k;
        Ok(growth * mu_s / mu_t * self.drift.triple.h_distance(x, y)?)
    }

    /// Largest `H` norm, over the grid of `[s, t]`, of the defect in
    /// `S_r = x + ∫A(S) + ∫μ S ∘ dβ + σ(W_r − W_s)`: trapezoid in time,
    /// midpoint sums for `β`, exact increments for `W`.
    pub fn ito_residual(&self, s: f64, t: f64, x: &Field, cfg: &StepperConfig) -> Result<f64> {
        let path = self.flow_s_path(s, t, x, cfg)?;
        let noise = self.noise();
        let mu = self.conjugation.mu_exponent();
        let triple = &self.drift.triple;
        let n = x.len();
        let mut acc = vec![0.0; n];
        let mut a_prev = vec![0.0; n];
        let mut a_next = vec![0.0; n];
        self.drift.apply_into(s, path.states[0].values(), &mut a_prev);
        let mut worst: f64 = 0.0;
        let mut defect = vec![0.0; n];
        for i in 1..path.len() {
            let (r0, r1) = (path.times[i - 1], path.times[i]);
            let (x0, x1) = (path.states[i - 1].values(), path.states[i].values());
            self.drift.apply_into(r1, x1, &mut a_next);
            let db = noise.beta.interpolate(r1)? - noise.beta.interpolate(r0)?;
            for j in 0..n {
                acc[j] += 0.5 * (r1 - r0) * (a_prev[j] + a_next[j]) + mu * 0.5 * (x0[j] + x1[j]) * db;
            }
            std::mem::swap(&mut a_prev, &mut a_next);
            defect.iter_mut().for_each(|d| *d = 0.0);
            if !noise.additive_is_trivial() {
                noise.w.accumulate_increment(s, r1, noise.sigma, &mut defect)?;
            }
            for j in 0..n {
                defect[j] = x1[j] - x.values()[j] - acc[j] - defect[j];
            }
            worst = worst.max(triple.h_norm_raw(&defect));
        }
        Ok(worst)
    }
}

/// `F(t, w) = k(s,t) A_ω(t, w / k(s,t))`.
struct FlowRhs<'a> {
    run: &'a FlowRun,
    s: f64,
}

struct Coefficients {
    k: f64,
    z: f64,
    mu_t: f64,
    u: Vec<f64>,
}

impl FlowRhs<'_> {
    fn coefficients(&self, t: f64, n: usize) -> Result<Coefficients> {
        let k = self.run.k(self.s, t)?;
        let (z, mu_t) = self.run.conjugation.z_mu(t)?;
        let mut u = vec![0.0; n];
        self.run.conjugation.u_into(t, &mut u)?;
        Ok(Coefficients { k, z, mu_t, u })
    }

    /// `(w/k + u)/μ_t`.
    fn argument(c: &Coefficients, w: &[f64]) -> Vec<f64> {
        w.iter().zip(&c.u).map(|(a, b)| (a / c.k + b) / c.mu_t).collect()
    }

    /// `k(μ z_t u − M(u))`.
    fn offset(&self, c: &Coefficients) -> Vec<f64> {
        let mu = self.run.conjugation.mu_exponent();
        let mut m = vec![0.0; c.u.len()];
        self.run.drift.triple.aux_m_into(&c.u, &mut m);
        c.u.iter().zip(&m).map(|(u, mu_u)| c.k * (mu * c.z * u - mu_u)).collect()
    }
}

impl Rhs for FlowRhs<'_> {
    fn eval(&self, t: f64, w: &[f64], out: &mut [f64]) {
        if self.run.is_plain() {
            self.run.drift.apply_into(t, w, out);
            return;
        }
        let Ok(c) = self.coefficients(t, w.len()) else {
            out.iter_mut().for_each(|o| *o = f64::NAN);
            return;
        };
        let arg = Self::argument(&c, w);
        self.run.drift.apply_into(t, &arg, out);
        let off = self.offset(&c);
        let scale = c.k * c.mu_t;
        for (o, b) in out.iter_mut().zip(&off) {
            *o = scale * *o + b;
        }
    }

    fn jacobian(&self, t: f64, w: &[f64], jac: &mut Tridiagonal) {
        if self.run.is_plain() {
            self.run.drift.jacobian(t, w, jac);
            return;
        }
        match self.coefficients(t, w.len()) {
            Ok(c) => self.run.drift.jacobian(t, &Self::argument(&c, w), jac),
            Err(_) => {
                jac.fill_zero();
                jac.diag.iter_mut().for_each(|d| *d = f64::NAN);
            }
        }
    }

    fn picard_split(&self, t: f64, w: &[f64], mat: &mut Tridiagonal, constant: &mut [f64]) -> bool {
        if self.run.is_plain() {
            return self.run.drift.picard_split(t, w, mat, constant);
        }
        let Ok(c) = self.coefficients(t, w.len()) else {
            return false;
        };
        let arg = Self::argument(&c, w);
        let mut p0 = vec![0.0; w.len()];
        if !self.run.drift.picard_split(t, &arg, mat, &mut p0) {
            return false;
        }
        // A(y) ≈ P y + p0 with y = (w/k + u)/μ gives F ≈ P w + k(P u + μ p0) + offset.
        let mut pu = vec![0.0; w.len()];
        mat.mul_vec(&c.u, &mut pu);
        let off = self.offset(&c);
        for i in 0..w.len() {
            constant[i] = c.k * (pu[i] + c.mu_t * p0[i]) + off[i];
        }
        true
    }
}

/// `‖S(t,s;ω)x − S(t−s,0;θ_sω)x‖_H`, rebuilding the shifted flow (including
/// its stationary solution) from `θ_s ω`.
pub fn check_cocycle(
    run: &FlowRun,
    s: f64,
    t: f64,
    x: &Field,
    cfg: &StepperConfig,
    pullback: &PullbackConfig,
) -> Result<f64> {
    if s == 0.0 {
        return Ok(0.0);
    }
    let direct = run.flow_s(s, t, x, cfg)?;
    let shifted = FlowRun::build(run.drift.clone(), run.noise().shifted(s)?, (0.0, t - s), pullback)?;
    let moved = shifted.flow_s(0.0, t - s, x, cfg)?;
    run.drift.triple.h_distance(&direct, &moved)
}
