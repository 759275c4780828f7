//! Backward Euler for `dv/dt = F(t, v) + forcing`, solved by damped Newton.
//!
//! Each step solves `w − dt F(t + dt, w) = v + ∫_t^{t+dt} forcing`. All
//! Jacobians are tridiagonal. Residuals are measured in the `H` norm of the
//! triple, and when backtracking stalls a lagged-diffusivity (Picard) step is
//! tried before giving up.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::Field;
use crate::gelfand::{DriftSpec, TripleSpec};
use crate::linalg::Tridiagonal;
use crate::noise::NoiseEnvironment;

/// Right-hand side with a tridiagonal Jacobian.
pub trait Rhs: Sync {
    fn eval(&self, t: f64, v: &[f64], out: &mut [f64]);

    fn jacobian(&self, t: f64, v: &[f64], jac: &mut Tridiagonal);

    /// Frozen-coefficient split `F(t, w) ≈ P w + b` at `v`, if available.
    fn picard_split(&self, _t: f64, _v: &[f64], _mat: &mut Tridiagonal, _constant: &mut [f64]) -> bool {
        false
    }
}

impl Rhs for DriftSpec {
    fn eval(&self, t: f64, v: &[f64], out: &mut [f64]) {
        self.apply_into(t, v, out);
    }

    fn jacobian(&self, t: f64, v: &[f64], jac: &mut Tridiagonal) {
        DriftSpec::jacobian(self, t, v, jac);
    }

    fn picard_split(&self, t: f64, v: &[f64], mat: &mut Tridiagonal, constant: &mut [f64]) -> bool {
        DriftSpec::picard_split(self, t, v, mat, constant)
    }
}

/// The auxiliary operator `M` of a triple as a right-hand side.
pub struct AuxMRhs<'a>(pub &'a TripleSpec);

impl Rhs for AuxMRhs<'_> {
    fn eval(&self, _t: f64, v: &[f64], out: &mut [f64]) {
        self.0.aux_m_into(v, out);
    }

    fn jacobian(&self, _t: f64, v: &[f64], jac: &mut Tridiagonal) {
        self.0.aux_m_jacobian(v, jac);
    }

    fn picard_split(&self, _t: f64, v: &[f64], mat: &mut Tridiagonal, constant: &mut [f64]) -> bool {
        constant.iter_mut().for_each(|c| *c = 0.0);
        self.0.aux_m_picard(v, mat)
    }
}

/// `F ≡ 0`.
pub struct ZeroRhs;

impl Rhs for ZeroRhs {
    fn eval(&self, _t: f64, _v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }

    fn jacobian(&self, _t: f64, _v: &[f64], jac: &mut Tridiagonal) {
        jac.fill_zero();
    }
}

/// Additive forcing, supplied through its integral over a step.
pub trait Forcing: Sync {
    /// `out += ∫_{t0}^{t1} forcing`.
    fn accumulate(&self, t0: f64, t1: f64, out: &mut [f64]) -> Result<()>;
}

/// Constant rate `g`.
pub struct ConstantForcing(pub Vec<f64>);

impl Forcing for ConstantForcing {
    fn accumulate(&self, t0: f64, t1: f64, out: &mut [f64]) -> Result<()> {
        let dt = t1 - t0;
        for (o, g) in out.iter_mut().zip(&self.0) {
            *o += dt * g;
        }
        Ok(())
    }
}

/// `σ μ_t dW_t` from a sampled environment.
impl Forcing for NoiseEnvironment {
    fn accumulate(&self, t0: f64, t1: f64, out: &mut [f64]) -> Result<()> {
        self.accumulate_forcing(t0, t1, out)
    }
}

/// A pathwise problem on `[t_start, t_end]`.
pub struct RandomPdeProblem<'a> {
    pub rhs: &'a dyn Rhs,
    pub forcing: Option<&'a dyn Forcing>,
    pub t_start: f64,
    pub t_end: f64,
    pub initial: Field,
    pub triple: &'a TripleSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    /// Relative tolerance; a step stops at residual `≤ newton_tol (1 + ‖v‖_H)`.
    pub newton_tol: f64,
    pub newton_max: usize,
    pub damping: f64,
    pub record_stride: usize,
    /// States before this time are not recorded.
    pub record_from: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            newton_tol: 1e-10,
            newton_max: 50,
            damping: 1.0,
            record_stride: 1,
            record_from: f64::NEG_INFINITY,
        }
    }
}

impl StepperConfig {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(LabError::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(LabError::InvalidParameter("newton_tol must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(LabError::InvalidParameter("damping must lie in (0, 1]".into()));
        }
        if self.newton_max == 0 || self.record_stride == 0 {
            return Err(LabError::InvalidParameter("newton_max and record_stride must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    /// Newton iterations of every step, recorded or not.
    pub newton_iterations: Vec<usize>,
    /// Final residual `H` norm of every step.
    pub residuals: Vec<f64>,
    /// Number of steps that needed the halved-dt retry.
    pub halvings: usize,
}

const BINARY_MAGIC: &[u8; 8] = b"ALTRAJ01";

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&Field> {
        self.states.last()
    }

    /// State recorded at `t` (nearest record within `tol`).
    pub fn state_at(&self, t: f64, tol: f64) -> Option<&Field> {
        let idx = self.times.partition_point(|s| *s < t - tol);
        (idx < self.times.len() && (self.times[idx] - t).abs() <= tol).then(|| &self.states[idx])
    }

    /// CSV with columns `t, x_0, …, x_{N−1}`.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let n = self.states.first().map_or(0, |s| s.len());
        write!(out, "t")?;
        for i in 0..n {
            write!(out, ",x{i}")?;
        }
        writeln!(out)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(out, "{t}")?;
            for v in s.values() {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Binary dump: 8-byte magic `ALTRAJ01`, `N` and record count as
    /// little-endian `u64`, then per record `t` followed by `N` values, all
    /// little-endian `f64`.
    pub fn to_binary(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let n = self.states.first().map_or(0, |s| s.len());
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&(n as u64).to_le_bytes())?;
        out.write_all(&(self.times.len() as u64).to_le_bytes())?;
        for (t, s) in self.times.iter().zip(&self.states) {
            out.write_all(&t.to_le_bytes())?;
            for v in s.values() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Read a binary dump back as `(times, rows)`.
    pub fn read_binary(path: &Path) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 24 || &bytes[..8] != BINARY_MAGIC {
            return Err(LabError::Io("not a trajectory dump".into()));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
        let n = word(8) as usize;
        let count = word(16) as usize;
        if bytes.len() != 24 + count * (n + 1) * 8 {
            return Err(LabError::Io("truncated trajectory dump".into()));
        }
        let float = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
        let mut times = Vec::with_capacity(count);
        let mut rows = Vec::with_capacity(count);
        for r in 0..count {
            let base = 24 + r * (n + 1) * 8;
            times.push(float(base));
            rows.push((0..n).map(|i| float(base + 8 * (i + 1))).collect());
        }
        Ok((times, rows))
    }
}

/// Scratch buffers reused across steps.
pub(crate) struct Workspace {
    b: Vec<f64>,
    res: Vec<f64>,
    f: Vec<f64>,
    delta: Vec<f64>,
    trial: Vec<f64>,
    jac: Tridiagonal,
    scratch: Vec<f64>,
    constant: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            b: vec![0.0; n],
            res: vec![0.0; n],
            f: vec![0.0; n],
            delta: vec![0.0; n],
            trial: vec![0.0; n],
            jac: Tridiagonal::zeros(n),
            scratch: Vec::with_capacity(n),
            constant: vec![0.0; n],
        }
    }
}

fn residual(rhs: &dyn Rhs, t1: f64, dt: f64, w: &[f64], b: &[f64], f: &mut [f64], res: &mut [f64]) {
    rhs.eval(t1, w, f);
    for i in 0..w.len() {
        res[i] = w[i] - dt * f[i] - b[i];
    }
}

/// One backward Euler step; returns `(iterations, final residual)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn step_raw(
    rhs: &dyn Rhs,
    forcing: Option<&dyn Forcing>,
    triple: &TripleSpec,
    v: &[f64],
    t: f64,
    dt: f64,
    cfg: &StepperConfig,
    ws: &mut Workspace,
    w: &mut [f64],
) -> Result<(usize, f64)> {
    let t1 = t + dt;
    ws.b.copy_from_slice(v);
    if let Some(force) = forcing {
        force.accumulate(t, t1, &mut ws.b)?;
    }
    w.copy_from_slice(&ws.b);
    let tol = cfg.newton_tol * (1.0 + triple.h_norm_raw(v));
    residual(rhs, t1, dt, w, &ws.b, &mut ws.f, &mut ws.res);
    let mut r = triple.h_norm_raw(&ws.res);
    let diverged = |r: f64, it: usize| LabError::NewtonDiverged {
        time: t1,
        residual: r,
        iterations: it,
    };
    for it in 0..cfg.newton_max {
        if !r.is_finite() {
            return Err(diverged(r, it));
        }
        if r <= tol {
            return Ok((it, r));
        }
        rhs.jacobian(t1, w, &mut ws.jac);
        ws.jac.identity_minus_scaled(dt);
        for (d, x) in ws.delta.iter_mut().zip(&ws.res) {
            *d = -x;
        }
        let mut accepted = false;
        if ws.jac.solve_in_place(&mut ws.delta, &mut ws.scratch) {
            let mut lambda = cfg.damping;
            for _ in 0..40 {
                for i in 0..w.len() {
                    ws.trial[i] = w[i] + lambda * ws.delta[i];
                }
                residual(rhs, t1, dt, &ws.trial, &ws.b, &mut ws.f, &mut ws.res);
                let rt = triple.h_norm_raw(&ws.res);
                if rt.is_finite() && rt < (1.0 - 1e-4 * lambda) * r {
                    w.copy_from_slice(&ws.trial);
                    r = rt;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if !accepted {
            if rhs.picard_split(t1, w, &mut ws.jac, &mut ws.constant) {
                ws.jac.identity_minus_scaled(dt);
                for i in 0..w.len() {
                    ws.trial[i] = ws.b[i] + dt * ws.constant[i];
                }
                if ws.jac.solve_in_place(&mut ws.trial, &mut ws.scratch) {
                    residual(rhs, t1, dt, &ws.trial, &ws.b, &mut ws.f, &mut ws.res);
                    let rt = triple.h_norm_raw(&ws.res);
                    if rt.is_finite() && rt < r {
                        w.copy_from_slice(&ws.trial);
                        r = rt;
                        accepted = true;
                    }
                }
            }
            if !accepted {
                // Residual evaluations above clobbered `res`; restore it.
                residual(rhs, t1, dt, w, &ws.b, &mut ws.f, &mut ws.res);
                if r <= tol {
                    return Ok((it, r));
                }
                return Err(diverged(r, it + 1));
            }
        }
        residual(rhs, t1, dt, w, &ws.b, &mut ws.f, &mut ws.res);
    }
    if r <= tol {
        Ok((cfg.newton_max, r))
    } else {
        Err(diverged(r, cfg.newton_max))
    }
}

/// Solve `w = v + dt F(t + dt, w) + ∫_t^{t+dt} forcing`.
pub fn step_backward_euler(
    problem: &RandomPdeProblem<'_>,
    v: &Field,
    t: f64,
    dt: f64,
    cfg: &StepperConfig,
) -> Result<Field> {
    problem.triple.mesh.ensure_same(v.mesh())?;
    let n = v.len();
    let mut ws = Workspace::new(n);
    let mut w = vec![0.0; n];
    step_raw(problem.rhs, problem.forcing, problem.triple, v.values(), t, dt, cfg, &mut ws, &mut w)?;
    Ok(Field::from_raw(problem.triple.mesh, w))
}

/// Number of `dt` steps covering `[t0, t1]`; the span must be a multiple of `dt`.
pub(crate) fn step_count(t0: f64, t1: f64, dt: f64) -> Result<usize> {
    if t1 < t0 {
        return Err(LabError::InvalidParameter(format!("t_end = {t1} precedes t_start = {t0}")));
    }
    let x = (t1 - t0) / dt;
    let n = x.round();
    if (x - n).abs() > 1e-6 * (1.0 + n) {
        return Err(LabError::Grid(format!(
            "interval [{t0}, {t1}] is not a multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

/// Per-step driver shared by the public integrators. `observe` sees every
/// state on the grid, including the initial one, as `(step, t, values)`.
pub(crate) fn march(
    rhs: &dyn Rhs,
    forcing: Option<&dyn Forcing>,
    triple: &TripleSpec,
    t_start: f64,
    t_end: f64,
    initial: &[f64],
    cfg: &StepperConfig,
    mut observe: impl FnMut(usize, f64, &[f64]),
    diag: &mut Trajectory,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let steps = step_count(t_start, t_end, cfg.dt)?;
    let n = initial.len();
    let mut ws = Workspace::new(n);
    let mut v = initial.to_vec();
    let mut w = vec![0.0; n];
    let mut mid = vec![0.0; n];
    observe(0, t_start, &v);
    for k in 0..steps {
        let t = t_start + k as f64 * cfg.dt;
        match step_raw(rhs, forcing, triple, &v, t, cfg.dt, cfg, &mut ws, &mut w) {
            Ok((it, r)) => {
                diag.newton_iterations.push(it);
                diag.residuals.push(r);
            }
            Err(LabError::NewtonDiverged { .. }) => {
                let half = 0.5 * cfg.dt;
                let (i1, _) = step_raw(rhs, forcing, triple, &v, t, half, cfg, &mut ws, &mut mid)?;
                let (i2, r2) = step_raw(rhs, forcing, triple, &mid, t + half, half, cfg, &mut ws, &mut w)?;
                diag.newton_iterations.push(i1 + i2);
                diag.residuals.push(r2);
                diag.halvings += 1;
            }
            Err(e) => return Err(e),
        }
        std::mem::swap(&mut v, &mut w);
        let t_next = if k + 1 == steps {
            t_end
        } else {
            t_start + (k + 1) as f64 * cfg.dt
        };
        observe(k + 1, t_next, &v);
    }
    Ok(v)
}

/// Uniform-grid trajectory from `t_start` to `t_end`. Every `record_stride`-th
/// state at or after `record_from` is stored, and the final state always is.
pub fn integrate(problem: &RandomPdeProblem<'_>, cfg: &StepperConfig) -> Result<Trajectory> {
    problem.triple.mesh.ensure_same(problem.initial.mesh())?;
    let mesh = problem.triple.mesh;
    let steps = step_count(problem.t_start, problem.t_end, cfg.dt)?;
    let mut diag = Trajectory::default();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let from = cfg.record_from - 1e-9 * cfg.dt;
    march(
        problem.rhs,
        problem.forcing,
        problem.triple,
        problem.t_start,
        problem.t_end,
        problem.initial.values(),
        cfg,
        |k, t, v| {
            if t >= from && (k % cfg.record_stride == 0 || k == steps) {
                times.push(t);
                states.push(Field::from_raw(mesh, v.to_vec()));
            }
        },
        &mut diag,
    )?;
    diag.times = times;
    diag.states = states;
    Ok(diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Mesh1D;
    use crate::gelfand::{DriftParams, TripleKind};

    struct NegCube;

    impl Rhs for NegCube {
        fn eval(&self, _t: f64, v: &[f64], out: &mut [f64]) {
            for (o, x) in out.iter_mut().zip(v) {
                *o = -x * x * x;
            }
        }

        fn jacobian(&self, _t: f64, v: &[f64], jac: &mut Tridiagonal) {
            jac.fill_zero();
            for (d, x) in jac.diag.iter_mut().zip(v) {
                *d = -3.0 * x * x;
            }
        }
    }

    fn triple() -> TripleSpec {
        TripleSpec::new(TripleKind::PLaplace, 2.0, Mesh1D::new(1.0, 2).unwrap()).unwrap()
    }

    #[test]
    fn zero_rhs_is_identity() {
        let tr = triple();
        let v = Field::from_values(tr.mesh, vec![0.3, -1.2]).unwrap();
        let p = RandomPdeProblem {
            rhs: &ZeroRhs,
            forcing: None,
            t_start: 0.0,
            t_end: 1.0,
            initial: v.clone(),
            triple: &tr,
        };
        let w = step_backward_euler(&p, &v, 0.0, 0.1, &StepperConfig::default()).unwrap();
        assert_eq!(w, v);
    }

    #[test]
    fn cubic_step_matches_bisection() {
        let tr = triple();
        let v = Field::from_values(tr.mesh, vec![1.0, 1.0]).unwrap();
        let p = RandomPdeProblem {
            rhs: &NegCube,
            forcing: None,
            t_start: 0.0,
            t_end: 0.1,
            initial: v.clone(),
            triple: &tr,
        };
        let w = step_backward_euler(&p, &v, 0.0, 0.1, &StepperConfig::default()).unwrap();
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if m + 0.1 * m * m * m > 1.0 {
                hi = m;
            } else {
                lo = m;
            }
        }
        assert!((w.values()[0] - lo).abs() < 1e-10);
    }

    #[test]
    fn degenerate_start_is_handled() {
        let mesh = Mesh1D::new(1.0, 40).unwrap();
        for params in [DriftParams::pme(3.0, 0.0), DriftParams::p_laplace(4.0, 0.0)] {
            let drift = DriftSpec::new(params, mesh).unwrap();
            let init = Field::from_fn(mesh, |x| if (x - 0.5).abs() < 0.1 { 1.0 } else { 0.0 });
            let p = RandomPdeProblem {
                rhs: &drift,
                forcing: None,
                t_start: 0.0,
                t_end: 0.5,
                initial: init,
                triple: &drift.triple,
            };
            let traj = integrate(&p, &StepperConfig::with_dt(0.05)).unwrap();
            assert_eq!(traj.len(), 11);
            assert!(traj.last().unwrap().max_abs() < 1.0);
        }
    }

    #[test]
    fn misaligned_interval_is_rejected() {
        let tr = triple();
        let p = RandomPdeProblem {
            rhs: &ZeroRhs,
            forcing: None,
            t_start: 0.0,
            t_end: 0.25,
            initial: Field::zeros(tr.mesh),
            triple: &tr,
        };
        assert!(matches!(integrate(&p, &StepperConfig::with_dt(0.1)), Err(LabError::Grid(_))));
    }
}
