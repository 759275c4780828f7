//! Driving noise: two-sided Brownian paths, Q-Wiener paths in the discrete
//! `H`, the Wiener shift and the stationary Ornstein–Uhlenbeck multiplier.
//!
//! Paths live on the integer lattice `t = j * dt`, so shifting by a multiple of
//! `dt` is an exact reindexing. Every scalar path is generated from two
//! independent ChaCha streams keyed by `(seed, stream id)`: one walks forward
//! from `t = 0`, the other backward. Enlarging the window therefore extends a
//! path without changing the values already sampled.
//!
//! Stratonovich integrals `∫ μ_r ∘ dW_r` are evaluated as left-point sums.
//! `μ` is a functional of `β` alone, `β` is independent of `W`, so the
//! cross-variation `⟨μ, W⟩` vanishes and both sums share a limit.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{Field, Mesh1D};
use crate::linalg::{dirichlet_eigenvalue, dirichlet_eigenvector};

/// Relative tolerance for deciding that a time lies on the lattice.
const GRID_TOL: f64 = 1e-6;

fn lattice_index(t: f64, dt: f64) -> Option<i64> {
    let x = t / dt;
    let r = x.round();
    if (x - r).abs() <= GRID_TOL * (1.0 + r.abs()).min(1e3) {
        Some(r as i64)
    } else {
        None
    }
}

fn stream_id(component: u64, backward: bool) -> u64 {
    (component << 1) | u64::from(backward)
}

/// Stream component of the scalar motion `β`.
pub const BETA_COMPONENT: u64 = 0;

/// Stream component of Wiener mode `k` (zero based).
pub fn mode_component(k: usize) -> u64 {
    k as u64 + 1
}

/// A two-sided real Brownian path on a uniform grid containing 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath {
    pub t_min: f64,
    pub t_max: f64,
    pub dt: f64,
    pub seed: u64,
    /// Lattice index of `values[0]`, i.e. `t_min = start_index * dt`.
    start_index: i64,
    values: Vec<f64>,
}

/// Sample `β` for component [`BETA_COMPONENT`].
pub fn sample_brownian(seed: u64, t_min: f64, t_max: f64, dt: f64) -> Result<BrownianPath> {
    sample_brownian_component(seed, BETA_COMPONENT, t_min, t_max, dt)
}

/// Sample a Brownian path from the sub-streams reserved for `component`.
pub fn sample_brownian_component(
    seed: u64,
    component: u64,
    t_min: f64,
    t_max: f64,
    dt: f64,
) -> Result<BrownianPath> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(LabError::Grid(format!("dt must be positive, got {dt}")));
    }
    if !(t_min < 0.0 && 0.0 < t_max) {
        return Err(LabError::Grid(format!(
            "window [{t_min}, {t_max}] must contain 0 in its interior"
        )));
    }
    let lo = lattice_index(t_min, dt)
        .ok_or_else(|| LabError::Grid(format!("t_min = {t_min} is not a multiple of dt = {dt}")))?;
    let hi = lattice_index(t_max, dt)
        .ok_or_else(|| LabError::Grid(format!("t_max = {t_max} is not a multiple of dt = {dt}")))?;
    let n_back = (-lo) as usize;
    let n_fwd = hi as usize;
    let sd = dt.sqrt();
    let mut values = vec![0.0; n_back + n_fwd + 1];

    let mut fwd = ChaCha8Rng::seed_from_u64(seed);
    fwd.set_stream(stream_id(component, false));
    for i in 1..=n_fwd {
        let xi: f64 = fwd.sample(StandardNormal);
        values[n_back + i] = values[n_back + i - 1] + sd * xi;
    }
    let mut bwd = ChaCha8Rng::seed_from_u64(seed);
    bwd.set_stream(stream_id(component, true));
    for i in 1..=n_back {
        let xi: f64 = bwd.sample(StandardNormal);
        values[n_back - i] = values[n_back - i + 1] + sd * xi;
    }
    Ok(BrownianPath {
        t_min: lo as f64 * dt,
        t_max: hi as f64 * dt,
        dt,
        seed,
        start_index: lo,
        values,
    })
}

impl BrownianPath {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        (self.start_index + j as i64) as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.time(j)).collect()
    }

    /// Storage index of grid time `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = lattice_index(t, self.dt)
            .ok_or_else(|| LabError::Grid(format!("t = {t} is not on the dt = {} grid", self.dt)))?;
        let j = k - self.start_index;
        if j < 0 || j as usize >= self.values.len() {
            return Err(LabError::WindowExhausted {
                requested: t,
                lo: self.t_min,
                hi: self.t_max,
            });
        }
        Ok(j as usize)
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        Ok(self.values[self.index_of(t)?])
    }

    /// Value at an arbitrary time in the window by linear interpolation.
    pub fn interpolate(&self, t: f64) -> Result<f64> {
        let (j, frac) = self.locate(t)?;
        if frac == 0.0 {
            return Ok(self.values[j]);
        }
        Ok(self.values[j] + frac * (self.values[j + 1] - self.values[j]))
    }

    /// Cell index and fractional offset of `t`; snaps to lattice points.
    pub(crate) fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if let Ok(j) = self.index_of(t) {
            return Ok((j, 0.0));
        }
        let x = t / self.dt - self.start_index as f64;
        if x < 0.0 || x > (self.values.len() - 1) as f64 {
            return Err(LabError::WindowExhausted {
                requested: t,
                lo: self.t_min,
                hi: self.t_max,
            });
        }
        let j = x.floor() as usize;
        Ok((j, x - j as f64))
    }

    /// Same path up to `t`; increments after `t` are redrawn from `seed`.
    pub fn resampled_after(&self, t: f64, seed: u64, component: u64) -> Result<Self> {
        let (j, _) = self.locate(t)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id(component, false));
        let sd = self.dt.sqrt();
        let mut out = self.clone();
        for i in j + 1..out.values.len() {
            let xi: f64 = rng.sample(StandardNormal);
            out.values[i] = out.values[i - 1] + sd * xi;
        }
        out.seed = seed;
        Ok(out)
    }

    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,value")?;
        for (j, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", self.time(j), v)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Shift operation `(θ_h ω)_t = ω_{t+h} − ω_h`.
pub trait WienerShift: Sized {
    fn wiener_shift(&self, h: f64) -> Result<Self>;
}

impl WienerShift for BrownianPath {
    fn wiener_shift(&self, h: f64) -> Result<Self> {
        let hk = lattice_index(h, self.dt)
            .ok_or_else(|| LabError::Grid(format!("shift {h} is not a multiple of dt = {}", self.dt)))?;
        let jh = hk - self.start_index;
        if jh < 0 || jh as usize >= self.values.len() {
            return Err(LabError::WindowExhausted {
                requested: h,
                lo: self.t_min,
                hi: self.t_max,
            });
        }
        let anchor = self.values[jh as usize];
        let start_index = self.start_index - hk;
        Ok(BrownianPath {
            t_min: start_index as f64 * self.dt,
            t_max: (start_index + self.values.len() as i64 - 1) as f64 * self.dt,
            dt: self.dt,
            seed: self.seed,
            start_index,
            values: self.values.iter().map(|v| v - anchor).collect(),
        })
    }
}

/// Trace-class Wiener path `W_t = Σ_k √q_k β^k_t e_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HWienerPath {
    pub mesh: Mesh1D,
    pub eigenvalues: Vec<f64>,
    pub trace: f64,
    pub basis: Vec<Field>,
    pub mode_paths: Vec<BrownianPath>,
}

/// Sample the `K = eigenvalues.len()` mode paths on `window`.
pub fn sample_trace_class_wiener(
    seed: u64,
    eigenvalues: &[f64],
    basis: &[Field],
    window: (f64, f64),
    dt: f64,
) -> Result<HWienerPath> {
    if eigenvalues.len() != basis.len() {
        return Err(LabError::InvalidParameter(format!(
            "{} eigenvalues but {} basis fields",
            eigenvalues.len(),
            basis.len()
        )));
    }
    if basis.is_empty() {
        return Err(LabError::InvalidParameter("at least one mode is required".into()));
    }
    if let Some(q) = eigenvalues.iter().find(|q| !(**q >= 0.0) || !q.is_finite()) {
        return Err(LabError::InvalidParameter(format!(
            "eigenvalues must be nonnegative and finite, got {q}"
        )));
    }
    let mesh = *basis[0].mesh();
    for b in basis {
        mesh.ensure_same(b.mesh())?;
    }
    let mode_paths = (0..basis.len())
        .map(|k| sample_brownian_component(seed, mode_component(k), window.0, window.1, dt))
        .collect::<Result<Vec<_>>>()?;
    Ok(HWienerPath {
        mesh,
        eigenvalues: eigenvalues.to_vec(),
        trace: eigenvalues.iter().sum(),
        basis: basis.to_vec(),
        mode_paths,
    })
}

impl HWienerPath {
    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.eigenvalues.iter().all(|q| *q == 0.0)
    }

    pub fn dt(&self) -> f64 {
        self.mode_paths[0].dt
    }

    pub fn t_min(&self) -> f64 {
        self.mode_paths[0].t_min
    }

    pub fn t_max(&self) -> f64 {
        self.mode_paths[0].t_max
    }

    /// `W_t` at a grid time.
    pub fn eval(&self, t: f64) -> Result<Field> {
        let j = self.mode_paths[0].index_of(t)?;
        let mut out = vec![0.0; self.mesh.n()];
        self.accumulate_at_index(j, 1.0, &mut out);
        Ok(Field::from_raw(self.mesh, out))
    }

    /// `out += scale * (W at storage index j)`.
    pub(crate) fn accumulate_at_index(&self, j: usize, scale: f64, out: &mut [f64]) {
        for ((q, e), path) in self.eigenvalues.iter().zip(&self.basis).zip(&self.mode_paths) {
            if *q == 0.0 {
                continue;
            }
            let c = scale * q.sqrt() * path.values[j];
            for (o, b) in out.iter_mut().zip(e.values()) {
                *o += c * b;
            }
        }
    }

    /// `out += scale * (W_{t1} − W_{t0})` with linear interpolation inside cells.
    pub(crate) fn accumulate_increment(&self, t0: f64, t1: f64, scale: f64, out: &mut [f64]) -> Result<()> {
        for ((q, e), path) in self.eigenvalues.iter().zip(&self.basis).zip(&self.mode_paths) {
            if *q == 0.0 {
                continue;
            }
            let c = scale * q.sqrt() * (path.interpolate(t1)? - path.interpolate(t0)?);
            for (o, b) in out.iter_mut().zip(e.values()) {
                *o += c * b;
            }
        }
        Ok(())
    }

    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(out, "t")?;
        for k in 0..self.modes() {
            write!(out, ",mode_{k}")?;
        }
        writeln!(out)?;
        let base = &self.mode_paths[0];
        for j in 0..base.len() {
            write!(out, "{}", base.time(j))?;
            for p in &self.mode_paths {
                write!(out, ",{}", p.values[j])?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }
}

impl WienerShift for HWienerPath {
    fn wiener_shift(&self, h: f64) -> Result<Self> {
        Ok(HWienerPath {
            mesh: self.mesh,
            eigenvalues: self.eigenvalues.clone(),
            trace: self.trace,
            basis: self.basis.clone(),
            mode_paths: self
                .mode_paths
                .iter()
                .map(|p| p.wiener_shift(h))
                .collect::<Result<Vec<_>>>()?,
        })
    }
}

/// Stationary OU path `dz = −z dt + dβ` and the multiplier `μ_t = e^{−μ z_t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OUPath {
    pub base: BrownianPath,
    pub z_values: Vec<f64>,
    pub mu_exponent: f64,
    pub mu_values: Vec<f64>,
    pub burn_in: f64,
    /// Trapezoid primitive `∫_{t_min}^{t_j} z`.
    cum_z: Vec<f64>,
}

/// Default burn-in length; `e^{−20}` is below the solver tolerances.
pub const DEFAULT_BURN_IN: f64 = 20.0;

/// Run the exponential-Euler OU recursion from `z = 0` at `beta.t_min`. Values
/// are trusted from `beta.t_min + burn_in` on.
pub fn ou_stationary(beta: &BrownianPath, mu: f64, burn_in: f64) -> Result<OUPath> {
    if !(burn_in >= 0.0) || !burn_in.is_finite() {
        return Err(LabError::InvalidParameter(format!(
            "burn_in must be nonnegative, got {burn_in}"
        )));
    }
    if beta.t_min + burn_in > beta.t_max {
        return Err(LabError::WindowExhausted {
            requested: beta.t_min + burn_in,
            lo: beta.t_min,
            hi: beta.t_max,
        });
    }
    let n = beta.len();
    let decay = (-beta.dt).exp();
    let weight = (-0.5 * beta.dt).exp();
    let mut z = vec![0.0; n];
    for j in 1..n {
        z[j] = decay * z[j - 1] + weight * (beta.values[j] - beta.values[j - 1]);
    }
    let mu_values = z.iter().map(|zz| (-mu * zz).exp()).collect();
    let mut cum_z = vec![0.0; n];
    for j in 1..n {
        cum_z[j] = cum_z[j - 1] + 0.5 * beta.dt * (z[j] + z[j - 1]);
    }
    Ok(OUPath {
        base: beta.clone(),
        z_values: z,
        mu_exponent: mu,
        mu_values,
        burn_in,
        cum_z,
    })
}

impl OUPath {
    pub fn valid_from(&self) -> f64 {
        self.base.t_min + self.burn_in
    }

    fn checked_index(&self, t: f64) -> Result<usize> {
        let j = self.base.index_of(t)?;
        if t < self.valid_from() - GRID_TOL * self.base.dt {
            return Err(LabError::WindowExhausted {
                requested: t,
                lo: self.valid_from(),
                hi: self.base.t_max,
            });
        }
        Ok(j)
    }

    pub fn z(&self, t: f64) -> Result<f64> {
        Ok(self.z_values[self.checked_index(t)?])
    }

    pub fn mu(&self, t: f64) -> Result<f64> {
        Ok(self.mu_values[self.checked_index(t)?])
    }

    /// Trapezoid approximation of `∫_s^t z_r dr` on the noise grid.
    pub fn integral_z(&self, s: f64, t: f64) -> Result<f64> {
        Ok(self.cum_z[self.checked_index(t)?] - self.cum_z[self.checked_index(s)?])
    }

    /// `(z_t, μ_t, ∫_{t_min}^t z)` at any time of the trusted window, linear
    /// between grid points.
    pub fn interpolated(&self, t: f64) -> Result<(f64, f64, f64)> {
        if t < self.valid_from() - GRID_TOL * self.base.dt {
            return Err(LabError::WindowExhausted {
                requested: t,
                lo: self.valid_from(),
                hi: self.base.t_max,
            });
        }
        let (j, f) = self.base.locate(t)?;
        if f == 0.0 {
            return Ok((self.z_values[j], self.mu_values[j], self.cum_z[j]));
        }
        let lerp = |v: &[f64]| v[j] + f * (v[j + 1] - v[j]);
        Ok((lerp(&self.z_values), lerp(&self.mu_values), lerp(&self.cum_z)))
    }

    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,z,mu")?;
        let start = self.base.index_of(self.valid_from()).unwrap_or(0);
        for j in start..self.z_values.len() {
            writeln!(out, "{},{},{}", self.base.time(j), self.z_values[j], self.mu_values[j])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Which basis carries the Wiener modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisNorm {
    /// `L²`-orthonormal sine vectors.
    L2,
    /// Sine vectors scaled by `√λ_k`, orthonormal in the discrete `H^{−1}`.
    HMinusOne,
}

/// Discrete Dirichlet eigenvectors `e_1..e_K`, orthonormal in the chosen `H`.
pub fn dirichlet_basis(mesh: Mesh1D, modes: usize, norm: BasisNorm) -> Result<Vec<Field>> {
    if modes == 0 || modes > mesh.n() {
        return Err(LabError::InvalidParameter(format!(
            "mode count must lie in 1..={}, got {modes}",
            mesh.n()
        )));
    }
    Ok((1..=modes)
        .map(|k| {
            let mut e = dirichlet_eigenvector(k, mesh.n(), mesh.length);
            if norm == BasisNorm::HMinusOne {
                let s = dirichlet_eigenvalue(k, mesh.n(), mesh.length).sqrt();
                e.iter_mut().for_each(|v| *v *= s);
            }
            Field::from_raw(mesh, e)
        })
        .collect())
}

/// `q_k = scale · k^{−γ}` for `k = 1..=modes`.
pub fn power_law_eigenvalues(modes: usize, gamma: f64, scale: f64) -> Vec<f64> {
    (1..=modes).map(|k| scale * (k as f64).powf(-gamma)).collect()
}

/// Parameters of a [`NoiseEnvironment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub seed: u64,
    /// Earliest time at which `z` is trusted.
    pub t_min: f64,
    pub t_max: f64,
    pub dt: f64,
    pub burn_in: f64,
    /// Multiplicative intensity `μ`.
    pub mu: f64,
    /// Additive intensity `σ`.
    pub sigma: f64,
    pub eigenvalues: Vec<f64>,
}

impl NoiseConfig {
    /// Power-law spectrum with `modes` terms.
    pub fn power_law(seed: u64, window: (f64, f64), dt: f64, mu: f64, sigma: f64, modes: usize, gamma: f64) -> Self {
        Self {
            seed,
            t_min: window.0,
            t_max: window.1,
            dt,
            burn_in: DEFAULT_BURN_IN,
            mu,
            sigma,
            eigenvalues: power_law_eigenvalues(modes, gamma, 1.0),
        }
    }
}

/// One sampled `ω`: the scalar motion, its OU functional and the `H`-valued
/// Wiener path, with the additive intensity `σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEnvironment {
    pub beta: BrownianPath,
    pub ou: OUPath,
    pub w: HWienerPath,
    pub sigma: f64,
}

impl NoiseEnvironment {
    /// Sample on `[t_min − burn_in, t_max]` with the basis matching `norm`.
    pub fn sample(cfg: &NoiseConfig, mesh: Mesh1D, norm: BasisNorm) -> Result<Self> {
        if !(cfg.sigma >= 0.0) {
            return Err(LabError::InvalidParameter(format!(
                "sigma must be nonnegative, got {}",
                cfg.sigma
            )));
        }
        let lo = cfg.t_min - cfg.burn_in;
        let beta = sample_brownian(cfg.seed, lo, cfg.t_max, cfg.dt)?;
        let ou = ou_stationary(&beta, cfg.mu, cfg.burn_in)?;
        let basis = dirichlet_basis(mesh, cfg.eigenvalues.len(), norm)?;
        let w = sample_trace_class_wiener(cfg.seed, &cfg.eigenvalues, &basis, (lo, cfg.t_max), cfg.dt)?;
        Ok(Self {
            beta,
            ou,
            w,
            sigma: cfg.sigma,
        })
    }

    pub fn dt(&self) -> f64 {
        self.beta.dt
    }

    pub fn mu_exponent(&self) -> f64 {
        self.ou.mu_exponent
    }

    /// Earliest time with a trusted OU value.
    pub fn t_lo(&self) -> f64 {
        self.ou.valid_from()
    }

    pub fn t_hi(&self) -> f64 {
        self.beta.t_max
    }

    pub fn mu_at(&self, t: f64) -> Result<f64> {
        self.ou.mu(t)
    }

    pub fn z_at(&self, t: f64) -> Result<f64> {
        self.ou.z(t)
    }

    /// `true` when no additive forcing reaches the equation.
    pub fn additive_is_trivial(&self) -> bool {
        self.sigma == 0.0 || self.w.is_trivial()
    }

    /// `out += σ ∫_{t0}^{t1} μ_r dW_r` as a left-point sum over noise cells.
    pub fn accumulate_forcing(&self, t0: f64, t1: f64, out: &mut [f64]) -> Result<()> {
        if self.additive_is_trivial() || t1 <= t0 {
            return Ok(());
        }
        if t0 < self.t_lo() - GRID_TOL * self.dt() {
            return Err(LabError::WindowExhausted {
                requested: t0,
                lo: self.t_lo(),
                hi: self.t_hi(),
            });
        }
        let grid = &self.beta;
        let (j0, _) = grid.locate(t0)?;
        let (j1, f1) = grid.locate(t1)?;
        if j0 == j1 {
            return self
                .w
                .accumulate_increment(t0, t1, self.sigma * self.ou.mu_values[j0], out);
        }
        let mut cursor = t0;
        let mut j = j0;
        let end_cell = if f1 == 0.0 { j1 } else { j1 + 1 };
        while j < end_cell {
            let right = grid.time(j + 1).min(t1);
            self.w
                .accumulate_increment(cursor, right, self.sigma * self.ou.mu_values[j], out)?;
            cursor = right;
            j += 1;
        }
        Ok(())
    }

    /// Keep `ω` on `[t_lo, t]` and redraw every increment after `t` from
    /// `seed`. Anything adapted to the noise agrees with the original up to `t`.
    pub fn resampled_after(&self, t: f64, seed: u64) -> Result<Self> {
        let beta = self.beta.resampled_after(t, seed, BETA_COMPONENT)?;
        let ou = ou_stationary(&beta, self.ou.mu_exponent, self.ou.burn_in)?;
        let mut w = self.w.clone();
        for (k, p) in w.mode_paths.iter_mut().enumerate() {
            *p = p.resampled_after(t, seed, mode_component(k))?;
        }
        Ok(Self {
            beta,
            ou,
            w,
            sigma: self.sigma,
        })
    }

    /// The environment of `θ_h ω`. The OU path is recomputed from the shifted
    /// `β`, so it is the same functional of the new path.
    pub fn shifted(&self, h: f64) -> Result<Self> {
        let beta = self.beta.wiener_shift(h)?;
        let ou = ou_stationary(&beta, self.ou.mu_exponent, self.ou.burn_in)?;
        Ok(Self {
            beta,
            ou,
            w: self.w.wiener_shift(h)?,
            sigma: self.sigma,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_is_pinned_and_reproducible() {
        let p = sample_brownian(1, -1.0, 1.0, 0.5).unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p.at(0.0).unwrap(), 0.0);
        let q = sample_brownian(1, -1.0, 1.0, 0.5).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn wider_window_extends_path() {
        let p = sample_brownian(9, -1.0, 1.0, 0.01).unwrap();
        let q = sample_brownian(9, -3.0, 2.0, 0.01).unwrap();
        for t in [-1.0, -0.37, 0.5, 1.0] {
            assert_eq!(p.at(t).unwrap(), q.at(t).unwrap());
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(sample_brownian(1, -1.0, 1.0, 0.0).is_err());
        assert!(sample_brownian(1, 0.5, 1.0, 0.1).is_err());
        assert!(sample_brownian(1, -1.05, 1.0, 0.1).is_err());
    }

    #[test]
    fn shift_identities() {
        let p = sample_brownian(3, -4.0, 4.0, 0.01).unwrap();
        assert_eq!(p.wiener_shift(0.0).unwrap(), p);
        let s = p.wiener_shift(0.5).unwrap();
        assert_eq!(s.at(0.0).unwrap(), 0.0);
        let two = s.wiener_shift(0.5).unwrap();
        let one = p.wiener_shift(1.0).unwrap();
        for t in [-4.0, -1.0, 0.0, 2.3, 3.0] {
            assert!((two.at(t).unwrap() - one.at(t).unwrap()).abs() < 1e-12);
        }
        assert!(p.wiener_shift(5.0).is_err());
    }

    #[test]
    fn single_mode_reduces_to_scaled_brownian() {
        let mesh = Mesh1D::new(1.0, 16).unwrap();
        let basis = dirichlet_basis(mesh, 1, BasisNorm::L2).unwrap();
        let w = sample_trace_class_wiener(5, &[1.0], &basis, (-1.0, 1.0), 0.1).unwrap();
        let wt = w.eval(0.7).unwrap();
        let bt = w.mode_paths[0].at(0.7).unwrap();
        for (a, e) in wt.values().iter().zip(basis[0].values()) {
            assert_eq!(*a, bt * e);
        }
        let zero = sample_trace_class_wiener(5, &[0.0, 0.0], &dirichlet_basis(mesh, 2, BasisNorm::L2).unwrap(), (-1.0, 1.0), 0.1).unwrap();
        assert!(zero.eval(0.5).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ou_multiplier_matches_exponential() {
        let beta = sample_brownian(2, -30.0, 5.0, 0.01).unwrap();
        let ou = ou_stationary(&beta, 0.7, DEFAULT_BURN_IN).unwrap();
        for (z, m) in ou.z_values.iter().zip(&ou.mu_values) {
            assert_eq!(*m, (-0.7 * z).exp());
        }
        let flat = ou_stationary(&beta, 0.0, DEFAULT_BURN_IN).unwrap();
        assert!(flat.mu_values.iter().all(|m| *m == 1.0));
        assert!(ou.z(-15.0).is_err());
    }

    #[test]
    fn forcing_over_aligned_cells_is_left_point_sum() {
        let mesh = Mesh1D::new(1.0, 8).unwrap();
        let cfg = NoiseConfig {
            seed: 4,
            t_min: -1.0,
            t_max: 1.0,
            dt: 0.1,
            burn_in: 1.0,
            mu: 0.8,
            sigma: 1.5,
            eigenvalues: vec![1.0, 0.5],
        };
        let env = NoiseEnvironment::sample(&cfg, mesh, BasisNorm::L2).unwrap();
        let mut got = vec![0.0; 8];
        env.accumulate_forcing(0.0, 0.3, &mut got).unwrap();
        let mut want = vec![0.0; 8];
        for j in 0..3 {
            let t0 = j as f64 * 0.1;
            let t1 = t0 + 0.1;
            let mu = env.mu_at(t0).unwrap();
            let dw = env.w.eval(t1).unwrap().sub(&env.w.eval(t0).unwrap()).unwrap();
            for (w, d) in want.iter_mut().zip(dw.values()) {
                *w += 1.5 * mu * d;
            }
        }
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
