//! Discretized Gelfand triples `V ⊆ H ⊆ V*` and the three drift families.
//!
//! | kind       | `‖v‖_H²`               | `‖v‖_V^α`              |
//! |------------|------------------------|------------------------|
//! | `PLaplace` | `h Σ v_i²`             | `h Σ_edges |∇v|^α`     |
//! | `Rde`      | `h Σ v_i²`             | `h Σ_edges |∇v|²`      |
//! | `Pme`      | `h vᵀ(−Δ_h)^{−1} v`    | `h Σ |v_i|^α`          |
//!
//! The duality pairing is the `H` inner product throughout. Every operator has
//! a tridiagonal Jacobian, which the stepper exploits.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{Field, Mesh1D};
use crate::linalg::{apply_laplacian, dirichlet_eigenvalue, NegLaplacianSolver, Tridiagonal};

/// Regularization of the degenerate diffusivity inside Jacobians only.
pub const JACOBIAN_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripleKind {
    PLaplace,
    Pme,
    Rde,
}

impl TripleKind {
    pub fn name(&self) -> &'static str {
        match self {
            TripleKind::PLaplace => "plaplace",
            TripleKind::Pme => "pme",
            TripleKind::Rde => "rde",
        }
    }
}

impl std::str::FromStr for TripleKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plaplace" | "p-laplace" | "p_laplace" => Ok(TripleKind::PLaplace),
            "pme" | "porous" => Ok(TripleKind::Pme),
            "rde" | "reaction-diffusion" => Ok(TripleKind::Rde),
            other => Err(LabError::InvalidParameter(format!("unknown drift kind '{other}'"))),
        }
    }
}

#[inline]
pub(crate) fn phi(r: f64, alpha: f64) -> f64 {
    if alpha == 2.0 {
        r
    } else if alpha == 3.0 {
        r.abs() * r
    } else if alpha == 4.0 {
        r * r * r
    } else {
        r.abs().powf(alpha - 2.0) * r
    }
}

/// `|r|^{α−2}`
#[inline]
fn phi_weight(r: f64, alpha: f64) -> f64 {
    if alpha == 2.0 {
        1.0
    } else if alpha == 3.0 {
        r.abs()
    } else if alpha == 4.0 {
        r * r
    } else {
        r.abs().powf(alpha - 2.0)
    }
}

/// `(α−1)(r² + ε²)^{(α−2)/2}`
#[inline]
fn phi_prime_reg(r: f64, alpha: f64) -> f64 {
    if alpha == 2.0 {
        return 1.0;
    }
    let s = r * r + JACOBIAN_EPS * JACOBIAN_EPS;
    let w = if alpha == 3.0 {
        s.sqrt()
    } else if alpha == 4.0 {
        s
    } else {
        s.powf(0.5 * (alpha - 2.0))
    };
    (alpha - 1.0) * w
}

#[inline]
fn edge_gradient(v: &[f64], e: usize, h: f64) -> f64 {
    let n = v.len();
    let right = if e < n { v[e] } else { 0.0 };
    let left = if e > 0 { v[e - 1] } else { 0.0 };
    (right - left) / h
}

/// `out = a · div_h Φ(∇_h v)`; flux differencing on the `n + 1` cell edges.
fn p_laplace_into(v: &[f64], h: f64, alpha: f64, a: f64, out: &mut [f64]) {
    let n = v.len();
    let mut left_flux = a * phi(edge_gradient(v, 0, h), alpha);
    for i in 0..n {
        let right_flux = a * phi(edge_gradient(v, i + 1, h), alpha);
        out[i] = (right_flux - left_flux) / h;
        left_flux = right_flux;
    }
}

/// Tridiagonal matrix of `v ↦ div_h(d_e ∇_h v)` with edge weights `weight(g_e) · a`.
fn edge_weighted_matrix(v: &[f64], h: f64, a: f64, weight: impl Fn(f64) -> f64, jac: &mut Tridiagonal) {
    let n = v.len();
    let inv_h2 = 1.0 / (h * h);
    let mut d_left = a * weight(edge_gradient(v, 0, h)) * inv_h2;
    for i in 0..n {
        let d_right = a * weight(edge_gradient(v, i + 1, h)) * inv_h2;
        jac.diag[i] = -(d_left + d_right);
        jac.lower[i] = if i > 0 { d_left } else { 0.0 };
        jac.upper[i] = if i + 1 < n { d_right } else { 0.0 };
        d_left = d_right;
    }
}

/// Tridiagonal matrix of `w ↦ a Δ_h(diag(d) w)`.
fn laplacian_times_diag(d: impl Fn(usize) -> f64, n: usize, h: f64, a: f64, jac: &mut Tridiagonal) {
    let inv_h2 = a / (h * h);
    for i in 0..n {
        jac.diag[i] = -2.0 * inv_h2 * d(i);
        jac.lower[i] = if i > 0 { inv_h2 * d(i - 1) } else { 0.0 };
        jac.upper[i] = if i + 1 < n { inv_h2 * d(i + 1) } else { 0.0 };
    }
}

/// Discrete Gelfand triple with its cached `−Δ_h` factorization.
#[derive(Debug, Clone)]
pub struct TripleSpec {
    pub kind: TripleKind,
    pub alpha: f64,
    pub mesh: Mesh1D,
    /// `λ` with `‖v‖_H² ≤ λ ‖v‖_V²`.
    pub embedding_lambda: f64,
    lap: Arc<NegLaplacianSolver>,
}

impl TripleSpec {
    pub fn new(kind: TripleKind, alpha: f64, mesh: Mesh1D) -> Result<Self> {
        if !(alpha >= 2.0) || !alpha.is_finite() {
            return Err(LabError::InvalidParameter(format!("alpha must be >= 2, got {alpha}")));
        }
        if kind == TripleKind::Rde && alpha != 2.0 {
            return Err(LabError::InvalidParameter(format!(
                "the reaction-diffusion triple has alpha = 2, got {alpha}"
            )));
        }
        let lambda1 = dirichlet_eigenvalue(1, mesh.n(), mesh.length);
        // Poincaré on the first eigenvalue, then Hölder from the 2-norm to the
        // α-norm over a set of measure L.
        let embedding_lambda = mesh.length.powf((alpha - 2.0) / alpha) / lambda1;
        Ok(Self {
            kind,
            alpha,
            mesh,
            embedding_lambda,
            lap: Arc::new(NegLaplacianSolver::new(mesh.n(), mesh.spacing())),
        })
    }

    pub fn n(&self) -> usize {
        self.mesh.n()
    }

    pub fn h(&self) -> f64 {
        self.mesh.spacing()
    }

    pub fn lambda1(&self) -> f64 {
        dirichlet_eigenvalue(1, self.mesh.n(), self.mesh.length)
    }

    /// Conjugate exponent `α' = α / (α − 1)`.
    pub fn alpha_conj(&self) -> f64 {
        self.alpha / (self.alpha - 1.0)
    }

    pub fn neg_laplacian(&self) -> &NegLaplacianSolver {
        &self.lap
    }

    fn check(&self, v: &Field) -> Result<()> {
        self.mesh.ensure_same(v.mesh())
    }

    // ---- raw slice versions; callers guarantee the length ----

    pub fn inner_raw(&self, a: &[f64], b: &[f64]) -> f64 {
        let h = self.h();
        match self.kind {
            TripleKind::PLaplace | TripleKind::Rde => h * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>(),
            TripleKind::Pme => {
                let s = self.lap.solve(b);
                h * a.iter().zip(&s).map(|(x, y)| x * y).sum::<f64>()
            }
        }
    }

    pub fn h_norm_sq_raw(&self, v: &[f64]) -> f64 {
        self.inner_raw(v, v).max(0.0)
    }

    pub fn h_norm_raw(&self, v: &[f64]) -> f64 {
        self.h_norm_sq_raw(v).sqrt()
    }

    pub fn h_dist_raw(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.h_norm_raw(&d)
    }

    /// `‖v‖_V^α`
    pub fn v_norm_pow_raw(&self, v: &[f64]) -> f64 {
        let h = self.h();
        let a = self.alpha;
        match self.kind {
            TripleKind::PLaplace | TripleKind::Rde => {
                h * (0..=v.len()).map(|e| edge_gradient(v, e, h).abs().powf(a)).sum::<f64>()
            }
            TripleKind::Pme => h * v.iter().map(|x| x.abs().powf(a)).sum::<f64>(),
        }
    }

    pub fn v_norm_raw(&self, v: &[f64]) -> f64 {
        self.v_norm_pow_raw(v).powf(1.0 / self.alpha)
    }

    /// `‖g‖_{V*} = sup ⟨g, v⟩_H / ‖v‖_V`, computed exactly for each kind.
    pub fn dual_norm_raw(&self, g: &[f64]) -> f64 {
        let h = self.h();
        match self.kind {
            TripleKind::Rde => {
                let s = self.lap.solve(g);
                (h * g.iter().zip(&s).map(|(x, y)| x * y).sum::<f64>()).max(0.0).sqrt()
            }
            TripleKind::Pme => {
                let p = self.alpha_conj();
                let s = self.lap.solve(g);
                (h * s.iter().map(|x| x.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
            }
            TripleKind::PLaplace => {
                // ⟨g, v⟩ = h Σ_e T_e ∇v_e with the tail sums T_e; the gradients
                // of grid functions are exactly the mean-zero edge vectors, so
                // the norm is the distance of T to constants in ℓ^{α'}.
                let n = g.len();
                let p = self.alpha_conj();
                let mut tail = vec![0.0; n + 1];
                for e in (0..n).rev() {
                    tail[e] = tail[e + 1] + h * g[e];
                }
                let cost = |c: f64| -> f64 { h * tail.iter().map(|t| (t + c).abs().powf(p)).sum::<f64>() };
                let (mut lo, mut hi) = tail
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(-t), b.max(-t)));
                if self.alpha == 2.0 {
                    let mean = tail.iter().sum::<f64>() / (n + 1) as f64;
                    return cost(-mean).max(0.0).sqrt();
                }
                for _ in 0..200 {
                    let m1 = lo + (hi - lo) / 3.0;
                    let m2 = hi - (hi - lo) / 3.0;
                    if cost(m1) <= cost(m2) {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                    if hi - lo <= 1e-15 * (1.0 + lo.abs()) {
                        break;
                    }
                }
                cost(0.5 * (lo + hi)).powf(1.0 / p)
            }
        }
    }

    // ---- Field API ----

    pub fn h_norm(&self, v: &Field) -> Result<f64> {
        self.check(v)?;
        Ok(self.h_norm_raw(v.values()))
    }

    pub fn v_norm(&self, v: &Field) -> Result<f64> {
        self.check(v)?;
        Ok(self.v_norm_raw(v.values()))
    }

    pub fn dual_norm(&self, g: &Field) -> Result<f64> {
        self.check(g)?;
        Ok(self.dual_norm_raw(g.values()))
    }

    pub fn dual_pair(&self, w: &Field, v: &Field) -> Result<f64> {
        self.check(w)?;
        self.check(v)?;
        Ok(self.inner_raw(w.values(), v.values()))
    }

    pub fn h_distance(&self, a: &Field, b: &Field) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.h_dist_raw(a.values(), b.values()))
    }

    // ---- auxiliary operator M ----

    /// `out = M(v)`: the p-Laplacian, the Laplacian, or `Δ|v|^{α−2}v`.
    pub fn aux_m_into(&self, v: &[f64], out: &mut [f64]) {
        let h = self.h();
        match self.kind {
            TripleKind::PLaplace => p_laplace_into(v, h, self.alpha, 1.0, out),
            TripleKind::Rde => apply_laplacian(v, h, out),
            TripleKind::Pme => {
                let w: Vec<f64> = v.iter().map(|x| phi(*x, self.alpha)).collect();
                apply_laplacian(&w, h, out);
            }
        }
    }

    pub fn aux_m_jacobian(&self, v: &[f64], jac: &mut Tridiagonal) {
        let h = self.h();
        let a = self.alpha;
        match self.kind {
            TripleKind::PLaplace | TripleKind::Rde => {
                edge_weighted_matrix(v, h, 1.0, |g| phi_prime_reg(g, a), jac)
            }
            TripleKind::Pme => laplacian_times_diag(|i| phi_prime_reg(v[i], a), v.len(), h, 1.0, jac),
        }
    }

    /// Lagged-diffusivity split `M(w) ≈ P(v) w`.
    pub fn aux_m_picard(&self, v: &[f64], mat: &mut Tridiagonal) -> bool {
        let h = self.h();
        let a = self.alpha;
        match self.kind {
            TripleKind::PLaplace | TripleKind::Rde => edge_weighted_matrix(v, h, 1.0, |g| phi_weight(g, a), mat),
            TripleKind::Pme => laplacian_times_diag(|i| phi_weight(v[i], a), v.len(), h, 1.0, mat),
        }
        true
    }
}

/// `M(v)` for the triple.
pub fn aux_monotone_m(v: &Field, triple: &TripleSpec) -> Result<Field> {
    triple.check(v)?;
    let mut out = vec![0.0; v.len()];
    triple.aux_m_into(v.values(), &mut out);
    Ok(Field::from_raw(triple.mesh, out))
}

/// Pointwise reaction `G(t, u)`; all variants satisfy `|G(u)| ≤ |slope| |u|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Reaction {
    None,
    Linear { slope: f64 },
    Tanh { slope: f64 },
    Sin { slope: f64 },
}

impl Reaction {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Reaction::None => 0.0,
            Reaction::Linear { slope } => slope * u,
            Reaction::Tanh { slope } => slope * u.tanh(),
            Reaction::Sin { slope } => slope * u.sin(),
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            Reaction::None => 0.0,
            Reaction::Linear { slope } => slope,
            Reaction::Tanh { slope } => slope / u.cosh().powi(2),
            Reaction::Sin { slope } => slope * u.cos(),
        }
    }

    pub fn slope(&self) -> f64 {
        match *self {
            Reaction::None => 0.0,
            Reaction::Linear { slope } | Reaction::Tanh { slope } | Reaction::Sin { slope } => slope,
        }
    }

    /// `C` in `|G(u)|² ≤ C |u|² + f` (here `f = 0`).
    pub fn growth_constant(&self) -> f64 {
        self.slope() * self.slope()
    }

    /// One-sided Lipschitz constant `λ` with `(G(u) − G(v))(u − v) ≤ λ |u − v|²`.
    pub fn one_sided_lipschitz(&self) -> f64 {
        match *self {
            Reaction::None => 0.0,
            Reaction::Linear { slope } | Reaction::Tanh { slope } => slope.max(0.0),
            Reaction::Sin { slope } => slope.abs(),
        }
    }

    /// Nondecreasing reactions keep the semi-discrete flow order preserving.
    pub fn is_monotone(&self) -> bool {
        match *self {
            Reaction::None => true,
            Reaction::Linear { slope } | Reaction::Tanh { slope } => slope >= 0.0,
            Reaction::Sin { slope } => slope == 0.0,
        }
    }
}

/// Spatially constant forcing `g(t) = amplitude · sin(ω t)`; makes the drift
/// time dependent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeForcing {
    pub amplitude: f64,
    pub omega: f64,
}

impl TimeForcing {
    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t).sin()
    }
}

/// User-facing drift parameters; serializable into run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    pub kind: TripleKind,
    pub alpha: f64,
    pub eta: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Multiplier of the principal part; 0 gives the zero drift.
    pub diffusion: f64,
    pub reaction: Reaction,
    pub forcing: Option<TimeForcing>,
}

impl DriftParams {
    pub fn p_laplace(alpha: f64, eta: f64) -> Self {
        Self {
            kind: TripleKind::PLaplace,
            alpha,
            eta,
            mu: 0.0,
            sigma: 0.0,
            diffusion: 1.0,
            reaction: Reaction::None,
            forcing: None,
        }
    }

    pub fn pme(alpha: f64, eta: f64) -> Self {
        Self {
            kind: TripleKind::Pme,
            ..Self::p_laplace(alpha, eta)
        }
    }

    pub fn rde(reaction: Reaction) -> Self {
        Self {
            kind: TripleKind::Rde,
            reaction,
            ..Self::p_laplace(2.0, 0.0)
        }
    }

    pub fn with_noise(mut self, mu: f64, sigma: f64) -> Self {
        self.mu = mu;
        self.sigma = sigma;
        self
    }
}

/// A drift operator with structural constants valid on its mesh.
///
/// With `a` the diffusion, `η⁺ = max(η, 0)` and `λ` the embedding constant:
/// coercivity `c = 2a`, `C = 2η⁺` (`2√C_G` for reactions), one extra unit of
/// `C` and `f = |g|²‖1‖_H²` when time forcing is present; growth follows from
/// `‖A v‖_* ≤ a‖v‖_V^{α−1} + |η| λ ‖v‖_V + |g| ‖1‖_*`.
#[derive(Debug, Clone)]
pub struct DriftSpec {
    pub triple: TripleSpec,
    pub params: DriftParams,
    pub c: f64,
    pub big_c: f64,
    /// Constant inhomogeneity `f` in the coercivity bound.
    pub f: f64,
    pub growth_c: f64,
    pub growth_f: f64,
    /// Guaranteed strong-monotonicity coefficient; 0 when not available.
    pub lambda_sm: f64,
}

impl DriftSpec {
    pub fn new(params: DriftParams, mesh: Mesh1D) -> Result<Self> {
        let triple = TripleSpec::new(params.kind, params.alpha, mesh)?;
        Self::with_triple(params, triple)
    }

    pub fn with_triple(params: DriftParams, triple: TripleSpec) -> Result<Self> {
        if triple.kind != params.kind || triple.alpha != params.alpha {
            return Err(LabError::KindMismatch {
                expected: params.kind.name().into(),
                found: triple.kind.name().into(),
            });
        }
        for (name, v) in [("eta", params.eta), ("mu", params.mu), ("diffusion", params.diffusion)] {
            if !v.is_finite() {
                return Err(LabError::InvalidParameter(format!("{name} must be finite")));
            }
        }
        if !(params.diffusion >= 0.0) {
            return Err(LabError::InvalidParameter("diffusion must be nonnegative".into()));
        }
        if !(params.sigma >= 0.0) {
            return Err(LabError::InvalidParameter("sigma must be nonnegative".into()));
        }
        if params.kind != TripleKind::Rde && params.reaction != Reaction::None {
            return Err(LabError::InvalidParameter("reaction terms need the rde kind".into()));
        }
        let a = params.diffusion;
        let alpha = params.alpha;
        let ap = triple.alpha_conj();
        let lam = triple.embedding_lambda;
        let ones = vec![1.0; triple.n()];
        let (forcing_h2, forcing_dual) = match params.forcing {
            Some(g) => (
                g.amplitude * g.amplitude * triple.h_norm_sq_raw(&ones),
                g.amplitude.abs() * triple.dual_norm_raw(&ones),
            ),
            None => (0.0, 0.0),
        };
        let forced = params.forcing.is_some();
        let terms: f64 = if forced { 3.0 } else { 2.0 };
        let k = terms.powf(ap - 1.0);
        let c = 2.0 * a;
        let (big_c, growth_c, growth_f, lambda_sm) = match params.kind {
            TripleKind::PLaplace | TripleKind::Pme => {
                let eta_l = (params.eta.abs() * lam).powf(ap);
                let lambda_sm = if alpha > 2.0 && params.eta <= 0.0 {
                    2.0 * a * 2f64.powf(2.0 - alpha) * lam.powf(-alpha / 2.0)
                } else {
                    0.0
                };
                (
                    2.0 * params.eta.max(0.0),
                    k * (a.powf(ap) + eta_l),
                    k * (eta_l + forcing_dual.powf(ap)),
                    lambda_sm,
                )
            }
            TripleKind::Rde => {
                let cr = params.reaction.growth_constant();
                let coercive = 2.0 * cr.sqrt();
                let monotone = 2.0 * params.reaction.one_sided_lipschitz();
                (
                    coercive.max(monotone),
                    k * (a * a + lam * lam * cr),
                    k * forcing_dual * forcing_dual,
                    0.0,
                )
            }
        };
        Ok(Self {
            triple,
            params,
            c,
            big_c: big_c + if forced { 1.0 } else { 0.0 },
            f: forcing_h2,
            growth_c,
            growth_f,
            lambda_sm,
        })
    }

    pub fn kind(&self) -> TripleKind {
        self.params.kind
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }

    pub fn is_autonomous(&self) -> bool {
        self.params.forcing.is_none()
    }

    fn forcing_value(&self, t: f64) -> f64 {
        self.params.forcing.map_or(0.0, |g| g.value(t))
    }

    /// `out = A(t, v)`.
    pub fn apply_into(&self, t: f64, v: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let h = self.triple.h();
        match p.kind {
            TripleKind::PLaplace => p_laplace_into(v, h, p.alpha, p.diffusion, out),
            TripleKind::Pme => {
                let w: Vec<f64> = v.iter().map(|x| p.diffusion * phi(*x, p.alpha)).collect();
                apply_laplacian(&w, h, out);
            }
            TripleKind::Rde => {
                apply_laplacian(v, h, out);
                for (o, x) in out.iter_mut().zip(v) {
                    *o = p.diffusion * *o + p.reaction.eval(*x);
                }
            }
        }
        if p.eta != 0.0 && p.kind != TripleKind::Rde {
            for (o, x) in out.iter_mut().zip(v) {
                *o += p.eta * x;
            }
        }
        let g = self.forcing_value(t);
        if g != 0.0 {
            out.iter_mut().for_each(|o| *o += g);
        }
    }

    /// Jacobian of `A(t, ·)` at `v`, with the regularized diffusivity.
    pub fn jacobian(&self, _t: f64, v: &[f64], jac: &mut Tridiagonal) {
        let p = &self.params;
        let h = self.triple.h();
        let a = p.alpha;
        match p.kind {
            TripleKind::PLaplace => edge_weighted_matrix(v, h, p.diffusion, |g| phi_prime_reg(g, a), jac),
            TripleKind::Pme => laplacian_times_diag(|i| phi_prime_reg(v[i], a), v.len(), h, p.diffusion, jac),
            TripleKind::Rde => {
                edge_weighted_matrix(v, h, p.diffusion, |_| 1.0, jac);
                for (d, x) in jac.diag.iter_mut().zip(v) {
                    *d += p.reaction.derivative(*x);
                }
            }
        }
        if p.eta != 0.0 && p.kind != TripleKind::Rde {
            jac.diag.iter_mut().for_each(|d| *d += p.eta);
        }
    }

    /// Lagged-diffusivity split `A(t, w) ≈ P w + b` frozen at `v`. Only the
    /// degenerate kinds provide one.
    pub fn picard_split(&self, t: f64, v: &[f64], mat: &mut Tridiagonal, constant: &mut [f64]) -> bool {
        let p = &self.params;
        let h = self.triple.h();
        let a = p.alpha;
        match p.kind {
            TripleKind::PLaplace => edge_weighted_matrix(v, h, p.diffusion, |g| phi_weight(g, a), mat),
            TripleKind::Pme => laplacian_times_diag(|i| phi_weight(v[i], a), v.len(), h, p.diffusion, mat),
            TripleKind::Rde => return false,
        }
        if p.eta != 0.0 {
            mat.diag.iter_mut().for_each(|d| *d += p.eta);
        }
        let g = self.forcing_value(t);
        constant.iter_mut().for_each(|c| *c = g);
        true
    }

    pub fn apply(&self, t: f64, v: &Field) -> Result<Field> {
        self.triple.check(v)?;
        let mut out = vec![0.0; v.len()];
        self.apply_into(t, v.values(), &mut out);
        Ok(Field::from_raw(self.triple.mesh, out))
    }

    fn expect_kind(&self, kind: TripleKind) -> Result<()> {
        if self.params.kind != kind {
            return Err(LabError::KindMismatch {
                expected: kind.name().into(),
                found: self.params.kind.name().into(),
            });
        }
        Ok(())
    }
}

/// `div(|∇v|^{α−2}∇v) + ηv` (plus time forcing at `t = 0`).
pub fn p_laplace_apply(v: &Field, drift: &DriftSpec) -> Result<Field> {
    drift.expect_kind(TripleKind::PLaplace)?;
    drift.apply(0.0, v)
}

/// `ΔΦ(v) + ηv` in the `H^{−1}` geometry.
pub fn pme_apply(v: &Field, drift: &DriftSpec) -> Result<Field> {
    drift.expect_kind(TripleKind::Pme)?;
    drift.apply(0.0, v)
}

/// `Δv + G(t, v)`.
pub fn rde_apply(v: &Field, t: f64, drift: &DriftSpec) -> Result<Field> {
    drift.expect_kind(TripleKind::Rde)?;
    drift.apply(t, v)
}

/// Random probe field: either white noise or a few smooth modes, at a scale
/// drawn log-uniformly from `[1e−2, 1e1]`.
pub fn probe_field(rng: &mut impl Rng, mesh: Mesh1D) -> Vec<f64> {
    let n = mesh.n();
    let scale = 10f64.powf(rng.random_range(-2.0..1.0));
    if rng.random_bool(0.5) {
        (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
    } else {
        let modes: Vec<(f64, f64)> = (1..=4)
            .map(|k| (k as f64, rng.sample::<f64, _>(StandardNormal)))
            .collect();
        (0..n)
            .map(|i| {
                let x = mesh.node(i) / mesh.length;
                scale
                    * modes
                        .iter()
                        .map(|(k, c)| c * (k * std::f64::consts::PI * x).sin())
                        .sum::<f64>()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flag {
    Pass,
    Fail,
    NotApplicable,
}

impl Flag {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Flag::Pass
        } else {
            Flag::Fail
        }
    }
}

/// Empirical worst-case constants of a drift over random probes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub samples: usize,
    pub hemicontinuity_defect: f64,
    pub hemicontinuity: Flag,
    /// Largest `2⟨Au − Av, u − v⟩ / ‖u − v‖_H²`.
    pub monotonicity_c_hat: f64,
    pub monotonicity: Flag,
    /// Smallest `(C‖v‖_H² + f − 2⟨Av, v⟩) / ‖v‖_V^α`.
    pub coercivity_c_hat: f64,
    pub coercivity: Flag,
    /// Largest `‖Av‖_*^{α'} / (C_G ‖v‖_V^α + f_G)`.
    pub growth_ratio: f64,
    pub growth: Flag,
    /// Smallest `−2⟨Au − Av, u − v⟩ / ‖u − v‖_H^α`.
    pub lambda_sm_measured: f64,
    pub strong_monotonicity: Flag,
    pub reaction_bound: Flag,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        [
            self.hemicontinuity,
            self.monotonicity,
            self.coercivity,
            self.growth,
            self.strong_monotonicity,
            self.reaction_bound,
        ]
        .iter()
        .all(|f| *f != Flag::Fail)
    }
}

/// Probe (A1)–(A4), (A2') and the reaction bound with `samples` random fields.
pub fn check_assumptions(drift: &DriftSpec, samples: usize, seed: u64) -> AssumptionReport {
    let samples = samples.max(1);
    let tr = &drift.triple;
    let mesh = tr.mesh;
    let n = tr.n();
    let alpha = drift.alpha();
    let ap = tr.alpha_conj();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let period = drift
        .params
        .forcing
        .map_or(1.0, |g| if g.omega != 0.0 { 2.0 * std::f64::consts::PI / g.omega.abs() } else { 1.0 });

    let mut au = vec![0.0; n];
    let mut av = vec![0.0; n];
    let mut hemi = 0.0f64;
    let mut c_big_hat = f64::NEG_INFINITY;
    let mut c_hat = f64::INFINITY;
    let mut growth = 0.0f64;
    let mut lsm = f64::INFINITY;
    for s in 0..samples {
        let t = rng.random_range(0.0..period);
        let u = probe_field(&mut rng, mesh);
        // Every third pair is antisymmetric, where the flux inequality is sharp.
        let v: Vec<f64> = if s % 3 == 0 {
            u.iter().map(|x| -x).collect()
        } else {
            probe_field(&mut rng, mesh)
        };

        drift.apply_into(t, &u, &mut au);
        drift.apply_into(t, &v, &mut av);
        let diff: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
        let dd: Vec<f64> = au.iter().zip(&av).map(|(a, b)| a - b).collect();
        let pair = 2.0 * tr.inner_raw(&dd, &diff);
        let h2 = tr.h_norm_sq_raw(&diff);
        if h2 > 0.0 {
            c_big_hat = c_big_hat.max(pair / h2);
            lsm = lsm.min(-pair / h2.powf(alpha / 2.0));
        }

        let vpow = tr.v_norm_pow_raw(&u);
        if vpow > 0.0 {
            let lhs = 2.0 * tr.inner_raw(&au, &u);
            let ratio = (drift.big_c * tr.h_norm_sq_raw(&u) + drift.f - lhs) / vpow;
            c_hat = c_hat.min(ratio);
            let denom = drift.growth_c * vpow + drift.growth_f;
            let num = tr.dual_norm_raw(&au).powf(ap);
            let r = if denom > 0.0 {
                num / denom
            } else if num > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            growth = growth.max(r);
        }

        // Hemicontinuity: s ↦ ⟨A(u + s v), w⟩ near s = 0.
        let w = probe_field(&mut rng, mesh);
        let base = tr.inner_raw(&au, &w);
        let mut moved = [0.0; 2];
        for (m, step) in moved.iter_mut().zip([1e-4, 1e-8]) {
            let shifted: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + step * b).collect();
            drift.apply_into(t, &shifted, &mut av);
            *m = (tr.inner_raw(&av, &w) - base).abs();
        }
        // Continuity: shrinking the step by 1e4 must shrink the change.
        hemi = hemi.max(moved[1] / (moved[0] + 1e-12 * (1.0 + base.abs())));
    }

    let tol = 1e-9;
    let monotonicity = Flag::from_bool(c_big_hat <= drift.big_c + tol * (1.0 + drift.big_c.abs()));
    let coercivity = Flag::from_bool(c_hat >= drift.c * (1.0 - tol) - tol);
    let strong_monotonicity = if drift.lambda_sm > 0.0 {
        Flag::from_bool(lsm >= drift.lambda_sm * (1.0 - tol))
    } else {
        Flag::NotApplicable
    };
    let reaction_bound = if drift.kind() == TripleKind::Rde {
        Flag::from_bool(drift.params.reaction.growth_constant().sqrt() < drift.params.diffusion * tr.lambda1())
    } else {
        Flag::NotApplicable
    };
    AssumptionReport {
        samples,
        hemicontinuity_defect: hemi,
        hemicontinuity: Flag::from_bool(hemi < 1e-2),
        monotonicity_c_hat: c_big_hat,
        monotonicity,
        coercivity_c_hat: c_hat,
        coercivity,
        growth_ratio: growth,
        growth: Flag::from_bool(growth <= 1.0 + tol),
        lambda_sm_measured: lsm,
        strong_monotonicity,
        reaction_bound,
    }
}

/// Smallest observed `−2⟨M u − M v, u − v⟩ / ‖u − v‖_V^α`. Antisymmetric pairs
/// are included, which attain the sharp constant `2^{3−α}` for the flux
/// nonlinearity.
pub fn measure_m_constant(triple: &TripleSpec, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = triple.n();
    let mut mu = vec![0.0; n];
    let mut mv = vec![0.0; n];
    let mut best = f64::INFINITY;
    for s in 0..samples.max(1) {
        let u = probe_field(&mut rng, triple.mesh);
        let v: Vec<f64> = if s % 2 == 0 {
            u.iter().map(|x| -x).collect()
        } else {
            probe_field(&mut rng, triple.mesh)
        };
        triple.aux_m_into(&u, &mut mu);
        triple.aux_m_into(&v, &mut mv);
        let diff: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
        let dm: Vec<f64> = mu.iter().zip(&mv).map(|(a, b)| a - b).collect();
        let vp = triple.v_norm_pow_raw(&diff);
        if vp > 0.0 {
            best = best.min(-2.0 * triple.inner_raw(&dm, &diff) / vp);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dirichlet_eigenvector;

    fn mesh(n: usize) -> Mesh1D {
        Mesh1D::new(1.0, n).unwrap()
    }

    #[test]
    fn zero_field_has_zero_norms() {
        for kind in [TripleKind::PLaplace, TripleKind::Pme] {
            let tr = TripleSpec::new(kind, 3.0, mesh(10)).unwrap();
            let z = Field::zeros(tr.mesh);
            assert_eq!(tr.h_norm(&z).unwrap(), 0.0);
            assert_eq!(tr.v_norm(&z).unwrap(), 0.0);
            assert_eq!(tr.dual_norm(&z).unwrap(), 0.0);
        }
    }

    #[test]
    fn first_eigenvector_rayleigh_quotient() {
        let m = Mesh1D::new(2.0, 200).unwrap();
        let tr = TripleSpec::new(TripleKind::PLaplace, 2.0, m).unwrap();
        let e = Field::from_raw(m, dirichlet_eigenvector(1, 200, 2.0));
        let q = tr.v_norm(&e).unwrap().powi(2) / tr.h_norm(&e).unwrap().powi(2);
        let want = std::f64::consts::PI.powi(2) / 4.0;
        assert!((q / want - 1.0).abs() < 0.02);
    }

    #[test]
    fn p_laplace_at_two_is_the_laplacian() {
        let m = mesh(30);
        let drift = DriftSpec::new(DriftParams::p_laplace(2.0, 0.0), m).unwrap();
        let v = Field::from_fn(m, |x| (3.0 * x).sin() + x * x);
        let a = p_laplace_apply(&v, &drift).unwrap();
        let mut want = vec![0.0; 30];
        apply_laplacian(v.values(), m.spacing(), &mut want);
        for (x, y) in a.values().iter().zip(&want) {
            assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn plaplace_dual_norm_at_two_matches_h_minus_one() {
        let m = mesh(25);
        let pl = TripleSpec::new(TripleKind::PLaplace, 2.0, m).unwrap();
        let rd = TripleSpec::new(TripleKind::Rde, 2.0, m).unwrap();
        let g: Vec<f64> = (0..25).map(|i| ((i * 7 % 5) as f64) - 1.7).collect();
        let a = pl.dual_norm_raw(&g);
        let b = rd.dual_norm_raw(&g);
        assert!((a - b).abs() < 1e-10 * b);
    }

    #[test]
    fn kind_mismatch_is_reported() {
        let m = mesh(8);
        let drift = DriftSpec::new(DriftParams::pme(3.0, 0.0), m).unwrap();
        let v = Field::zeros(m);
        assert!(matches!(p_laplace_apply(&v, &drift), Err(LabError::KindMismatch { .. })));
        assert!(pme_apply(&v, &drift).is_ok());
    }

    #[test]
    fn rde_eigenvector_and_riesz_map() {
        let m = mesh(40);
        let drift = DriftSpec::new(DriftParams::rde(Reaction::None), m).unwrap();
        let e = Field::from_raw(m, dirichlet_eigenvector(3, 40, 1.0));
        let lam = dirichlet_eigenvalue(3, 40, 1.0);
        let out = rde_apply(&e, 0.0, &drift).unwrap();
        for (a, b) in out.values().iter().zip(e.values()) {
            assert!((a + lam * b).abs() < 1e-8 * lam);
        }
        let mm = aux_monotone_m(&e, &drift.triple).unwrap();
        assert_eq!(mm.values(), {
            let mut l = vec![0.0; 40];
            apply_laplacian(e.values(), m.spacing(), &mut l);
            l
        }
        .as_slice());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = mesh(12);
        for params in [
            DriftParams::p_laplace(3.0, -0.5),
            DriftParams::p_laplace(4.0, 0.3),
            DriftParams::pme(3.0, 0.2),
            DriftParams::rde(Reaction::Tanh { slope: 2.0 }),
        ] {
            let drift = DriftSpec::new(params, m).unwrap();
            let v: Vec<f64> = (0..12).map(|i| ((i as f64) * 0.9).sin() + 0.2).collect();
            let mut jac = Tridiagonal::zeros(12);
            drift.jacobian(0.0, &v, &mut jac);
            let mut base = vec![0.0; 12];
            drift.apply_into(0.0, &v, &mut base);
            for j in 0..12 {
                let mut vp = v.clone();
                let eps = 1e-6;
                vp[j] += eps;
                let mut out = vec![0.0; 12];
                drift.apply_into(0.0, &vp, &mut out);
                for i in 0..12 {
                    let fd = (out[i] - base[i]) / eps;
                    let exact = if i == j {
                        jac.diag[i]
                    } else if j + 1 == i {
                        jac.lower[i]
                    } else if i + 1 == j {
                        jac.upper[i]
                    } else {
                        0.0
                    };
                    assert!((fd - exact).abs() < 1e-3 * (1.0 + exact.abs()), "{fd} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn checker_accepts_declared_constants() {
        let m = mesh(20);
        for params in [
            DriftParams::p_laplace(3.0, 0.0),
            DriftParams::p_laplace(4.0, 1.5),
            DriftParams::pme(3.0, -1.0),
            DriftParams::rde(Reaction::Sin { slope: 3.0 }),
        ] {
            let drift = DriftSpec::new(params.clone(), m).unwrap();
            let rep = check_assumptions(&drift, 300, 11);
            assert!(rep.all_pass(), "{params:?}: {rep:?}");
        }
        let mut forced = DriftParams::p_laplace(3.0, 0.0);
        forced.forcing = Some(TimeForcing { amplitude: 2.0, omega: 1.0 });
        let rep = check_assumptions(&DriftSpec::new(forced, m).unwrap(), 300, 12);
        assert!(rep.all_pass(), "{rep:?}");
    }

    #[test]
    fn checker_flags_excessive_reaction() {
        let m = mesh(20);
        let steep = DriftSpec::new(DriftParams::rde(Reaction::Linear { slope: 15.0 }), m).unwrap();
        let rep = check_assumptions(&steep, 100, 3);
        assert_eq!(rep.reaction_bound, Flag::Fail);
    }

    #[test]
    fn m_constant_is_sharp_for_flux_nonlinearity() {
        let tr = TripleSpec::new(TripleKind::PLaplace, 3.0, mesh(16)).unwrap();
        let c = measure_m_constant(&tr, 50, 1);
        assert!((c - 1.0).abs() < 1e-9, "{c}");
        let rd = TripleSpec::new(TripleKind::Rde, 2.0, mesh(16)).unwrap();
        assert!((measure_m_constant(&rd, 50, 1) - 2.0).abs() < 1e-9);
    }
}
