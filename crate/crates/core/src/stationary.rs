//! Strictly stationary solutions of `du = M(u) dt + σ μ_t dW_t` by pullback.
//!
//! Starts recede as `s_n = t_eval_min − 2^n T₀`, always from the zero datum,
//! and the last trajectory is kept once two successive runs agree on the whole
//! evaluation window to within `tol` in `H`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::Field;
use crate::gelfand::{TripleKind, TripleSpec};
use crate::noise::{BasisNorm, NoiseConfig, NoiseEnvironment};
use crate::stepper::{integrate, AuxMRhs, RandomPdeProblem, StepperConfig, Trajectory};

/// Noise basis that is orthonormal in the `H` of `kind`.
pub fn basis_norm_for(kind: TripleKind) -> BasisNorm {
    match kind {
        TripleKind::Pme => BasisNorm::HMinusOne,
        TripleKind::PLaplace | TripleKind::Rde => BasisNorm::L2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PullbackConfig {
    pub tol: f64,
    /// `T₀` in the start schedule.
    pub horizon: f64,
    pub max_doublings: usize,
    pub stepper: StepperConfig,
}

/// Doublings the noise window must allow before a pullback is attempted.
pub const MIN_DOUBLINGS: u32 = 6;

/// Consecutive non-decreasing gaps that abort a pullback.
const STALL_LIMIT: usize = 3;

impl Default for PullbackConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            horizon: 1.0,
            max_doublings: 16,
            stepper: StepperConfig::with_dt(1e-2),
        }
    }
}

/// The limit trajectory with its convergence ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySolution {
    /// Every grid state on `[t_eval_min, t_max]`.
    pub u: Trajectory,
    pub pullback_starts: Vec<f64>,
    /// Sup-in-time `H` gaps between successive runs.
    pub cauchy_gaps: Vec<f64>,
    pub tol: f64,
    pub t_eval_min: f64,
    pub t_max: f64,
}

#[derive(Serialize)]
struct Ledger<'a> {
    starts: &'a [f64],
    gaps: &'a [f64],
    tol: f64,
    window: (f64, f64),
}

impl StationarySolution {
    pub fn state_at(&self, t: f64) -> Option<&Field> {
        self.u.state_at(t, 1e-9 * (1.0 + t.abs()))
    }

    /// Convergence ledger as JSON: starts, gaps and tolerance.
    pub fn ledger_json(&self) -> String {
        serde_json::to_string_pretty(&Ledger {
            starts: &self.pullback_starts,
            gaps: &self.cauchy_gaps,
            tol: self.tol,
            window: (self.t_eval_min, self.t_max),
        })
        .expect("ledger serializes")
    }
}

/// One run of the `M` equation from `(start, initial)` to `t_max`, recorded on
/// `[record_from, t_max]`.
pub fn run_m_equation(
    triple: &TripleSpec,
    noise: &NoiseEnvironment,
    start: f64,
    initial: &Field,
    record_from: f64,
    t_max: f64,
    stepper: &StepperConfig,
) -> Result<Trajectory> {
    check_window(noise, start, t_max)?;
    let rhs = AuxMRhs(triple);
    let problem = RandomPdeProblem {
        rhs: &rhs,
        forcing: Some(noise),
        t_start: start,
        t_end: t_max,
        initial: initial.clone(),
        triple,
    };
    let cfg = StepperConfig {
        record_from,
        ..*stepper
    };
    integrate(&problem, &cfg)
}

fn check_window(noise: &NoiseEnvironment, lo: f64, hi: f64) -> Result<()> {
    let slack = 1e-9 * noise.dt();
    if lo < noise.t_lo() - slack || hi > noise.t_hi() + slack {
        return Err(LabError::WindowExhausted {
            requested: if lo < noise.t_lo() - slack { lo } else { hi },
            lo: noise.t_lo(),
            hi: noise.t_hi(),
        });
    }
    Ok(())
}

/// Largest `‖a_t − b_t‖_H` over the common records of two trajectories.
pub fn sup_gap(triple: &TripleSpec, a: &Trajectory, b: &Trajectory) -> f64 {
    a.states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| triple.h_dist_raw(x.values(), y.values()))
        .fold(0.0, f64::max)
}

/// Pullback limit of the `M` equation on `window = (t_eval_min, t_max)`.
pub fn pullback_stationary(
    triple: &TripleSpec,
    noise: &NoiseEnvironment,
    window: (f64, f64),
    cfg: &PullbackConfig,
) -> Result<StationarySolution> {
    let (t_eval_min, t_max) = window;
    if !(t_max >= t_eval_min) || !(cfg.tol > 0.0) || !(cfg.horizon > 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "pullback needs t_max >= t_eval_min, tol > 0, T0 > 0; got {window:?}, {}, {}",
            cfg.tol, cfg.horizon
        )));
    }
    check_window(noise, t_eval_min - cfg.horizon * 2f64.powi(MIN_DOUBLINGS as i32), t_max)?;
    let zero = Field::zeros(triple.mesh);
    let mut starts = Vec::new();
    let mut gaps: Vec<f64> = Vec::new();
    let mut previous: Option<Trajectory> = None;
    let mut stalls = 0;
    for n in 0..=cfg.max_doublings {
        let s = t_eval_min - cfg.horizon * 2f64.powi(n as i32);
        if s < noise.t_lo() - 1e-9 * noise.dt() {
            break;
        }
        let traj = run_m_equation(triple, noise, s, &zero, t_eval_min, t_max, &cfg.stepper)?;
        starts.push(s);
        if let Some(prev) = previous.take() {
            let gap = sup_gap(triple, &prev, &traj);
            if let Some(last) = gaps.last() {
                stalls = if gap >= *last { stalls + 1 } else { 0 };
            }
            gaps.push(gap);
            if gap < cfg.tol {
                return Ok(StationarySolution {
                    u: traj,
                    pullback_starts: starts,
                    cauchy_gaps: gaps,
                    tol: cfg.tol,
                    t_eval_min,
                    t_max,
                });
            }
            if stalls >= STALL_LIMIT {
                return Err(LabError::PullbackNotCauchy { gaps });
            }
        }
        previous = Some(traj);
    }
    Err(LabError::WindowExhausted {
        requested: t_eval_min - cfg.horizon * 2f64.powi(starts.len() as i32),
        lo: noise.t_lo(),
        hi: noise.t_hi(),
    })
}

/// `H`-distance between `u_h(ω)` and `u_0(θ_h ω)`, each from its own pullback.
pub fn stationarity_check(
    triple: &TripleSpec,
    base_noise: &NoiseEnvironment,
    h: f64,
    cfg: &PullbackConfig,
) -> Result<f64> {
    if h == 0.0 {
        return Ok(0.0);
    }
    let original = pullback_stationary(triple, base_noise, (0.0, h), cfg)?;
    let shifted_noise = base_noise.shifted(h)?;
    let shifted = pullback_stationary(triple, &shifted_noise, (0.0, 0.0), cfg)?;
    let a = original
        .state_at(h)
        .ok_or_else(|| LabError::Grid(format!("h = {h} is not on the stepper grid")))?;
    let b = shifted.state_at(0.0).expect("window end is recorded");
    Ok(triple.h_dist_raw(a.values(), b.values()))
}

/// Outcome of a two-start contraction probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    /// `‖X(t,s₂)x − X(t,s₁)y‖_H²`.
    pub observed: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Relative slack on every bound comparison.
pub const BOUND_SLACK: f64 = 0.1;

/// `H`-based strong-monotonicity constant of `M` from the `V` constant `ĉ`:
/// `c_H = ĉ λ^{−α/2}`, since `‖v‖_V^α ≥ λ^{−α/2} ‖v‖_H^α`.
pub fn h_contraction_constant(triple: &TripleSpec, c_hat_v: f64) -> f64 {
    c_hat_v * triple.embedding_lambda.powf(-triple.alpha / 2.0)
}

/// Compare `‖X(t,s₂)x − X(t,s₁)y‖_H²` with `((β−1)c(t−s₂))^{−1/(β−1)}`,
/// `β = α/2 > 1`. For `α = 2` the bound is the implicit-Euler counterpart of
/// `e^{−c(t−s₂)}` applied to the distance at `s₂`, namely `(1 + c dt)^{−n}`.
#[allow(clippy::too_many_arguments)]
pub fn verify_contraction(
    triple: &TripleSpec,
    noise: &NoiseEnvironment,
    x: &Field,
    y: &Field,
    (s1, s2, t): (f64, f64, f64),
    c_hat_v: f64,
    stepper: &StepperConfig,
) -> Result<ContractionReport> {
    if !(s1 <= s2 && s2 <= t) {
        return Err(LabError::InvalidParameter(format!("need s1 <= s2 <= t, got {s1}, {s2}, {t}")));
    }
    let y_at_s2 = if s2 > s1 {
        run_m_equation(triple, noise, s1, y, s2, s2, stepper)?
            .last()
            .cloned()
            .expect("final state recorded")
    } else {
        y.clone()
    };
    let end = |start: &Field| -> Result<Field> {
        Ok(run_m_equation(triple, noise, s2, start, t, t, stepper)?
            .last()
            .cloned()
            .expect("final state recorded"))
    };
    let (a, b) = (end(x)?, end(&y_at_s2)?);
    let observed = triple.h_norm_sq_raw(&a.sub(&b)?.into_values());
    let c = h_contraction_constant(triple, c_hat_v);
    let beta = triple.alpha / 2.0;
    let bound = if beta > 1.0 {
        if t > s2 {
            ((beta - 1.0) * c * (t - s2)).powf(-1.0 / (beta - 1.0))
        } else {
            f64::INFINITY
        }
    } else {
        let d0 = triple.h_norm_sq_raw(&x.sub(&y_at_s2)?.into_values());
        let steps = ((t - s2) / stepper.dt).round();
        d0 * (1.0 + c * stepper.dt).powf(-steps)
    };
    Ok(ContractionReport {
        observed,
        bound,
        pass: observed <= bound * (1.0 + BOUND_SLACK) + 1e-14,
    })
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// `(1/T) ∫_{t0}^{t0+T} ‖u_r‖_H^k dr` for each `T` in `windows`, with `t0`
/// the start of the evaluation window. Windows longer than the record are
/// truncated to it.
pub fn birkhoff_average(
    solution: &StationarySolution,
    triple: &TripleSpec,
    k: u32,
    windows: &[f64],
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(LabError::InvalidParameter("moment order k must be >= 1".into()));
    }
    let times = &solution.u.times;
    let powers: Vec<f64> = solution
        .u
        .states
        .iter()
        .map(|s| triple.h_norm_raw(s.values()).powi(k as i32))
        .collect();
    let t0 = solution.t_eval_min;
    Ok(windows
        .iter()
        .map(|w| {
            let end = times.partition_point(|t| *t <= t0 + w + 1e-9);
            if end < 2 {
                return powers.first().copied().unwrap_or(0.0);
            }
            trapezoid(&times[..end], &powers[..end]) / (times[end - 1] - times[0])
        })
        .collect())
}

/// `max_{r ≤ t0 + T} ‖u_r‖_H^k / T` for each `T`; decreasing in `T` reflects
/// sublinear growth.
pub fn running_max_ratio(
    solution: &StationarySolution,
    triple: &TripleSpec,
    k: u32,
    windows: &[f64],
) -> Vec<f64> {
    let t0 = solution.t_eval_min;
    windows
        .iter()
        .map(|w| {
            let m = solution
                .u
                .times
                .iter()
                .zip(&solution.u.states)
                .take_while(|(t, _)| **t <= t0 + w + 1e-9)
                .map(|(_, s)| triple.h_norm_raw(s.values()).powi(k as i32))
                .fold(0.0, f64::max);
            m / w
        })
        .collect()
}

/// `∫ e^{η r} ‖u_r‖_V^α dr` over the recorded window.
pub fn weighted_v_integral(solution: &StationarySolution, triple: &TripleSpec, eta: f64) -> f64 {
    let values: Vec<f64> = solution
        .u
        .times
        .iter()
        .zip(&solution.u.states)
        .map(|(t, s)| (eta * t).exp() * triple.v_norm_pow_raw(s.values()))
        .collect();
    trapezoid(&solution.u.times, &values)
}

/// Ensemble estimate of `E ‖u_{t}‖_H^k` over independent seeds, with `t` the
/// end of `template`'s window. Seeds run in parallel; the reduction is ordered.
pub fn ensemble_moment(
    triple: &TripleSpec,
    template: &NoiseConfig,
    seeds: &[u64],
    k: u32,
    cfg: &PullbackConfig,
) -> Result<f64> {
    let t = template.t_max;
    let values = seeds
        .par_iter()
        .map(|seed| {
            let nc = NoiseConfig {
                seed: *seed,
                ..template.clone()
            };
            let noise = NoiseEnvironment::sample(&nc, triple.mesh, basis_norm_for(triple.kind))?;
            let sol = pullback_stationary(triple, &noise, (t, t), cfg)?;
            let u = sol.state_at(t).expect("window end is recorded");
            Ok(triple.h_norm_raw(u.values()).powi(k as i32))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.iter().sum::<f64>() / values.len().max(1) as f64)
}
