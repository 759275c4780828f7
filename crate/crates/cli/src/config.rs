//! Run configuration: `key = value` lines under section headers (TOML).
//! Every section is optional; unknown keys are rejected.

use serde::{Deserialize, Serialize};

use attractor_lab::gelfand::{DriftParams, DriftSpec, Reaction, TripleKind};
use attractor_lab::noise::NoiseConfig;
use attractor_lab::stationary::PullbackConfig;
use attractor_lab::stepper::StepperConfig;
use attractor_lab::Mesh1D;

use crate::error::CliError;
use crate::Subcommand;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub drift: DriftSection,
    pub noise: NoiseSection,
    pub solver: SolverSection,
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Must name the invoked subcommand when present.
    pub experiment: Option<String>,
    pub seed: u64,
    pub out: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            out: "runs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftSection {
    /// `plaplace`, `pme` or `rde`.
    pub kind: String,
    pub alpha: f64,
    pub eta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub diffusion: f64,
    /// `none`, `linear`, `tanh` or `sin`.
    pub reaction: String,
    pub reaction_slope: f64,
}

impl Default for DriftSection {
    fn default() -> Self {
        Self {
            kind: "plaplace".into(),
            alpha: 3.0,
            eta: 0.0,
            mu: 0.0,
            sigma: 1.0,
            diffusion: 1.0,
            reaction: "none".into(),
            reaction_slope: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub modes: usize,
    /// Eigenvalue decay `q_k = k^{−γ}`.
    pub gamma: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub dt: f64,
    pub burn_in: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            modes: 8,
            gamma: 2.0,
            t_min: -90.0,
            t_max: 4.0,
            dt: 0.01,
            burn_in: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Interior mesh nodes.
    pub n: usize,
    pub length: f64,
    pub dt: f64,
    pub newton_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            n: 32,
            length: 1.0,
            dt: 0.01,
            newton_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub tol: f64,
    pub horizon: f64,
    /// Evaluation time.
    pub t: f64,
    /// End of the stationary evaluation window `[t, t_end]`.
    pub t_end: f64,
    /// Start times, all before `t`.
    pub starts: Vec<f64>,
    /// Shifts for the stationarity check.
    pub shifts: Vec<f64>,
    /// Birkhoff averaging windows.
    pub windows: Vec<f64>,
    pub paths: usize,
    pub times: Vec<f64>,
    pub eps: f64,
    pub deltas: Vec<f64>,
    /// Largest bump count in the covering table.
    pub bumps: usize,
    /// Time at which bumps have support radius `δ`.
    pub bump_time: f64,
    /// Amplitude of the initial datum.
    pub amplitude: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            horizon: 1.0,
            t: 1.0,
            t_end: 2.0,
            starts: vec![-0.5, -1.0, -2.0, -3.0, -4.0],
            shifts: vec![0.5, 1.0, 2.0],
            windows: vec![0.5, 1.0],
            paths: 100,
            times: vec![1.0, 2.0, 3.0],
            eps: 0.05,
            deltas: vec![0.02, 0.05, 0.1, 0.2],
            bumps: 8,
            bump_time: 0.05,
            amplitude: 3.0,
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn on_grid(x: f64, dt: f64) -> bool {
    ((x / dt).round() * dt - x).abs() <= 1e-9 * dt.max(x.abs())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn triple_kind(&self) -> Result<TripleKind, CliError> {
        match self.drift.kind.as_str() {
            "plaplace" => Ok(TripleKind::PLaplace),
            "pme" => Ok(TripleKind::Pme),
            "rde" => Ok(TripleKind::Rde),
            other => Err(bad(format!("drift.kind must be plaplace, pme or rde, got {other:?}"))),
        }
    }

    fn reaction(&self) -> Result<Reaction, CliError> {
        let slope = self.drift.reaction_slope;
        match self.drift.reaction.as_str() {
            "none" => Ok(Reaction::None),
            "linear" => Ok(Reaction::Linear { slope }),
            "tanh" => Ok(Reaction::Tanh { slope }),
            "sin" => Ok(Reaction::Sin { slope }),
            other => Err(bad(format!("drift.reaction must be none, linear, tanh or sin, got {other:?}"))),
        }
    }

    pub fn mesh(&self) -> Result<Mesh1D, CliError> {
        Mesh1D::new(self.solver.length, self.solver.n).map_err(|e| bad(e.to_string()))
    }

    pub fn drift_params(&self) -> Result<DriftParams, CliError> {
        let d = &self.drift;
        let kind = self.triple_kind()?;
        let base = match kind {
            TripleKind::PLaplace => DriftParams::p_laplace(d.alpha, d.eta),
            TripleKind::Pme => DriftParams::pme(d.alpha, d.eta),
            TripleKind::Rde => DriftParams {
                eta: d.eta,
                ..DriftParams::rde(self.reaction()?)
            },
        };
        if kind != TripleKind::Rde && self.drift.reaction != "none" {
            return Err(bad("drift.reaction is only available for kind = \"rde\""));
        }
        Ok(DriftParams {
            alpha: d.alpha,
            diffusion: d.diffusion,
            ..base.with_noise(d.mu, d.sigma)
        })
    }

    pub fn drift(&self) -> Result<DriftSpec, CliError> {
        DriftSpec::new(self.drift_params()?, self.mesh()?).map_err(|e| bad(e.to_string()))
    }

    pub fn noise(&self, seed: u64) -> NoiseConfig {
        let n = &self.noise;
        NoiseConfig {
            burn_in: n.burn_in,
            ..NoiseConfig::power_law(seed, (n.t_min, n.t_max), n.dt, self.drift.mu, self.drift.sigma, n.modes, n.gamma)
        }
    }

    pub fn stepper(&self) -> StepperConfig {
        StepperConfig {
            newton_tol: self.solver.newton_tol,
            ..StepperConfig::with_dt(self.solver.dt)
        }
    }

    pub fn pullback(&self) -> PullbackConfig {
        PullbackConfig {
            tol: self.experiment.tol,
            horizon: self.experiment.horizon,
            stepper: self.stepper(),
            ..PullbackConfig::default()
        }
    }

    /// Every check that can fail before computation starts.
    pub fn validate(&self, cmd: Subcommand) -> Result<(), CliError> {
        if let Some(name) = &self.run.experiment {
            if name != cmd.name() {
                return Err(bad(format!("run.experiment = {name:?} but the subcommand is {:?}", cmd.name())));
            }
        }
        let (s, n, e) = (&self.solver, &self.noise, &self.experiment);
        let positive = [
            ("solver.dt", s.dt),
            ("solver.newton_tol", s.newton_tol),
            ("solver.length", s.length),
            ("noise.dt", n.dt),
            ("noise.gamma", n.gamma),
            ("experiment.tol", e.tol),
            ("experiment.horizon", e.horizon),
            ("experiment.eps", e.eps),
            ("experiment.bump_time", e.bump_time),
            ("experiment.amplitude", e.amplitude),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(bad(format!("{key} must be positive and finite, got {v}")));
            }
        }
        if !(n.burn_in >= 0.0) || !(n.t_min < 0.0 && 0.0 < n.t_max) {
            return Err(bad(format!(
                "noise window needs t_min < 0 < t_max and burn_in >= 0, got ({}, {}), {}",
                n.t_min, n.t_max, n.burn_in
            )));
        }
        if n.modes == 0 {
            return Err(bad("noise.modes must be at least 1"));
        }
        if !on_grid(s.dt, n.dt) {
            return Err(bad(format!("solver.dt = {} must be a multiple of noise.dt = {}", s.dt, n.dt)));
        }
        for (key, list) in [("starts", &e.starts), ("shifts", &e.shifts), ("times", &e.times)] {
            if let Some(x) = list.iter().find(|x| !on_grid(**x, s.dt)) {
                return Err(bad(format!("experiment.{key} entry {x} is not on the solver grid")));
            }
        }
        if !on_grid(e.t, s.dt) || !on_grid(e.t_end, s.dt) {
            return Err(bad("experiment.t and experiment.t_end must lie on the solver grid"));
        }
        let drift = self.drift()?;
        match cmd {
            Subcommand::Oracle => {}
            Subcommand::Entropy => {
                if drift.alpha() <= 2.0 || e.deltas.is_empty() || e.deltas.iter().any(|d| !(*d > 0.0)) {
                    return Err(bad("entropy needs alpha > 2 and positive deltas"));
                }
                if e.bumps == 0 || e.bumps > 16 {
                    return Err(bad(format!("experiment.bumps must be in 1..=16, got {}", e.bumps)));
                }
            }
            Subcommand::Sync => {
                if self.drift.mu != 0.0 {
                    return Err(bad("sync runs use additive noise only (drift.mu = 0)"));
                }
                if e.times.is_empty() || e.times.iter().any(|t| !(*t > 0.0)) || e.paths == 0 {
                    return Err(bad("sync needs positive times and at least one path"));
                }
                let t_end = e.times.iter().copied().fold(0.0, f64::max);
                if t_end > n.t_max {
                    return Err(bad(format!("experiment.times reach {t_end} beyond noise.t_max = {}", n.t_max)));
                }
            }
            Subcommand::Stationary => {
                if !(e.t_end >= e.t) {
                    return Err(bad("experiment.t_end must be at least experiment.t"));
                }
                let reach = e.t_end + e.shifts.iter().copied().fold(0.0, f64::max);
                if reach > n.t_max {
                    return Err(bad(format!("window end plus shifts {reach} exceeds noise.t_max = {}", n.t_max)));
                }
                self.check_pullback_room(e.t)?;
            }
            Subcommand::Flow | Subcommand::Absorb | Subcommand::Collapse => {
                if e.starts.is_empty() || e.starts.iter().any(|s| *s >= e.t) {
                    return Err(bad("experiment.starts must be nonempty and before experiment.t"));
                }
                if e.t > n.t_max {
                    return Err(bad(format!("experiment.t = {} exceeds noise.t_max = {}", e.t, n.t_max)));
                }
                let s_min = e.starts.iter().copied().fold(f64::INFINITY, f64::min);
                self.check_pullback_room(s_min)?;
                if cmd == Subcommand::Collapse && !(drift.alpha() > 2.0 && drift.lambda_sm > 0.0) {
                    return Err(bad("collapse needs a strongly monotone drift with alpha > 2"));
                }
            }
        }
        Ok(())
    }

    fn check_pullback_room(&self, earliest: f64) -> Result<(), CliError> {
        let need = earliest
            - self.experiment.horizon * 2f64.powi(attractor_lab::stationary::MIN_DOUBLINGS as i32);
        if need < self.noise.t_min {
            return Err(bad(format!(
                "pullback from {earliest} needs noise.t_min <= {need}, got {}",
                self.noise.t_min
            )));
        }
        Ok(())
    }
}
