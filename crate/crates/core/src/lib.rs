//! Pathwise simulation of monotone SPDEs with additive and linear
//! multiplicative noise: noise sampling, discretized Gelfand triples, an
//! implicit pathwise solver, stationary solutions by pullback, conjugated
//! flows, and attractor diagnostics checked against closed-form oracles.

pub mod attractor;
pub mod error;
pub mod field;
pub mod flow;
pub mod gelfand;
pub mod linalg;
pub mod noise;
pub mod oracles;
pub mod stationary;
pub mod stepper;

pub use error::{LabError, Result};
pub use field::{Field, Mesh1D};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
