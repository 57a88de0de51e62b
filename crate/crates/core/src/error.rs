use thiserror::Error;

use crate::model::Regime;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter violates its type invariant (e.g. `alpha >= 1`).
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// A function was evaluated outside of `[0, T] x [0, inf)`.
    #[error("({t}, {x}) lies outside the domain [0, {horizon}] x [0, inf)")]
    Domain { t: f64, x: f64, horizon: f64 },

    /// The operation needs a different stopping regime.
    #[error("operation requires the {required} regime, problem is {actual:?}")]
    Regime {
        required: &'static str,
        actual: Regime,
    },

    #[error("lattice probability p = {p} is outside (0, 1); use at least {min_steps} steps")]
    ProbabilityOutOfRange { p: f64, min_steps: usize },

    #[error("volatility {sigma} is too small for this solver ({reason})")]
    VolatilityTooSmall { sigma: f64, reason: &'static str },

    #[error("grid configuration error: {0}")]
    Grid(String),

    #[error("PSOR did not converge at time step {step} after {iterations} iterations (residual {residual:e})")]
    PsorNotConverged {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("query ({t}, {x}) lies outside the grid hull")]
    OutOfHull { t: f64, x: f64 },

    #[error("boundary level {level} at t = {t} is outside the grid interior")]
    BoundaryOutsideGrid { t: f64, level: f64 },

    #[error("value estimate was produced for a different problem")]
    MismatchedSpec,

    #[error("{0}")]
    Invalid(String),
}
