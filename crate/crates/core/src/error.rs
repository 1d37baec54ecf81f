//! Error type shared by every module.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A non-finite value was found in a state array.
    #[error("corrupt state: non-finite value in `{field}` at node {node}")]
    CorruptState { field: &'static str, node: usize },

    /// Input state lies outside the admissible set where one is required.
    #[error("inadmissible state: {0}")]
    Inadmissible(String),

    /// The flow map can no longer be inverted safely.
    #[error("flow map lost invertibility at node {node}, t = {t}: {reason}")]
    InvertibilityLost { node: usize, t: f64, reason: String },

    /// An iterate left the admissible set during the nonlinear solve.
    #[error("blow-up monitor: iterate left the admissible set at t = {t} (min h - kappa = {margin_h:.3e}, a-margin = {margin_a:.3e})")]
    Blowup { t: f64, margin_h: f64, margin_a: f64 },

    #[error("no convergence after {iterations} iterations (last difference {last_delta:.3e}, target {target:.3e})")]
    NoConvergence { iterations: usize, last_delta: f64, target: f64 },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("eigensolve failed: {0}")]
    Eigen(String),

    /// Explicit step exceeds the advective stability limit.
    #[error("CFL number {cfl:.3} exceeds 0.5; retry with dt <= {suggested_dt:.3e}")]
    Cfl { cfl: f64, suggested_dt: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Aborts raised by the runtime monitors rather than by bad input or bugs.
    pub fn is_monitor_abort(&self) -> bool {
        matches!(self, Error::Blowup { .. } | Error::InvertibilityLost { .. })
    }
}
