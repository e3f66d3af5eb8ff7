use thiserror::Error;

pub type Result<T> = std::result::Result<T, SolverError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point ({x}, {z}) lies outside the domain [0, {length}] x [-{depth}, 0]")]
    Domain {
        x: f64,
        z: f64,
        length: f64,
        depth: f64,
    },

    #[error("time {t} lies outside [0, {horizon}]")]
    TimeDomain { t: f64, horizon: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("blow-up in interval {interval} at t = {time}: norm {norm:e} exceeds guard {guard:e}")]
    BlowUp {
        interval: usize,
        time: f64,
        norm: f64,
        guard: f64,
    },

    #[error("implicit nonlinear substep did not converge at t = {time} after {iterations} iterations")]
    NoConvergence { time: f64, iterations: usize },

    #[error("coupling error: {0}")]
    Coupling(String),

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("study unstable: {excluded} of {total} paths blew up")]
    Stability { excluded: usize, total: usize },
}

impl SolverError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            SolverError::BlowUp { .. }
                | SolverError::NoConvergence { .. }
                | SolverError::Stability { .. }
        )
    }
}
