use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("invalid state")]
    InvalidState,

    #[error("singular mass matrix (D = {0})")]
    SingularMassMatrix(f64),

    #[error("no equilibrium in bracket [0, {u_max}]")]
    NoEquilibrium { u_max: f64 },

    #[error("at asymptote eps_r* (denominator K11*eps_r + K10 vanishes)")]
    AtAsymptote,

    #[error("degenerate pitchfork: {0}")]
    DegeneratePitchfork(String),

    #[error("not an oscillatory crossing (omega = {0:e})")]
    NotOscillatory(f64),

    #[error("degenerate criticality, undetermined (Sigma = {0:e})")]
    DegenerateCriticality(f64),

    #[error("invalid tolerance {0:e}; expected a value in [1e-12, 1e-3]")]
    InvalidTolerance(f64),

    #[error("stiffness/kink stall at t = {t}: step size fell below {h_min:e}")]
    StepUnderflow { t: f64, h_min: f64, state: Vec<f64> },

    #[error("newton iteration did not converge: {0}")]
    Convergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
