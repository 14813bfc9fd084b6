//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A channel coefficient required for scaling or normalization is zero.
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    /// Noise covariance is not Hermitian positive definite.
    #[error("invalid noise covariance: {0}")]
    InvalidCovariance(String),

    /// The Fisher information matrix is numerically singular. This is
    /// scientific signal (an unidentifiable scenario, e.g. duplicate
    /// Dopplers), not a numerical nuisance; it is reported, never
    /// regularized away.
    #[error("singular Fisher information matrix (equilibrated condition estimate {cond:.3e})")]
    SingularFim { cond: f64 },

    /// Optimizer state is unusable (e.g. non-finite objective at start).
    #[error("invalid optimizer state: {0}")]
    InvalidState(String),

    /// The alternating optimizer exhausted its penalty-continuation budget
    /// without meeting the constraint residual target.
    #[error("phase design did not converge: residual {residual:.3e} > eps {eps:.3e} after {rounds} penalty rounds")]
    NonConvergence {
        residual: f64,
        eps: f64,
        rounds: usize,
        objective_trace: Vec<f64>,
    },

    /// Configuration file failed to parse or violates an invariant.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
