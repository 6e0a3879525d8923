use thiserror::Error;

/// Errors raised by schedules, solvers and the study harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A time or log-SNR value fell outside the schedule's domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// An argument violated an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A parameterization conversion would divide by zero.
    #[error("singular conversion: {0}")]
    Singularity(String),
    /// The time grid is incompatible with the requested step.
    #[error("grid error: {0}")]
    Grid(String),
    /// A multistep state was missing buffered model outputs.
    #[error("state error: {0}")]
    State(String),
    /// A solver or study specification is inconsistent.
    #[error("spec error: {0}")]
    Spec(String),
    /// A schedule could not be built from the supplied parameters.
    #[error("construction error: {0}")]
    Construction(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    /// The adaptive reference integrator could not make progress.
    #[error("stiffness error: {0}")]
    Stiffness(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
