use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("operator too large for dense analysis: {rows}x{cols} exceeds cap {cap}")]
    Capacity { rows: usize, cols: usize, cap: usize },
    #[error("degenerate matrix family: {0}")]
    DegenerateFamily(String),
    #[error("infeasible instance: {0}")]
    Infeasible(String),
    #[error("construction infeasible: {0}")]
    ConstructionInfeasible(String),
    #[error("solver diverged at iteration {iteration}: |u| = {norm:e}")]
    Divergence { iteration: usize, norm: f64 },
    #[error("solver stopped after {iterations} iterations without reaching the target accuracy")]
    NotConverged { iterations: usize },
    #[error("fit refused: {0}")]
    FitRefused(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors raised while running a solver, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::NotConverged { .. }
                | Error::FitRefused(_)
                | Error::ConstructionInfeasible(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
