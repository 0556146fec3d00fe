use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported element configuration: {0}")]
    Unsupported(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("factorization of a {n}x{n} system failed: {detail}")]
    Singular { n: usize, detail: String },

    #[error("nonlinear iteration did not converge in {iterations} iterations (last relative increment {last_increment:.3e})")]
    NonConvergence { iterations: usize, last_increment: f64 },

    #[error("nonlinear iteration diverged at iteration {iteration} (relative increment {increment:.3e}); try a smaller time step")]
    Diverged { iteration: usize, increment: f64 },

    #[error("time step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("convergence rate undefined at entry {index}: errors and mesh sizes must be positive")]
    RateUndefined { index: usize },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// Errors raised by the numerical core (as opposed to bad input or I/O).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::NonConvergence { .. }
                | Error::Diverged { .. }
                | Error::Step { .. }
        )
    }
}
