use std::path::PathBuf;

/// Errors raised by the numerical modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration failed at t = {time}: non-finite state")]
    IntegrationFailure { time: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("stability bound violated (CFL number {cfl:.3} > 1); use dt <= {suggested_dt:.3e}")]
    Stability { cfl: f64, suggested_dt: f64 },

    #[error("scheme fault: {0}")]
    SchemeFault(String),

    #[error("training diverged after epoch {last_finite_epoch}")]
    Divergence { last_finite_epoch: usize },

    #[error("linear solver did not converge (relative residual {residual:.3e})")]
    NonConvergence { residual: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
