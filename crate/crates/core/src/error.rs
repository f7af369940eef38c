use thiserror::Error;

use crate::problem::StepGate;

pub type Result<T, E = MsdeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MsdeError {
    #[error("{regime} gate violated at k = {k}: {factor}·L_b·k = {product} is not < 1")]
    Gate {
        regime: StepGate,
        k: f64,
        factor: f64,
        product: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("line search failed (gradient norm {gradient_norm:e})")]
    LineSearch { gradient_norm: f64 },

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<MsdeError>,
    },

    #[error("path {path} at {steps} steps failed: {source}")]
    Path {
        path: u64,
        steps: usize,
        #[source]
        source: Box<MsdeError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MsdeError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        MsdeError::InvalidInput(msg.into())
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        MsdeError::Step {
            step,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_path(self, path: u64, steps: usize) -> Self {
        MsdeError::Path {
            path,
            steps,
            source: Box::new(self),
        }
    }
}
