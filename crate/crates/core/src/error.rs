use thiserror::Error;

use crate::params::{Firm, Side};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate threshold: the {side} boundary collapses (clamped eta_star = {eta_star})")]
    DegenerateThreshold { side: Side, eta_star: f64 },

    #[error("undefined update: action {0} has zero likelihood in both states")]
    UndefinedUpdate(Firm),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("all {0} runs were censored")]
    AllCensored(usize),

    #[error(
        "value iteration did not converge (residual {residual:e} after {iterations} iterations)"
    )]
    NonConvergence { residual: f64, iterations: usize },

    #[error("io: {0}")]
    Io(String),
}

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

pub type Result<T> = std::result::Result<T, Error>;
