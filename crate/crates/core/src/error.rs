use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot parse instance: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("invalid instance:{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("rejected input: {0}")]
    InvalidInput(String),
    #[error("non-finite value while bracketing cluster {cluster} state {state} at eta0 = {eta0}")]
    NonFinite { cluster: usize, state: usize, eta0: f64 },
    #[error("bracket for cluster {cluster} state {state} did not close after {doublings} doublings")]
    BracketFailure { cluster: usize, state: usize, doublings: usize },
    #[error("no sign change of gamma on [{low}, {high}]: gamma(low) = {gamma_low}, gamma(high) = {gamma_high}")]
    NoSignChange { low: f64, high: f64, gamma_low: f64, gamma_high: f64 },
    #[error("state space has {states} states, above the cap of {cap}")]
    StateCapExceeded { states: usize, cap: usize },
    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trace line {line}: {message}")]
    Trace { line: usize, message: String },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| format!("\n  {v}")).collect()
}

pub type Result<T> = std::result::Result<T, Error>;
