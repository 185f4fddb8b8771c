use thiserror::Error;

use crate::search::SearchTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid factorial space: {0}")]
    InvalidSpace(String),

    #[error("invalid effect: {0}")]
    InvalidEffect(String),

    #[error("invalid requirement set: {0}")]
    InvalidRequirementSet(String),

    #[error("invalid treatment: {0}")]
    InvalidTreatment(String),

    #[error("label {label} out of range 1..={v}")]
    LabelOutOfRange { label: usize, v: usize },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("invalid design measure: {0}")]
    InvalidMeasure(String),

    #[error("information matrix is singular")]
    SingularMatrix,

    #[error("multiplicative algorithm did not converge in {iterations} iterations (gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64, best: Vec<f64> },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error(
        "singular design: information matrix of the {n_runs}-run design is singular, parameters are not estimable"
    )]
    SingularDesign { n_runs: usize },

    #[error("no scaling constant rounds the measure to exactly {n_runs} runs")]
    NoValidScale { n_runs: usize },

    #[error("run size {n_runs} is below q + 1 = {min}")]
    TooFewRuns { n_runs: usize, min: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no initial design with eff_lb >= {threshold} for N1 in {from}..={to}")]
    NoInitialDesign { threshold: f64, from: usize, to: usize },

    #[error("dead end at {n_runs} runs: every candidate design is singular")]
    DeadEnd { n_runs: usize, partial: Box<SearchTrace> },

    #[error("enumeration needs {required} designs, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("parse error: {0}")]
    Parse(String),
}
