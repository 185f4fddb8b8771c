//! Library behind the `fracdesign` binary: problem specs, the four
//! commands and their report formats.

pub mod commands;
pub mod problem;
pub mod report;

use thiserror::Error;

pub use commands::{cmd_design, cmd_evaluate, cmd_optimize_measure, cmd_oracle, RunOptions};
pub use problem::{Overrides, ProblemSpec, ProcedureSelector, SpecFile};
pub use report::Format;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Budget(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Budget(_) => 4,
        }
    }
}

impl From<fracdesign::Error> for CliError {
    fn from(e: fracdesign::Error) -> Self {
        use fracdesign::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidSpace(_)
            | E::InvalidEffect(_)
            | E::InvalidRequirementSet(_)
            | E::InvalidTreatment(_)
            | E::LabelOutOfRange { .. }
            | E::InvalidConfig(_)
            | E::InvalidDesign(_)
            | E::TooFewRuns { .. }
            | E::Parse(_) => CliError::Parse(msg),
            E::BudgetExceeded { .. } => CliError::Budget(msg),
            _ => CliError::Numerical(msg),
        }
    }
}
