//! A-optimal design measures and robust, highly efficient exact fractions
//! for mixed-level factorials under the baseline parametrization.
//!
//! The pipeline is: build the model ([`model`]), find the optimal design
//! measure and the benchmark `s` ([`measure::optimize`]), discretize it with
//! one of the search procedures ([`search`]), and certify the result with
//! efficiency lower bounds under the assumed model and under minimax model
//! misspecification ([`design::score`]).

pub mod design;
pub mod error;
pub mod linalg;
pub mod measure;
pub mod model;
pub mod search;

pub use design::{DesignScore, ExactDesign, RhoBound};
pub use error::{Error, Result};
pub use measure::{DesignMeasure, OptimizerResult};
pub use model::{Effect, FactorialSpace, ModelMatrices, RequirementSet};
pub use search::{OracleResult, Procedure, ProcedureConfig, ScoringMode, SearchTrace};
