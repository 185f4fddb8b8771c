//! Problem specifications: a TOML spec file and/or command-line flags.
//!
//! ```toml
//! levels = [2, 2, 2, 2, 2, 3]
//! effects = "1;2;3;4;5;6;1x6;2x6"   # or [[1], [2], …, [1, 6]]
//! runs = "13..20"                   # or 16, or [13, 15, 20]
//! rho = [1, 5]
//! procedure = "all"                 # A | B1 | B2 | all
//! t = 1e-10
//! thresholds = [0.98, 0.95]         # initial, keep
//! n1_hint = 304                     # first N1 tried by procedure A
//! b1_start = 74                     # B1 starts from the B2 design of this size
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use fracdesign::measure::DEFAULT_TOLERANCE;
use fracdesign::search::{DEFAULT_INIT_THRESHOLD, DEFAULT_KEEP_THRESHOLD};
use fracdesign::{Effect, FactorialSpace, ModelMatrices, Procedure, RequirementSet};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcedureSelector {
    One(Procedure),
    All,
}

impl ProcedureSelector {
    pub fn procedures(&self) -> Vec<Procedure> {
        match self {
            ProcedureSelector::One(p) => vec![*p],
            ProcedureSelector::All => Procedure::ALL.to_vec(),
        }
    }
}

impl std::str::FromStr for ProcedureSelector {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(ProcedureSelector::All);
        }
        s.parse::<Procedure>().map(ProcedureSelector::One).map_err(|e| CliError::Parse(e.to_string()))
    }
}

impl std::fmt::Display for ProcedureSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProcedureSelector::One(p) => write!(f, "{p}"),
            ProcedureSelector::All => f.write_str("all"),
        }
    }
}

/// Parses `"16"`, `"13..20"` (inclusive) or `"13,15,20"`.
pub fn parse_runs(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Parse(format!("cannot parse run sizes {text:?}"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|_| CliError::Parse(format!("bad {what} {t:?}"))))
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum EffectsField {
    Text(String),
    Lists(Vec<Vec<usize>>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RunsField {
    One(usize),
    Text(String),
    List(Vec<usize>),
}

/// Raw spec file contents, every key optional so flags can fill gaps.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    levels: Option<Vec<usize>>,
    effects: Option<EffectsField>,
    runs: Option<RunsField>,
    rho: Option<Vec<f64>>,
    procedure: Option<String>,
    t: Option<f64>,
    thresholds: Option<Vec<f64>>,
    n1_hint: Option<usize>,
    b1_start: Option<usize>,
}

impl SpecFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(format!("spec file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Overrides given on the command line, already split into fields.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub levels: Option<String>,
    pub effects: Option<String>,
    pub runs: Option<String>,
    pub rho: Option<String>,
    pub procedure: Option<String>,
    pub t: Option<f64>,
    pub init_threshold: Option<f64>,
    pub keep_threshold: Option<f64>,
    pub n1_hint: Option<usize>,
    pub b1_start: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemSpec {
    pub levels: Vec<usize>,
    /// `;`-separated effects, e.g. `1;2;1x2`.
    pub effects: String,
    pub runs: Vec<usize>,
    pub rho: Vec<f64>,
    #[serde(serialize_with = "serialize_display")]
    pub procedure: ProcedureSelector,
    pub t: f64,
    pub init_threshold: f64,
    pub keep_threshold: f64,
    pub n1_hint: Option<usize>,
    pub b1_start: Option<usize>,
}

fn serialize_display<S: serde::Serializer>(v: &ProcedureSelector, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

impl ProblemSpec {
    pub fn resolve(file: Option<SpecFile>, flags: &Overrides) -> Result<Self, CliError> {
        let file = file.unwrap_or_default();
        let levels = match &flags.levels {
            Some(text) => parse_list(text, "level count")?,
            None => file.levels.ok_or_else(|| CliError::Parse("factor levels are required (--levels)".into()))?,
        };
        let effects = match (&flags.effects, file.effects) {
            (Some(text), _) => text.clone(),
            (None, Some(EffectsField::Text(t))) => t,
            (None, Some(EffectsField::Lists(lists))) => lists
                .iter()
                .map(|l| l.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("x"))
                .collect::<Vec<_>>()
                .join(";"),
            (None, None) => return Err(CliError::Parse("requirement set is required (--effects)".into())),
        };
        let runs = match (&flags.runs, file.runs) {
            (Some(text), _) => parse_runs(text)?,
            (None, Some(RunsField::One(n))) => vec![n],
            (None, Some(RunsField::Text(t))) => parse_runs(&t)?,
            (None, Some(RunsField::List(mut l))) => {
                l.sort_unstable();
                l.dedup();
                l
            }
            (None, None) => Vec::new(),
        };
        let rho = match &flags.rho {
            Some(text) => parse_list(text, "rho")?,
            None => file.rho.unwrap_or_else(|| vec![1.0, 5.0]),
        };
        if let Some(r) = rho.iter().find(|r| !(**r >= 0.0)) {
            return Err(CliError::Parse(format!("rho must be nonnegative, got {r}")));
        }
        let procedure = flags
            .procedure
            .clone()
            .or(file.procedure)
            .map(|p| p.parse())
            .transpose()?
            .unwrap_or(ProcedureSelector::All);
        let t = flags.t.or(file.t).unwrap_or(DEFAULT_TOLERANCE);
        if !(t > 0.0) {
            return Err(CliError::Parse(format!("t must be positive, got {t}")));
        }
        let (file_init, file_keep) = match file.thresholds.as_deref() {
            None => (None, None),
            Some([a, b]) => (Some(*a), Some(*b)),
            Some(_) => return Err(CliError::Parse("thresholds must be [initial, keep]".into())),
        };
        let init_threshold = flags.init_threshold.or(file_init).unwrap_or(DEFAULT_INIT_THRESHOLD);
        let keep_threshold = flags.keep_threshold.or(file_keep).unwrap_or(DEFAULT_KEEP_THRESHOLD);
        if !(0.0 < keep_threshold && keep_threshold <= init_threshold && init_threshold <= 1.0) {
            return Err(CliError::Parse(format!(
                "need 0 < keep ({keep_threshold}) <= initial ({init_threshold}) <= 1"
            )));
        }
        Ok(Self {
            levels,
            effects,
            runs,
            rho,
            procedure,
            t,
            init_threshold,
            keep_threshold,
            n1_hint: flags.n1_hint.or(file.n1_hint),
            b1_start: flags.b1_start.or(file.b1_start),
        })
    }

    /// Builds the model, failing with a parse error on invalid levels or effects.
    pub fn model(&self) -> Result<ModelMatrices, CliError> {
        let space = FactorialSpace::new(self.levels.clone()).map_err(|e| CliError::Parse(e.to_string()))?;
        let effects = self
            .effects
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<Effect>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Parse(e.to_string()))?;
        let reqset = RequirementSet::new(&space, effects).map_err(|e| CliError::Parse(e.to_string()))?;
        ModelMatrices::build(&space, &reqset).map_err(CliError::from)
    }

    /// Run sizes, refusing any below `q + 1`.
    pub fn checked_runs(&self, q: usize) -> Result<Vec<usize>, CliError> {
        if self.runs.is_empty() {
            return Err(CliError::Parse("run sizes are required (--runs)".into()));
        }
        if let Some(&n) = self.runs.iter().find(|&&n| n < q + 1) {
            return Err(CliError::Parse(format!(
                "run size {n} cannot keep θ estimable: at least q + 1 = {} runs are necessary",
                q + 1
            )));
        }
        Ok(self.runs.clone())
    }
}
