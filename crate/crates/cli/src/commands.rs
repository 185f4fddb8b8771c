use log::info;
use rayon::prelude::*;
use serde::Serialize;

use fracdesign::design::{parse_design, score};
use fracdesign::measure::{optimize, DEFAULT_MAX_ITER};
use fracdesign::search::{binomial, brute_force_binary_oracle, run_procedure, TraceStep, DEFAULT_ORACLE_BUDGET};
use fracdesign::{Error, ModelMatrices, OptimizerResult, Procedure, ProcedureConfig, ScoringMode, SearchTrace};

use crate::{CliError, ProblemSpec};

/// Relative slack when deciding ties and whether an oracle minimum is attained.
const REL_TOL: f64 = 1e-9;

pub const TIE_RULE: &str = "best per N = largest eff_lb; ties resolved in the order A, B1, B2";

/// Masses below this are omitted from the measure report.
pub const MASS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub scoring: ScoringMode,
    pub max_iter: usize,
    pub oracle_budget: u128,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { scoring: ScoringMode::Direct, max_iter: DEFAULT_MAX_ITER, oracle_budget: DEFAULT_ORACLE_BUDGET }
    }
}

fn scoring_name(mode: ScoringMode) -> &'static str {
    match mode {
        ScoringMode::Direct => "direct",
        ScoringMode::Incremental => "incremental",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Mass {
    pub label: usize,
    pub treatment: String,
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasureReport {
    pub spec: ProblemSpec,
    pub q: usize,
    pub v: usize,
    pub t: f64,
    pub s: f64,
    pub iterations: usize,
    pub terminal_gap: f64,
    pub masses: Vec<Mass>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignCell {
    #[serde(rename = "N")]
    pub n: usize,
    pub procedure: String,
    /// Where the procedure's trace started, e.g. `d(304) rounded`.
    pub start: Option<String>,
    pub design_labels: Option<Vec<usize>>,
    pub eff_lb: Option<f64>,
    pub eff_lb_rho: Option<Vec<f64>>,
    pub is_binary: Option<bool>,
    pub best: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub spec: ProblemSpec,
    pub q: usize,
    pub v: usize,
    pub t: f64,
    pub thresholds: [f64; 2],
    pub s: f64,
    pub scoring: &'static str,
    pub tie_rule: &'static str,
    pub cells: Vec<DesignCell>,
}

impl DesignReport {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    pub fn cell(&self, n: usize, procedure: Procedure) -> Option<&DesignCell> {
        let name = procedure.to_string();
        self.cells.iter().find(|c| c.n == n && c.procedure == name)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateReport {
    pub spec: ProblemSpec,
    pub q: usize,
    pub v: usize,
    pub t: f64,
    pub s: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub design_labels: Vec<usize>,
    pub is_binary: bool,
    pub a_value: f64,
    pub tr_v: f64,
    pub eff_lb: f64,
    pub eff_lb_rho: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCell {
    pub procedure: String,
    pub design_labels: Option<Vec<usize>>,
    pub a_value: Option<f64>,
    /// At `ρ = 0`, then at each `ρ` of the spec.
    pub true_efficiencies: Option<Vec<f64>>,
    pub attains_minima: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub evaluated: u128,
    pub singular: u128,
    pub min_a: f64,
    pub argmin_labels: Vec<usize>,
    /// Minimum of `tr H⁻¹ + ρ (tr V − tr W)` at each `ρ` of the spec.
    pub min_psi: Vec<f64>,
    pub procedures: Vec<OracleCell>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub spec: ProblemSpec,
    pub q: usize,
    pub v: usize,
    pub t: f64,
    pub thresholds: [f64; 2],
    pub s: f64,
    pub trace_w: f64,
    pub budget: u128,
    pub rows: Vec<OracleRow>,
}

fn run_optimizer(spec: &ProblemSpec, mm: &ModelMatrices, opts: &RunOptions) -> Result<OptimizerResult, CliError> {
    let opt = optimize(mm, spec.t, opts.max_iter)?;
    info!("optimal measure: s = {:.6} after {} iterations", opt.s, opt.iterations);
    Ok(opt)
}

/// Optimal design measure with its nonzero masses.
pub fn cmd_optimize_measure(spec: &ProblemSpec, opts: &RunOptions) -> Result<MeasureReport, CliError> {
    let mm = spec.model()?;
    let opt = run_optimizer(spec, &mm, opts)?;
    let space = mm.space();
    let masses = opt
        .p_hat
        .masses()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m >= MASS_FLOOR)
        .map(|(k, &mass)| {
            let t = space.unlabel(k + 1).expect("label in range");
            Mass { label: k + 1, treatment: space.format_treatment(&t), mass }
        })
        .collect();
    Ok(MeasureReport {
        spec: spec.clone(),
        q: mm.q(),
        v: mm.v(),
        t: spec.t,
        s: opt.s,
        iterations: opt.iterations,
        terminal_gap: opt.terminal_gap,
        masses,
    })
}

struct Outcome {
    step: Option<TraceStep>,
    start: Option<String>,
    error: Option<String>,
}

fn config(spec: &ProblemSpec, procedure: Procedure, target_n: usize, opts: &RunOptions) -> ProcedureConfig {
    let hint = match procedure {
        Procedure::A => spec.n1_hint,
        Procedure::B1 => spec.b1_start,
        Procedure::B2 => None,
    };
    ProcedureConfig {
        init_threshold: spec.init_threshold,
        keep_threshold: spec.keep_threshold,
        target_n,
        rho_list: spec.rho.clone(),
        n1_hint: hint,
        scoring: opts.scoring,
    }
}

fn describe_start(trace: &SearchTrace) -> String {
    let first = trace.initial();
    format!("d({}) {}", first.n_runs, first.mv)
}

/// Runs a procedure down to `target_n`, keeping the partial trace of a dead end.
fn trace_to(
    procedure: Procedure,
    target_n: usize,
    spec: &ProblemSpec,
    mm: &ModelMatrices,
    opt: &OptimizerResult,
    opts: &RunOptions,
) -> (Option<SearchTrace>, Option<String>) {
    let cfg = config(spec, procedure, target_n, opts);
    match run_procedure(procedure, &opt.p_hat, opt.s, mm, &cfg) {
        Ok(trace) => (Some(trace), None),
        Err(Error::DeadEnd { n_runs, partial }) => {
            let msg = Error::DeadEnd { n_runs, partial: partial.clone() }.to_string();
            (Some(*partial), Some(msg))
        }
        Err(e) => (None, Some(e.to_string())),
    }
}

/// One outcome per run size in `runs` (ascending). A single trace down to the
/// smallest size serves every size it visits; other sizes get their own trace.
fn procedure_outcomes(
    procedure: Procedure,
    runs: &[usize],
    spec: &ProblemSpec,
    mm: &ModelMatrices,
    opt: &OptimizerResult,
    opts: &RunOptions,
) -> Vec<Outcome> {
    let binary_only = procedure != Procedure::A;
    let eligible: Vec<usize> = runs.iter().copied().filter(|&n| !binary_only || n <= mm.v()).collect();
    let (main, main_err) = match eligible.first() {
        Some(&n) => trace_to(procedure, n, spec, mm, opt, opts),
        None => (None, None),
    };
    runs.iter()
        .map(|&n| {
            if binary_only && n > mm.v() {
                return Outcome {
                    step: None,
                    start: None,
                    error: Some(format!("{procedure} builds binary designs, which have at most v = {} runs", mm.v())),
                };
            }
            if let Some(step) = main.as_ref().and_then(|t| t.at(n)) {
                return Outcome { step: Some(step.clone()), start: main.as_ref().map(describe_start), error: None };
            }
            let visited_below = main.as_ref().is_some_and(|t| t.last().n_runs <= n);
            if Some(&n) == eligible.first() || visited_below {
                // the trace for this size has already failed
                return Outcome { step: None, start: main.as_ref().map(describe_start), error: main_err.clone() };
            }
            match trace_to(procedure, n, spec, mm, opt, opts) {
                (Some(t), err) => match t.at(n) {
                    Some(step) => Outcome { step: Some(step.clone()), start: Some(describe_start(&t)), error: None },
                    None => Outcome { step: None, start: Some(describe_start(&t)), error: err },
                },
                (None, err) => Outcome { step: None, start: None, error: err },
            }
        })
        .collect()
}

/// Grid of outcomes, indexed `[procedure][run size]`.
fn outcome_grid(
    procedures: &[Procedure],
    runs: &[usize],
    spec: &ProblemSpec,
    mm: &ModelMatrices,
    opt: &OptimizerResult,
    opts: &RunOptions,
) -> Vec<Vec<Outcome>> {
    procedures.par_iter().map(|&p| procedure_outcomes(p, runs, spec, mm, opt, opts)).collect()
}

/// Runs the selected procedures at every requested run size.
pub fn cmd_design(spec: &ProblemSpec, opts: &RunOptions) -> Result<DesignReport, CliError> {
    let mm = spec.model()?;
    let runs = spec.checked_runs(mm.q())?;
    let opt = run_optimizer(spec, &mm, opts)?;
    let procedures = spec.procedure.procedures();
    let grid = outcome_grid(&procedures, &runs, spec, &mm, &opt, opts);

    let mut cells = Vec::with_capacity(runs.len() * procedures.len());
    for (j, &n) in runs.iter().enumerate() {
        let row_start = cells.len();
        for (i, &p) in procedures.iter().enumerate() {
            let o = &grid[i][j];
            cells.push(DesignCell {
                n,
                procedure: p.to_string(),
                start: o.start.clone(),
                design_labels: o.step.as_ref().map(|s| s.design.labels()),
                eff_lb: o.step.as_ref().map(|s| s.eff_lb),
                eff_lb_rho: o.step.as_ref().map(|s| s.eff_lb_rho.clone()),
                is_binary: o.step.as_ref().map(|s| s.design.is_binary()),
                best: false,
                error: o.error.clone().or_else(|| o.step.is_none().then(|| "no design".to_string())),
            });
        }
        if procedures.len() > 1 {
            let mut best: Option<(usize, f64)> = None;
            for (idx, c) in cells.iter().enumerate().skip(row_start) {
                if let Some(e) = c.eff_lb {
                    if best.is_none_or(|(_, b)| e > b * (1.0 + REL_TOL)) {
                        best = Some((idx, e));
                    }
                }
            }
            if let Some((idx, _)) = best {
                cells[idx].best = true;
            }
        }
    }
    Ok(DesignReport {
        spec: spec.clone(),
        q: mm.q(),
        v: mm.v(),
        t: spec.t,
        thresholds: [spec.init_threshold, spec.keep_threshold],
        s: opt.s,
        scoring: scoring_name(opts.scoring),
        tie_rule: TIE_RULE,
        cells,
    })
}

/// Scores a user design given as the contents of a design file.
pub fn cmd_evaluate(design_text: &str, spec: &ProblemSpec, opts: &RunOptions) -> Result<EvaluateReport, CliError> {
    let mm = spec.model()?;
    let d = parse_design(design_text, mm.space())?;
    if d.n_runs() < mm.q() + 1 {
        return Err(CliError::Parse(format!(
            "singular design: {} runs cannot keep θ estimable, at least q + 1 = {} runs are necessary",
            d.n_runs(),
            mm.q() + 1
        )));
    }
    let opt = run_optimizer(spec, &mm, opts)?;
    let sc = score(&d, &mm, opt.s, &spec.rho)?;
    Ok(EvaluateReport {
        spec: spec.clone(),
        q: mm.q(),
        v: mm.v(),
        t: spec.t,
        s: opt.s,
        n: d.n_runs(),
        design_labels: d.labels(),
        is_binary: sc.is_binary,
        a_value: sc.a_value,
        tr_v: sc.tr_v,
        eff_lb: sc.eff_lb,
        eff_lb_rho: sc.eff_lb_rho.iter().map(|b| b.value).collect(),
    })
}

/// Exhaustive binary optimum at each run size and the true efficiencies of
/// the selected procedures' designs.
pub fn cmd_oracle(spec: &ProblemSpec, opts: &RunOptions) -> Result<OracleReport, CliError> {
    let mm = spec.model()?;
    let runs = spec.checked_runs(mm.q())?;
    if let Some(&n) = runs.iter().find(|&&n| n > mm.v()) {
        return Err(CliError::Parse(format!("binary designs have at most v = {} runs, asked for {n}", mm.v())));
    }
    for &n in &runs {
        let required = binomial(mm.v(), n).unwrap_or(u128::MAX);
        if required > opts.oracle_budget {
            return Err(CliError::Budget(format!(
                "enumerating N = {n} needs C({}, {n}) = {required} designs, budget is {} (raise it with --budget {required})",
                mm.v(),
                opts.oracle_budget
            )));
        }
    }
    let opt = run_optimizer(spec, &mm, opts)?;
    let procedures = spec.procedure.procedures();
    let grid = outcome_grid(&procedures, &runs, spec, &mm, &opt, opts);
    let trace_w = mm.trace_w();

    let mut rows = Vec::with_capacity(runs.len());
    for (j, &n) in runs.iter().enumerate() {
        let oracle = brute_force_binary_oracle(&mm, n, &spec.rho, opts.oracle_budget)?;
        let min_psi: Vec<f64> = oracle.per_rho.iter().map(|o| o.min_psi).collect();
        let procedures = procedures
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let o = &grid[i][j];
                let Some(step) = &o.step else {
                    return OracleCell {
                        procedure: p.to_string(),
                        design_labels: None,
                        a_value: None,
                        true_efficiencies: None,
                        attains_minima: None,
                        error: o.error.clone().or_else(|| Some("no design".into())),
                    };
                };
                match score(&step.design, &mm, opt.s, &spec.rho) {
                    Ok(sc) => {
                        let psi: Vec<f64> = spec.rho.iter().map(|&r| sc.a_value + r * (sc.tr_v - trace_w)).collect();
                        let mut eff = vec![oracle.min_a / sc.a_value];
                        eff.extend(min_psi.iter().zip(&psi).map(|(m, p)| m / p));
                        let attains = sc.a_value <= oracle.min_a * (1.0 + REL_TOL)
                            && psi.iter().zip(&min_psi).all(|(p, m)| *p <= m * (1.0 + REL_TOL));
                        OracleCell {
                            procedure: p.to_string(),
                            design_labels: Some(step.design.labels()),
                            a_value: Some(sc.a_value),
                            true_efficiencies: Some(eff),
                            attains_minima: Some(attains),
                            error: None,
                        }
                    }
                    Err(e) => OracleCell {
                        procedure: p.to_string(),
                        design_labels: Some(step.design.labels()),
                        a_value: None,
                        true_efficiencies: None,
                        attains_minima: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect();
        rows.push(OracleRow {
            n,
            evaluated: oracle.evaluated,
            singular: oracle.singular,
            min_a: oracle.min_a,
            argmin_labels: oracle.argmin.labels(),
            min_psi,
            procedures,
        });
    }
    Ok(OracleReport {
        spec: spec.clone(),
        q: mm.q(),
        v: mm.v(),
        t: spec.t,
        thresholds: [spec.init_threshold, spec.keep_threshold],
        s: opt.s,
        trace_w,
        budget: opts.oracle_budget,
        rows,
    })
}
