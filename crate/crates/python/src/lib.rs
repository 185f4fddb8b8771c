//! Python bindings: build a model, optimize the design measure, run the
//! search procedures, score designs and enumerate small cases exhaustively.

use fracdesign::design::{round_measure, score};
use fracdesign::measure::{optimize, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
use fracdesign::search::{brute_force_binary_oracle, run_procedure, DEFAULT_ORACLE_BUDGET};
use fracdesign::{
    DesignMeasure, Error, ExactDesign, FactorialSpace, ModelMatrices, Procedure, ProcedureConfig, RequirementSet,
    ScoringMode,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::SingularMatrix
        | Error::SingularDesign { .. }
        | Error::NonConvergence { .. }
        | Error::NoValidScale { .. }
        | Error::DeadEnd { .. }
        | Error::BudgetExceeded { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Result of the multiplicative algorithm.
#[pyclass(frozen, get_all)]
struct Optimum {
    masses: Vec<f64>,
    s: f64,
    iterations: usize,
    terminal_gap: f64,
}

#[pymethods]
impl Optimum {
    fn __repr__(&self) -> String {
        format!("Optimum(s={}, iterations={})", self.s, self.iterations)
    }
}

/// Efficiency lower bounds of one exact design.
#[pyclass(frozen, get_all)]
struct Score {
    n_runs: usize,
    a_value: f64,
    eff_lb: f64,
    rhos: Vec<f64>,
    eff_lb_rho: Vec<f64>,
    is_binary: bool,
    tr_v: f64,
}

#[pymethods]
impl Score {
    fn __repr__(&self) -> String {
        format!("Score(n_runs={}, eff_lb={:.6}, eff_lb_rho={:?})", self.n_runs, self.eff_lb, self.eff_lb_rho)
    }
}

/// One design visited by a search procedure.
#[pyclass(frozen, get_all)]
struct Step {
    n_runs: usize,
    #[pyo3(name = "move")]
    mv: String,
    labels: Vec<usize>,
    eff_lb: f64,
    eff_lb_rho: Vec<f64>,
}

#[pymethods]
impl Step {
    fn __repr__(&self) -> String {
        format!("Step(n_runs={}, move={:?}, eff_lb={:.6})", self.n_runs, self.mv, self.eff_lb)
    }
}

/// Exhaustive minima over binary designs of one run size.
#[pyclass(frozen, get_all)]
struct Oracle {
    n_runs: usize,
    evaluated: u128,
    singular: u128,
    min_a: f64,
    argmin: Vec<usize>,
    rhos: Vec<f64>,
    min_psi: Vec<f64>,
    trace_w: f64,
}

#[pymethods]
impl Oracle {
    /// Efficiencies of a binary design with `tr H⁻¹ = a_value`, at ρ = 0 and each oracle ρ.
    fn true_efficiencies(&self, a_value: f64) -> Vec<f64> {
        std::iter::once(self.min_a / a_value)
            .chain(self.rhos.iter().zip(&self.min_psi).map(|(r, m)| m / (a_value + r * (a_value - self.trace_w))))
            .collect()
    }
}

/// A factorial with its requirement set, e.g. `Model([2, 2, 3], "1;2;3;1x3")`.
#[pyclass(frozen)]
struct Model {
    mm: ModelMatrices,
}

impl Model {
    fn design(&self, labels: Vec<usize>) -> PyResult<ExactDesign> {
        ExactDesign::from_labels(self.mm.v(), &labels).map_err(to_py)
    }
}

#[pymethods]
impl Model {
    #[new]
    fn new(levels: Vec<usize>, effects: &str) -> PyResult<Self> {
        let space = FactorialSpace::new(levels).map_err(to_py)?;
        let reqs = RequirementSet::parse(&space, effects).map_err(to_py)?;
        Ok(Self { mm: ModelMatrices::build(&space, &reqs).map_err(to_py)? })
    }

    #[getter]
    fn q(&self) -> usize {
        self.mm.q()
    }

    #[getter]
    fn v(&self) -> usize {
        self.mm.v()
    }

    #[getter]
    fn trace_w(&self) -> f64 {
        self.mm.trace_w()
    }

    fn label(&self, treatment: Vec<usize>) -> PyResult<usize> {
        self.mm.space().label(&treatment).map_err(to_py)
    }

    fn unlabel(&self, label: usize) -> PyResult<Vec<usize>> {
        self.mm.space().unlabel(label).map_err(to_py)
    }

    #[pyo3(signature = (tolerance = DEFAULT_TOLERANCE, max_iter = DEFAULT_MAX_ITER))]
    fn optimize(&self, py: Python<'_>, tolerance: f64, max_iter: usize) -> PyResult<Optimum> {
        let r = py.detach(|| optimize(&self.mm, tolerance, max_iter)).map_err(to_py)?;
        Ok(Optimum {
            masses: r.p_hat.masses().to_vec(),
            s: r.s,
            iterations: r.iterations,
            terminal_gap: r.terminal_gap,
        })
    }

    /// Rounds a design measure to an exact design with `n_runs` runs.
    fn round(&self, masses: Vec<f64>, n_runs: usize) -> PyResult<Vec<usize>> {
        let p = DesignMeasure::new(masses).map_err(to_py)?;
        Ok(round_measure(&p, n_runs, &self.mm).map_err(to_py)?.labels())
    }

    /// Scores a design given by its run labels (repeats are replications).
    #[pyo3(signature = (labels, s, rhos = vec![1.0, 5.0]))]
    fn score(&self, labels: Vec<usize>, s: f64, rhos: Vec<f64>) -> PyResult<Score> {
        let d = self.design(labels)?;
        let sc = score(&d, &self.mm, s, &rhos).map_err(to_py)?;
        Ok(Score {
            n_runs: sc.n_runs,
            a_value: sc.a_value,
            eff_lb: sc.eff_lb,
            eff_lb_rho: sc.eff_lb_rho.iter().map(|b| b.value).collect(),
            rhos,
            is_binary: sc.is_binary,
            tr_v: sc.tr_v,
        })
    }

    /// Runs procedure `"A"`, `"B1"` or `"B2"` down to `target_n` runs and returns the trace.
    #[pyo3(signature = (procedure, target_n, optimum, rhos = vec![1.0, 5.0], n1_hint = None, incremental = false))]
    fn search(
        &self,
        py: Python<'_>,
        procedure: &str,
        target_n: usize,
        optimum: &Optimum,
        rhos: Vec<f64>,
        n1_hint: Option<usize>,
        incremental: bool,
    ) -> PyResult<Vec<Step>> {
        let procedure: Procedure = procedure.parse().map_err(to_py)?;
        let p_hat = DesignMeasure::new(optimum.masses.clone()).map_err(to_py)?;
        let scoring = if incremental { ScoringMode::Incremental } else { ScoringMode::Direct };
        let cfg = ProcedureConfig::new(target_n).with_rhos(rhos).with_n1_hint(n1_hint).with_scoring(scoring);
        let trace = py.detach(|| run_procedure(procedure, &p_hat, optimum.s, &self.mm, &cfg)).map_err(to_py)?;
        Ok(trace
            .steps
            .into_iter()
            .map(|s| Step {
                n_runs: s.n_runs,
                mv: s.mv.to_string(),
                labels: s.design.labels(),
                eff_lb: s.eff_lb,
                eff_lb_rho: s.eff_lb_rho,
            })
            .collect())
    }

    /// Enumerates every binary design with `n_runs` runs, refusing beyond `budget` designs.
    #[pyo3(signature = (n_runs, rhos = vec![1.0, 5.0], budget = DEFAULT_ORACLE_BUDGET))]
    fn oracle(&self, py: Python<'_>, n_runs: usize, rhos: Vec<f64>, budget: u128) -> PyResult<Oracle> {
        let r = py.detach(|| brute_force_binary_oracle(&self.mm, n_runs, &rhos, budget)).map_err(to_py)?;
        Ok(Oracle {
            n_runs: r.n_runs,
            evaluated: r.evaluated,
            singular: r.singular,
            min_a: r.min_a,
            argmin: r.argmin.labels(),
            rhos: r.per_rho.iter().map(|o| o.rho).collect(),
            min_psi: r.per_rho.iter().map(|o| o.min_psi).collect(),
            trace_w: r.trace_w,
        })
    }

    fn __repr__(&self) -> String {
        format!("Model(levels={:?}, q={}, v={})", self.mm.space().levels(), self.mm.q(), self.mm.v())
    }
}

#[pymodule]
fn fracdesign_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Optimum>()?;
    m.add_class::<Score>()?;
    m.add_class::<Step>()?;
    m.add_class::<Oracle>()?;
    Ok(())
}
