//! Discretization of the optimal measure into exact designs of a target
//! run size.
//!
//! * Procedure A rounds `c·p̂` to a large design with high `eff_lb`, then
//!   walks down one run at a time: the best single deletion is taken when it
//!   keeps `eff_lb` above the keep threshold, otherwise the best
//!   "delete two runs, add one" exchange.
//! * Procedure B1 does the same walk from the full factorial (or from a B2
//!   design) but only ever visits binary designs.
//! * Procedure B2 is pure greedy deletion from the full factorial.
//!
//! Candidates within a step are scored in parallel and reduced in
//! descriptor order, so traces do not depend on thread scheduling.

use std::collections::HashSet;
use std::fmt;

use log::{debug, info};
use rayon::prelude::*;

use crate::design::{raw_information, round_measure, score, ExactDesign};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, DESIGN_PIVOT_TOL};
use crate::measure::DesignMeasure;
use crate::model::ModelMatrices;

pub const DEFAULT_INIT_THRESHOLD: f64 = 0.98;
pub const DEFAULT_KEEP_THRESHOLD: f64 = 0.95;
pub const DEFAULT_ORACLE_BUDGET: u128 = 10_000_000;

/// Scores closer than this (relative) count as tied.
const TIE_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoringMode {
    /// Rebuild `H_d` from the candidate's replication vector.
    #[default]
    Direct,
    /// Update the current design's moment sums with the candidate's changes.
    Incremental,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Procedure {
    A,
    B1,
    B2,
}

impl Procedure {
    pub const ALL: [Procedure; 3] = [Procedure::A, Procedure::B1, Procedure::B2];
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Procedure::A => "A",
            Procedure::B1 => "B1",
            Procedure::B2 => "B2",
        })
    }
}

impl std::str::FromStr for Procedure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Procedure::A),
            "B1" => Ok(Procedure::B1),
            "B2" => Ok(Procedure::B2),
            other => Err(Error::Parse(format!("unknown procedure {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcedureConfig {
    pub init_threshold: f64,
    pub keep_threshold: f64,
    pub target_n: usize,
    pub rho_list: Vec<f64>,
    /// Procedure A: first `N₁` tried when rounding. Procedure B1: size of
    /// the B2 design to start from instead of the full factorial.
    pub n1_hint: Option<usize>,
    pub scoring: ScoringMode,
}

impl ProcedureConfig {
    pub fn new(target_n: usize) -> Self {
        Self {
            init_threshold: DEFAULT_INIT_THRESHOLD,
            keep_threshold: DEFAULT_KEEP_THRESHOLD,
            target_n,
            rho_list: vec![1.0, 5.0],
            n1_hint: None,
            scoring: ScoringMode::Direct,
        }
    }

    pub fn with_n1_hint(mut self, n1: Option<usize>) -> Self {
        self.n1_hint = n1;
        self
    }

    pub fn with_scoring(mut self, scoring: ScoringMode) -> Self {
        self.scoring = scoring;
        self
    }

    pub fn with_rhos(mut self, rhos: Vec<f64>) -> Self {
        self.rho_list = rhos;
        self
    }

    pub fn validate(&self, q: usize) -> Result<()> {
        if !(0.0 < self.keep_threshold && self.keep_threshold <= self.init_threshold && self.init_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < keep_threshold ({}) <= init_threshold ({}) <= 1",
                self.keep_threshold, self.init_threshold
            )));
        }
        if self.target_n < q + 1 {
            return Err(Error::TooFewRuns { n_runs: self.target_n, min: q + 1 });
        }
        if let Some(r) = self.rho_list.iter().find(|r| !(**r >= 0.0)) {
            return Err(Error::InvalidConfig(format!("ρ must be nonnegative, got {r}")));
        }
        Ok(())
    }
}

/// How a trace step was reached. Labels are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Move {
    /// Rounded from the optimal measure with `N₁` runs.
    Rounded,
    FullFactorial,
    /// Binary design produced by greedy deletion (B2).
    GreedyStart,
    DeleteOne {
        label: usize,
    },
    DeleteTwoAddOne {
        deleted: (usize, usize),
        added: usize,
    },
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::Rounded => f.write_str("rounded"),
            Move::FullFactorial => f.write_str("full factorial"),
            Move::GreedyStart => f.write_str("B2 start"),
            Move::DeleteOne { label } => write!(f, "- {label}"),
            Move::DeleteTwoAddOne { deleted: (a, b), added } => write!(f, "+ {added} - ({a}, {b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub n_runs: usize,
    pub mv: Move,
    pub design: ExactDesign,
    pub eff_lb: f64,
    /// In the order of the configuration's `rho_list`.
    pub eff_lb_rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    pub procedure: Procedure,
    pub rho_list: Vec<f64>,
    pub steps: Vec<TraceStep>,
}

impl SearchTrace {
    fn new(procedure: Procedure, rho_list: &[f64]) -> Self {
        Self { procedure, rho_list: rho_list.to_vec(), steps: Vec::new() }
    }

    fn push(&mut self, mm: &ModelMatrices, s: f64, design: ExactDesign, mv: Move) -> Result<()> {
        let sc = score(&design, mm, s, &self.rho_list)?;
        debug!("{} d({}) {mv}: eff_lb = {:.6}", self.procedure, design.n_runs(), sc.eff_lb);
        self.steps.push(TraceStep {
            n_runs: design.n_runs(),
            mv,
            design,
            eff_lb: sc.eff_lb,
            eff_lb_rho: sc.eff_lb_rho.iter().map(|b| b.value).collect(),
        });
        Ok(())
    }

    pub fn last(&self) -> &TraceStep {
        self.steps.last().expect("traces hold at least the initial design")
    }

    pub fn final_design(&self) -> &ExactDesign {
        &self.last().design
    }

    pub fn initial(&self) -> &TraceStep {
        &self.steps[0]
    }

    /// The design with `n` runs visited by the trace.
    pub fn at(&self, n: usize) -> Option<&TraceStep> {
        self.steps.iter().find(|s| s.n_runs == n)
    }
}

/// Compact description of `cur` relative to `prev`, e.g.
/// `d(13) + (40, 67) - 55`.
pub fn describe_change(prev: &ExactDesign, cur: &ExactDesign) -> String {
    let mut added = Vec::new();
    let mut removed = Vec::new();
    for (k, (&a, &b)) in prev.replications().iter().zip(cur.replications()).enumerate() {
        for _ in b..a {
            removed.push(k + 1);
        }
        for _ in a..b {
            added.push(k + 1);
        }
    }
    let group = |v: &[usize]| -> String {
        let items: Vec<String> = v.iter().map(|k| k.to_string()).collect();
        if v.len() == 1 {
            items[0].clone()
        } else {
            format!("({})", items.join(", "))
        }
    };
    let mut out = format!("d({})", prev.n_runs());
    if !added.is_empty() {
        out.push_str(&format!(" + {}", group(&added)));
    }
    if !removed.is_empty() {
        out.push_str(&format!(" - {}", group(&removed)));
    }
    out
}

/// Moment sums of a design used for incremental scoring.
struct Moments<'a> {
    mm: &'a ModelMatrices,
    design: &'a ExactDesign,
    /// `Σ r_k z_k z_kᵀ`, row-major
    second: Vec<f64>,
    /// `Σ r_k z_k`
    first: Vec<f64>,
}

impl<'a> Moments<'a> {
    fn new(design: &'a ExactDesign, mm: &'a ModelMatrices) -> Self {
        let q = mm.q();
        let mut second = vec![0.0; q * q];
        let mut first = vec![0.0; q];
        for (k, &r) in design.replications().iter().enumerate() {
            if r == 0 {
                continue;
            }
            let w = r as f64;
            for &a in mm.support(k) {
                first[a] += w;
                for &b in mm.support(k) {
                    second[a * q + b] += w;
                }
            }
        }
        Self { mm, design, second, first }
    }

    /// `tr H⁻¹` of the design changed by `changes` (0-based index, delta),
    /// or `None` if singular.
    fn a_value(&self, changes: &[(usize, i32)], mode: ScoringMode) -> Option<f64> {
        let q = self.mm.q();
        let h = match mode {
            ScoringMode::Direct => {
                let mut r = self.design.replications().to_vec();
                for &(k, delta) in changes {
                    r[k] = (r[k] as i64 + delta as i64) as u32;
                }
                raw_information(&r, self.mm).1
            }
            ScoringMode::Incremental => {
                let mut second = self.second.clone();
                let mut first = self.first.clone();
                let mut n = self.design.n_runs() as f64;
                for &(k, delta) in changes {
                    let w = delta as f64;
                    n += w;
                    for &a in self.mm.support(k) {
                        first[a] += w;
                        for &b in self.mm.support(k) {
                            second[a * q + b] += w;
                        }
                    }
                }
                for a in 0..q {
                    for b in 0..=a {
                        let x = second[a * q + b] - first[a] * first[b] / n;
                        second[a * q + b] = x;
                        second[b * q + a] = x;
                    }
                }
                second
            }
        };
        Cholesky::factor(&h, q, DESIGN_PIVOT_TOL).map(|c| c.trace_inverse())
    }
}

/// Index of the smallest score, earliest candidate winning near-ties.
fn pick_best(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(a) = *s {
            match best {
                Some((_, b)) if !(a < b * (1.0 - TIE_TOL)) => {}
                _ => best = Some((i, a)),
            }
        }
    }
    best.map(|(i, _)| i)
}

fn apply(d: &ExactDesign, changes: &[(usize, i32)]) -> ExactDesign {
    changes.iter().fold(d.clone(), |acc, &(k, delta)| acc.with_change(k, delta))
}

/// Result of one neighbourhood search.
#[derive(Debug, Clone, PartialEq)]
pub struct BestMove {
    pub design: ExactDesign,
    pub eff_lb: f64,
    pub mv: Move,
}

fn min_runs_check(d: &ExactDesign, mm: &ModelMatrices) -> Result<()> {
    if d.n_runs() < mm.q() + 2 {
        return Err(Error::TooFewRuns { n_runs: d.n_runs() - 1, min: mm.q() + 1 });
    }
    Ok(())
}

/// Best design obtained by deleting one run; ties go to the smallest label.
pub fn best_delete_one(d: &ExactDesign, mm: &ModelMatrices, s: f64, mode: ScoringMode) -> Result<BestMove> {
    min_runs_check(d, mm)?;
    let moments = Moments::new(d, mm);
    let candidates: Vec<usize> = (0..d.v()).filter(|&k| d.replications()[k] > 0).collect();
    let scores: Vec<Option<f64>> = candidates.par_iter().map(|&k| moments.a_value(&[(k, -1)], mode)).collect();
    let i = pick_best(&scores).ok_or_else(|| dead_end(d.n_runs() - 1, None))?;
    let k = candidates[i];
    let design = d.with_change(k, -1);
    let eff_lb = s / (design.n_runs() as f64 * scores[i].unwrap());
    Ok(BestMove { design, eff_lb, mv: Move::DeleteOne { label: k + 1 } })
}

/// Best design obtained by deleting two runs and adding one treatment.
/// With `binary_only`, additions that would replicate a treatment are
/// skipped. Ties go to the smallest `(first deleted, second deleted,
/// added)` descriptor; candidates yielding the same design are scored once.
pub fn best_delete_two_add_one(
    d: &ExactDesign,
    mm: &ModelMatrices,
    s: f64,
    binary_only: bool,
    mode: ScoringMode,
) -> Result<BestMove> {
    min_runs_check(d, mm)?;
    let r = d.replications();
    let present: Vec<usize> = (0..d.v()).filter(|&k| r[k] > 0).collect();
    let mut pairs = Vec::new();
    for (x, &i) in present.iter().enumerate() {
        if r[i] >= 2 {
            pairs.push((i, i));
        }
        for &j in &present[x + 1..] {
            pairs.push((i, j));
        }
    }
    // (descriptor, net change)
    let mut candidates: Vec<((usize, usize, usize), Vec<(usize, i32)>)> = Vec::new();
    let mut net_deletions = HashSet::new();
    for &(i, j) in &pairs {
        for c in 0..d.v() {
            let after = r[c] as i64 - (c == i) as i64 - (c == j) as i64 + 1;
            if binary_only && after >= 2 {
                continue;
            }
            let changes = if c == i || c == j {
                let other = if c == i { j } else { i };
                if !net_deletions.insert(other) {
                    continue;
                }
                vec![(other, -1)]
            } else if i == j {
                vec![(i, -2), (c, 1)]
            } else {
                vec![(i, -1), (j, -1), (c, 1)]
            };
            candidates.push(((i, j, c), changes));
        }
    }
    let moments = Moments::new(d, mm);
    let scores: Vec<Option<f64>> = candidates.par_iter().map(|(_, ch)| moments.a_value(ch, mode)).collect();
    let best = pick_best(&scores).ok_or_else(|| dead_end(d.n_runs() - 1, None))?;
    let ((i, j, c), changes) = &candidates[best];
    let design = apply(d, changes);
    let eff_lb = s / (design.n_runs() as f64 * scores[best].unwrap());
    Ok(BestMove { design, eff_lb, mv: Move::DeleteTwoAddOne { deleted: (i + 1, j + 1), added: c + 1 } })
}

fn dead_end(n_runs: usize, partial: Option<SearchTrace>) -> Error {
    Error::DeadEnd {
        n_runs,
        partial: Box::new(partial.unwrap_or(SearchTrace { procedure: Procedure::A, rho_list: vec![], steps: vec![] })),
    }
}

fn with_partial(err: Error, trace: &SearchTrace) -> Error {
    match err {
        Error::DeadEnd { n_runs, .. } => dead_end(n_runs, Some(trace.clone())),
        other => other,
    }
}

/// Shared step II of procedures A and B1.
fn descend(
    mut trace: SearchTrace,
    mm: &ModelMatrices,
    s: f64,
    cfg: &ProcedureConfig,
    binary_only: bool,
) -> Result<SearchTrace> {
    while trace.last().n_runs > cfg.target_n {
        let current = trace.final_design().clone();
        let deletion = match best_delete_one(&current, mm, s, cfg.scoring) {
            Ok(m) => Some(m),
            Err(Error::DeadEnd { .. }) => None,
            Err(e) => return Err(e),
        };
        let chosen = match deletion {
            Some(m) if m.eff_lb >= cfg.keep_threshold => m,
            _ => best_delete_two_add_one(&current, mm, s, binary_only, cfg.scoring)
                .map_err(|e| with_partial(e, &trace))?,
        };
        trace.push(mm, s, chosen.design, chosen.mv)?;
    }
    Ok(trace)
}

fn check_target(mm: &ModelMatrices, cfg: &ProcedureConfig) -> Result<()> {
    cfg.validate(mm.q())?;
    if cfg.target_n > mm.v() {
        return Err(Error::InvalidConfig(format!(
            "binary designs have at most v = {} runs, target is {}",
            mm.v(),
            cfg.target_n
        )));
    }
    Ok(())
}

/// Number of `N₁` values tried by procedure A before giving up, per treatment.
const N1_SCAN_PER_TREATMENT: usize = 20;

/// Procedure A.
pub fn procedure_a(p_hat: &DesignMeasure, s: f64, mm: &ModelMatrices, cfg: &ProcedureConfig) -> Result<SearchTrace> {
    cfg.validate(mm.q())?;
    if p_hat.len() != mm.v() {
        return Err(Error::InvalidMeasure(format!("measure has {} masses, model has v = {}", p_hat.len(), mm.v())));
    }
    let from = cfg.n1_hint.unwrap_or_else(|| (2 * mm.v()).max(cfg.target_n + 1)).max(cfg.target_n);
    let to = from + N1_SCAN_PER_TREATMENT * mm.v();
    let mut start = None;
    for n1 in from..=to {
        match round_measure(p_hat, n1, mm) {
            Ok(d) => {
                let e = crate::design::eff_lb(&d, mm, s)?;
                if e >= cfg.init_threshold {
                    info!("procedure A starts from d({n1}) with eff_lb = {e:.4}");
                    start = Some(d);
                    break;
                }
            }
            Err(Error::NoValidScale { .. } | Error::SingularDesign { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let start = start.ok_or(Error::NoInitialDesign { threshold: cfg.init_threshold, from, to })?;
    let mut trace = SearchTrace::new(Procedure::A, &cfg.rho_list);
    trace.push(mm, s, start, Move::Rounded)?;
    descend(trace, mm, s, cfg, false)
}

/// Procedure B1.
pub fn procedure_b1(mm: &ModelMatrices, s: f64, cfg: &ProcedureConfig) -> Result<SearchTrace> {
    check_target(mm, cfg)?;
    let mut trace = SearchTrace::new(Procedure::B1, &cfg.rho_list);
    match cfg.n1_hint.filter(|&n1| n1 < mm.v()) {
        Some(n1) => {
            let n1 = n1.max(cfg.target_n);
            let b2 = procedure_b2(mm, s, &ProcedureConfig { target_n: n1, n1_hint: None, ..cfg.clone() })?;
            let last = b2.last();
            if last.eff_lb < cfg.init_threshold {
                return Err(Error::NoInitialDesign { threshold: cfg.init_threshold, from: n1, to: n1 });
            }
            info!("procedure B1 starts from the B2 design d({n1}) with eff_lb = {:.4}", last.eff_lb);
            trace.push(mm, s, last.design.clone(), Move::GreedyStart)?;
        }
        None => trace.push(mm, s, ExactDesign::full_factorial(mm.v()), Move::FullFactorial)?,
    }
    descend(trace, mm, s, cfg, true)
}

/// Procedure B2.
pub fn procedure_b2(mm: &ModelMatrices, s: f64, cfg: &ProcedureConfig) -> Result<SearchTrace> {
    check_target(mm, cfg)?;
    let mut trace = SearchTrace::new(Procedure::B2, &cfg.rho_list);
    trace.push(mm, s, ExactDesign::full_factorial(mm.v()), Move::FullFactorial)?;
    while trace.last().n_runs > cfg.target_n {
        let m = best_delete_one(trace.final_design(), mm, s, cfg.scoring).map_err(|e| with_partial(e, &trace))?;
        trace.push(mm, s, m.design, m.mv)?;
    }
    Ok(trace)
}

pub fn run_procedure(
    procedure: Procedure,
    p_hat: &DesignMeasure,
    s: f64,
    mm: &ModelMatrices,
    cfg: &ProcedureConfig,
) -> Result<SearchTrace> {
    match procedure {
        Procedure::A => procedure_a(p_hat, s, mm, cfg),
        Procedure::B1 => procedure_b1(mm, s, cfg),
        Procedure::B2 => procedure_b2(mm, s, cfg),
    }
}

/// Exhaustive minimum over binary designs of one run size.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub n_runs: usize,
    pub evaluated: u128,
    pub singular: u128,
    pub min_a: f64,
    pub argmin: ExactDesign,
    pub per_rho: Vec<OracleRho>,
    pub trace_w: f64,
}

/// Minimum of `tr H⁻¹ + ρ (tr V − tr W)`, i.e. `ψ_d / σ²`, over binary designs.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRho {
    pub rho: f64,
    pub min_psi: f64,
    pub argmin: ExactDesign,
}

impl OracleResult {
    /// True efficiencies of a binary design with `tr H⁻¹ = a` at `ρ = 0`
    /// followed by each oracle `ρ`.
    pub fn true_efficiencies(&self, a: f64) -> Vec<f64> {
        std::iter::once(self.min_a / a)
            .chain(self.per_rho.iter().map(|o| o.min_psi / (a + o.rho * (a - self.trace_w))))
            .collect()
    }
}

pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

#[derive(Clone)]
struct Best {
    value: f64,
    subset: Vec<usize>,
}

impl Best {
    fn empty() -> Self {
        Self { value: f64::INFINITY, subset: Vec::new() }
    }

    fn offer(&mut self, value: f64, subset: &[usize]) {
        if value < self.value * (1.0 - TIE_TOL) {
            self.value = value;
            self.subset = subset.to_vec();
        }
    }

    fn merge(mut self, other: Best) -> Best {
        // `self` covers lexicographically earlier subsets
        if other.value < self.value * (1.0 - TIE_TOL) {
            self = other;
        }
        self
    }
}

struct Enumerator<'a> {
    mm: &'a ModelMatrices,
    n: usize,
    rhos: &'a [f64],
    trace_w: f64,
    q: usize,
}

struct Tally {
    evaluated: u128,
    singular: u128,
    best_a: Best,
    best_rho: Vec<Best>,
}

impl Tally {
    fn new(n_rho: usize) -> Self {
        Self { evaluated: 0, singular: 0, best_a: Best::empty(), best_rho: vec![Best::empty(); n_rho] }
    }

    fn merge(self, other: Tally) -> Tally {
        Tally {
            evaluated: self.evaluated + other.evaluated,
            singular: self.singular + other.singular,
            best_a: self.best_a.merge(other.best_a),
            best_rho: self.best_rho.into_iter().zip(other.best_rho).map(|(a, b)| a.merge(b)).collect(),
        }
    }
}

impl Enumerator<'_> {
    fn add(&self, index: usize, second: &mut [f64], first: &mut [f64]) {
        let q = self.q;
        for &a in self.mm.support(index) {
            first[a] += 1.0;
            for &b in self.mm.support(index) {
                second[a * q + b] += 1.0;
            }
        }
    }

    fn recurse(&self, subset: &mut Vec<usize>, next: usize, second: &[f64], first: &[f64], tally: &mut Tally) {
        let q = self.q;
        if subset.len() == self.n {
            tally.evaluated += 1;
            let n = self.n as f64;
            let mut h = second.to_vec();
            for a in 0..q {
                for b in 0..q {
                    h[a * q + b] -= first[a] * first[b] / n;
                }
            }
            match Cholesky::factor(&h, q, DESIGN_PIVOT_TOL) {
                Some(c) => {
                    let a = c.trace_inverse();
                    tally.best_a.offer(a, subset);
                    for (best, &rho) in tally.best_rho.iter_mut().zip(self.rhos) {
                        // binary designs have V_d = H_d⁻¹
                        best.offer(a + rho * (a - self.trace_w), subset);
                    }
                }
                None => tally.singular += 1,
            }
            return;
        }
        let remaining = self.n - subset.len();
        let v = self.mm.v();
        for k in next..=(v - remaining) {
            let mut s2 = second.to_vec();
            let mut s1 = first.to_vec();
            self.add(k, &mut s2, &mut s1);
            subset.push(k);
            self.recurse(subset, k + 1, &s2, &s1, tally);
            subset.pop();
        }
    }
}

/// Enumerates every binary design with `n` runs.
pub fn brute_force_binary_oracle(mm: &ModelMatrices, n: usize, rhos: &[f64], budget: u128) -> Result<OracleResult> {
    let v = mm.v();
    let q = mm.q();
    if n < q + 1 {
        return Err(Error::TooFewRuns { n_runs: n, min: q + 1 });
    }
    if n > v {
        return Err(Error::InvalidConfig(format!("binary designs have at most v = {v} runs, asked for {n}")));
    }
    let required = binomial(v, n).unwrap_or(u128::MAX);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let en = Enumerator { mm, n, rhos, trace_w: mm.trace_w(), q };
    let tally = (0..=(v - n))
        .into_par_iter()
        .map(|first_index| {
            let mut tally = Tally::new(rhos.len());
            let mut second = vec![0.0; q * q];
            let mut first = vec![0.0; q];
            en.add(first_index, &mut second, &mut first);
            let mut subset = vec![first_index];
            en.recurse(&mut subset, first_index + 1, &second, &first, &mut tally);
            tally
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Tally::new(rhos.len()), Tally::merge);
    if tally.best_a.subset.is_empty() {
        return Err(Error::SingularDesign { n_runs: n });
    }
    let to_design = |subset: &[usize]| {
        ExactDesign::from_labels(v, &subset.iter().map(|k| k + 1).collect::<Vec<_>>()).expect("subset labels are valid")
    };
    Ok(OracleResult {
        n_runs: n,
        evaluated: tally.evaluated,
        singular: tally.singular,
        min_a: tally.best_a.value,
        argmin: to_design(&tally.best_a.subset),
        per_rho: tally
            .best_rho
            .iter()
            .zip(rhos)
            .map(|(b, &rho)| OracleRho { rho, min_psi: b.value, argmin: to_design(&b.subset) })
            .collect(),
        trace_w: mm.trace_w(),
    })
}
