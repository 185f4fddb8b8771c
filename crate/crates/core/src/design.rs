//! Exact N-run designs and their scores.
//!
//! An exact design is a replication vector `r_d` over the `v` treatment
//! combinations. Its information matrix for θ is `H_d = Zᵀ Δ(r_d) Z`, the
//! efficiency lower bound relative to the optimal measure is
//! `s / (N tr H_d⁻¹)`, and under model misspecification with
//! `ρ = δ²/σ²` the bound becomes
//!
//! ```text
//! [(1 + ρ) s/N − ρ tr W] / [tr H_d⁻¹ + ρ (tr V_d − tr W)]
//! ```
//!
//! with `V_d = H_d⁻¹ Zᵀ Δ(r_d) Δ(r_d) Z H_d⁻¹`.

use std::fmt::Write as _;

use log::{debug, warn};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, DESIGN_PIVOT_TOL};
use crate::measure::{info_of_measure, DesignMeasure};
use crate::model::{FactorialSpace, ModelMatrices};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExactDesign {
    replications: Vec<u32>,
    n_runs: usize,
}

impl ExactDesign {
    pub fn new(replications: Vec<u32>) -> Result<Self> {
        let n_runs: usize = replications.iter().map(|&r| r as usize).sum();
        if n_runs == 0 {
            return Err(Error::InvalidDesign("a design needs at least one run".into()));
        }
        Ok(Self { replications, n_runs })
    }

    /// Design from a multiset of 1-based labels.
    pub fn from_labels(v: usize, labels: &[usize]) -> Result<Self> {
        let mut r = vec![0u32; v];
        for &k in labels {
            if k == 0 || k > v {
                return Err(Error::LabelOutOfRange { label: k, v });
            }
            r[k - 1] += 1;
        }
        Self::new(r)
    }

    /// Every treatment once.
    pub fn full_factorial(v: usize) -> Self {
        Self { replications: vec![1; v], n_runs: v }
    }

    pub fn replications(&self) -> &[u32] {
        &self.replications
    }

    pub fn n_runs(&self) -> usize {
        self.n_runs
    }

    pub fn v(&self) -> usize {
        self.replications.len()
    }

    pub fn is_binary(&self) -> bool {
        self.replications.iter().all(|&r| r <= 1)
    }

    /// Runs as 1-based labels in increasing order, repeated by replication.
    pub fn labels(&self) -> Vec<usize> {
        self.replications.iter().enumerate().flat_map(|(i, &r)| std::iter::repeat_n(i + 1, r as usize)).collect()
    }

    /// `N⁻¹ r_d`.
    pub fn measure(&self) -> DesignMeasure {
        let n = self.n_runs as f64;
        DesignMeasure::new(self.replications.iter().map(|&r| r as f64 / n).collect())
            .expect("replications of a valid design normalize")
    }

    pub(crate) fn with_change(&self, index: usize, delta: i32) -> Self {
        let mut r = self.replications.clone();
        r[index] = (r[index] as i64 + delta as i64) as u32;
        let n_runs = (self.n_runs as i64 + delta as i64) as usize;
        Self { replications: r, n_runs }
    }

    fn check_model(&self, mm: &ModelMatrices) -> Result<()> {
        if self.v() != mm.v() {
            return Err(Error::InvalidDesign(format!(
                "design covers {} treatments, model has v = {}",
                self.v(),
                mm.v()
            )));
        }
        Ok(())
    }
}

/// `Σ r_k z_k` and `H_d` (row-major) built from the support of the design.
pub(crate) fn raw_information(r: &[u32], mm: &ModelMatrices) -> (Vec<f64>, Vec<f64>) {
    let q = mm.q();
    let mut sum = vec![0.0; q];
    let mut h = vec![0.0; q * q];
    let mut n = 0.0;
    for (k, &rk) in r.iter().enumerate() {
        if rk == 0 {
            continue;
        }
        let w = rk as f64;
        n += w;
        let sup = mm.support(k);
        for &a in sup {
            sum[a] += w;
            for &b in sup {
                h[a * q + b] += w;
            }
        }
    }
    for a in 0..q {
        for b in 0..q {
            h[a * q + b] -= sum[a] * sum[b] / n;
        }
    }
    for a in 0..q {
        for b in 0..a {
            let s = 0.5 * (h[a * q + b] + h[b * q + a]);
            h[a * q + b] = s;
            h[b * q + a] = s;
        }
    }
    (sum, h)
}

/// `H_d = Zᵀ Δ(r_d) Z`.
pub fn info_of_design(d: &ExactDesign, mm: &ModelMatrices) -> Result<DMatrix<f64>> {
    d.check_model(mm)?;
    let (_, h) = raw_information(d.replications(), mm);
    Ok(DMatrix::from_row_slice(mm.q(), mm.q(), &h))
}

fn factor_design(d: &ExactDesign, mm: &ModelMatrices) -> Result<(Vec<f64>, Cholesky)> {
    d.check_model(mm)?;
    let (sum, h) = raw_information(d.replications(), mm);
    let chol = Cholesky::factor(&h, mm.q(), DESIGN_PIVOT_TOL).ok_or(Error::SingularDesign { n_runs: d.n_runs() })?;
    Ok((sum, chol))
}

/// `tr(H_d⁻¹)`, the A-criterion value of `d`.
pub fn a_value(d: &ExactDesign, mm: &ModelMatrices) -> Result<f64> {
    Ok(factor_design(d, mm)?.1.trace_inverse())
}

/// `s / (N tr H_d⁻¹)`.
pub fn eff_lb(d: &ExactDesign, mm: &ModelMatrices, s: f64) -> Result<f64> {
    Ok(s / (d.n_runs() as f64 * a_value(d, mm)?))
}

/// `V_d = H_d⁻¹ Zᵀ Δ(r_d) Δ(r_d) Z H_d⁻¹`.
pub fn v_matrix(d: &ExactDesign, mm: &ModelMatrices) -> Result<DMatrix<f64>> {
    let (sum, chol) = factor_design(d, mm)?;
    let q = mm.q();
    let h_inv = chol.inverse();
    let middle = DMatrix::from_row_slice(q, q, &squared_centering(d, mm, &sum));
    let v = &h_inv * middle * &h_inv;
    Ok((&v + v.transpose()) * 0.5)
}

/// `Zᵀ Δ(r)Δ(r) Z = Σ_k r_k² (z_k − z̄)(z_k − z̄)ᵀ` with `z̄ = Zᵀr / N`.
fn squared_centering(d: &ExactDesign, mm: &ModelMatrices, sum: &[f64]) -> Vec<f64> {
    let q = mm.q();
    let n = d.n_runs() as f64;
    let mut out = vec![0.0; q * q];
    let mut e = vec![0.0; q];
    for (k, &rk) in d.replications().iter().enumerate() {
        if rk == 0 {
            continue;
        }
        e.iter_mut().zip(sum).for_each(|(x, s)| *x = -s / n);
        for &c in mm.support(k) {
            e[c] += 1.0;
        }
        let w = (rk as f64).powi(2);
        for a in 0..q {
            for b in 0..q {
                out[a * q + b] += w * e[a] * e[b];
            }
        }
    }
    out
}

/// `tr(H_d⁻¹)` and `tr(V_d)` from one factorization.
fn traces(d: &ExactDesign, mm: &ModelMatrices) -> Result<(f64, f64)> {
    let (sum, chol) = factor_design(d, mm)?;
    let q = mm.q();
    let n = d.n_runs() as f64;
    let a = chol.trace_inverse();
    if d.is_binary() {
        return Ok((a, a));
    }
    // tr V = Σ r_k² ‖H⁻¹ (z_k − z̄)‖²
    let mut tv = 0.0;
    let mut e = vec![0.0; q];
    for (k, &rk) in d.replications().iter().enumerate() {
        if rk == 0 {
            continue;
        }
        e.iter_mut().zip(&sum).for_each(|(x, s)| *x = -s / n);
        for &c in mm.support(k) {
            e[c] += 1.0;
        }
        chol.solve_in_place(&mut e);
        tv += (rk as f64).powi(2) * e.iter().map(|x| x * x).sum::<f64>();
    }
    Ok((a, tv))
}

/// Efficiency lower bound at one value of `ρ = δ²/σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoBound {
    pub rho: f64,
    pub value: f64,
    /// `false` when the numerator is negative and the bound says nothing.
    pub informative: bool,
}

fn rho_bound(a: f64, tr_v: f64, n: usize, s: f64, trace_w: f64, rho: f64) -> RhoBound {
    let numerator = (1.0 + rho) * s / n as f64 - rho * trace_w;
    let value = numerator / (a + rho * (tr_v - trace_w));
    RhoBound { rho, value, informative: numerator >= 0.0 }
}

/// Robust efficiency lower bound `eff_lb(ρ)`.
pub fn eff_lb_rho(d: &ExactDesign, mm: &ModelMatrices, s: f64, rho: f64) -> Result<RhoBound> {
    if !(rho >= 0.0) {
        return Err(Error::InvalidConfig(format!("ρ must be nonnegative, got {rho}")));
    }
    let (a, tv) = traces(d, mm)?;
    let b = rho_bound(a, tv, d.n_runs(), s, mm.trace_w(), rho);
    if !b.informative {
        warn!("eff_lb({rho}) numerator is negative for the {}-run design; bound is uninformative", d.n_runs());
    }
    Ok(b)
}

/// Minimax expected trace of the MSE matrix:
/// `σ² tr(H_d⁻¹) + δ² (tr V_d − tr W)`.
pub fn psi(d: &ExactDesign, mm: &ModelMatrices, sigma2: f64, delta2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) || !(delta2 >= 0.0) {
        return Err(Error::InvalidConfig(format!("need σ² > 0 and δ² ≥ 0, got {sigma2}, {delta2}")));
    }
    let (a, tv) = traces(d, mm)?;
    Ok(sigma2 * a + delta2 * (tv - mm.trace_w()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignScore {
    pub n_runs: usize,
    pub a_value: f64,
    pub eff_lb: f64,
    pub eff_lb_rho: Vec<RhoBound>,
    pub is_binary: bool,
    pub tr_v: f64,
}

impl DesignScore {
    pub fn rho_value(&self, rho: f64) -> Option<f64> {
        self.eff_lb_rho.iter().find(|b| b.rho == rho).map(|b| b.value)
    }
}

/// All scores of `d` in one pass.
pub fn score(d: &ExactDesign, mm: &ModelMatrices, s: f64, rhos: &[f64]) -> Result<DesignScore> {
    if let Some(r) = rhos.iter().find(|r| !(**r >= 0.0)) {
        return Err(Error::InvalidConfig(format!("ρ must be nonnegative, got {r}")));
    }
    let (a, tv) = traces(d, mm)?;
    let n = d.n_runs();
    let eff_lb_rho = rhos
        .iter()
        .map(|&rho| {
            let b = rho_bound(a, tv, n, s, mm.trace_w(), rho);
            if !b.informative {
                debug!("eff_lb({rho}) numerator is negative for the {n}-run design; bound is uninformative");
            }
            b
        })
        .collect();
    Ok(DesignScore {
        n_runs: n,
        a_value: a,
        eff_lb: s / (n as f64 * a),
        eff_lb_rho,
        is_binary: d.is_binary(),
        tr_v: tv,
    })
}

/// Cross-check helper: `N · M(N⁻¹ r_d)`.
pub fn info_via_measure(d: &ExactDesign, mm: &ModelMatrices) -> Result<DMatrix<f64>> {
    Ok(info_of_measure(&d.measure(), mm)? * d.n_runs() as f64)
}

/// Rounds `c·p̂` to the nearest integers for the smallest `c > 0` whose
/// rounded masses sum to exactly `n_runs`.
///
/// The rounded total is a step function of `c` that only changes where some
/// `c·p̂_k` crosses a half-integer, so testing the midpoint of every interval
/// between consecutive crossings decides whether such a `c` exists.
pub fn round_measure(p_hat: &DesignMeasure, n_runs: usize, mm: &ModelMatrices) -> Result<ExactDesign> {
    let q = mm.q();
    if n_runs < q + 1 {
        return Err(Error::TooFewRuns { n_runs, min: q + 1 });
    }
    let (c, d) = scale_and_round(p_hat.masses(), n_runs).ok_or(Error::NoValidScale { n_runs })?;
    debug!("rounding to {n_runs} runs with c = {c}");
    let d = ExactDesign::new(d)?;
    factor_design(&d, mm)?;
    Ok(d)
}

fn scale_and_round(p: &[f64], n_runs: usize) -> Option<(f64, Vec<u32>)> {
    // round(c p_k) ≥ c p_k − 1/2, so the total exceeds n_runs beyond this c
    let c_max = n_runs as f64 + 0.5 * p.len() as f64 + 1.0;
    let mut breaks: Vec<f64> = Vec::new();
    for &pk in p.iter().filter(|&&pk| pk > 0.0) {
        let mut j = 0.0;
        loop {
            let c = (j + 0.5) / pk;
            if c > c_max {
                break;
            }
            breaks.push(c);
            j += 1.0;
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let round_at = |c: f64| -> Vec<u32> { p.iter().map(|&pk| (c * pk).round() as u32).collect() };
    let total_at = |c: f64| -> usize { p.iter().map(|&pk| (c * pk).round() as usize).sum() };
    for w in breaks.windows(2) {
        let c = 0.5 * (w[0] + w[1]);
        let total = total_at(c);
        if total == n_runs {
            return Some((c, round_at(c)));
        }
        if total > n_runs {
            break;
        }
    }
    None
}

/// Parses a design file: one run per line, given either as a 1-based label
/// or as comma-separated levels. Blank lines and `#` comments are
/// skipped; repeated lines are replications.
pub fn parse_design(text: &str, space: &FactorialSpace) -> Result<ExactDesign> {
    let mut labels = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse(format!("line {}: {msg}", no + 1));
        let label = if line.contains(',') {
            let levels = line
                .split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|_| err(format!("bad level {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            space.label(&levels).map_err(|e| err(e.to_string()))?
        } else {
            let k = line.parse::<usize>().map_err(|_| err(format!("bad label {line:?}")))?;
            if k == 0 || k > space.v() {
                return Err(err(format!("label {k} outside 1..={}", space.v())));
            }
            k
        };
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Parse("design file lists no runs".into()));
    }
    ExactDesign::from_labels(space.v(), &labels)
}

/// Inverse of [`parse_design`], one label per line with the treatment as a comment.
pub fn format_design(d: &ExactDesign, space: &FactorialSpace) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {} runs", d.n_runs());
    for k in d.labels() {
        let t = space.treatment_of_index(k - 1);
        let _ = writeln!(out, "{k}  # {}", space.format_treatment(&t));
    }
    out
}
