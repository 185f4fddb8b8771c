//! Approximate theory: design measures, the A-criterion `φ(p) = tr M(p)⁻¹`
//! with `M(p) = Zᵀ Δ(p) Z`, and the multiplicative algorithm that finds the
//! optimal measure together with the benchmark constant `s`.

use log::{debug, trace};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, MEASURE_PIVOT_TOL};
use crate::model::ModelMatrices;

/// Default optimality tolerance for the stopping rule.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Masses below this are treated as exactly zero.
const UNDERFLOW: f64 = 1e-300;
const SUM_TOL: f64 = 1e-12;

/// Probability vector over the `v` treatment combinations.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMeasure(Vec<f64>);

impl DesignMeasure {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidMeasure("empty measure".into()));
        }
        if let Some(m) = masses.iter().find(|m| !(**m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidMeasure(format!("mass {m} is not a finite nonnegative number")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidMeasure(format!("masses sum to {total}, not 1")));
        }
        Ok(Self(masses))
    }

    /// Rescales nonnegative weights to sum to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidMeasure("weights must have a positive finite sum".into()));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(v: usize) -> Self {
        Self(vec![1.0 / v as f64; v])
    }

    /// Point mass on the treatment with 0-based index `index`.
    pub fn point(v: usize, index: usize) -> Self {
        let mut m = vec![0.0; v];
        m[index] = 1.0;
        Self(m)
    }

    pub fn masses(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `(1 − ε) p + ε p̃`.
    pub fn mix(&self, other: &DesignMeasure, eps: f64) -> DesignMeasure {
        let m = self.0.iter().zip(&other.0).map(|(a, b)| (1.0 - eps) * a + eps * b).collect();
        DesignMeasure(m)
    }
}

/// Moment matrix `M(p)` and the pieces needed for variance functions.
struct Moments {
    q: usize,
    /// `Zᵀ p`
    mean: Vec<f64>,
    /// `M(p)`, row-major
    m: Vec<f64>,
}

fn moments(p: &[f64], mm: &ModelMatrices) -> Moments {
    let q = mm.q();
    let mut mean = vec![0.0; q];
    let mut m = vec![0.0; q * q];
    for (k, &pk) in p.iter().enumerate() {
        if pk == 0.0 {
            continue;
        }
        let sup = mm.support(k);
        for &a in sup {
            mean[a] += pk;
            for &b in sup {
                m[a * q + b] += pk;
            }
        }
    }
    for a in 0..q {
        for b in 0..q {
            m[a * q + b] -= mean[a] * mean[b];
        }
    }
    // exact symmetry
    for a in 0..q {
        for b in 0..a {
            let s = 0.5 * (m[a * q + b] + m[b * q + a]);
            m[a * q + b] = s;
            m[b * q + a] = s;
        }
    }
    Moments { q, mean, m }
}

fn check_len(p: &DesignMeasure, mm: &ModelMatrices) -> Result<()> {
    if p.len() != mm.v() {
        return Err(Error::InvalidMeasure(format!("measure has {} masses, model has v = {}", p.len(), mm.v())));
    }
    Ok(())
}

/// `M(p) = Zᵀ Δ(p) Z` with `Δ(p) = diag(p) − p pᵀ`.
pub fn info_of_measure(p: &DesignMeasure, mm: &ModelMatrices) -> Result<DMatrix<f64>> {
    check_len(p, mm)?;
    let mo = moments(p.masses(), mm);
    Ok(DMatrix::from_row_slice(mo.q, mo.q, &mo.m))
}

/// `tr M(p)⁻¹`, or `None` when `M(p)` is numerically singular (φ = +∞).
pub fn phi(p: &DesignMeasure, mm: &ModelMatrices) -> Result<Option<f64>> {
    check_len(p, mm)?;
    let mo = moments(p.masses(), mm);
    Ok(Cholesky::factor(&mo.m, mo.q, MEASURE_PIVOT_TOL).map(|c| c.trace_inverse()))
}

/// Variance functions `d_k = e_kᵀ M⁻¹ M⁻¹ e_k`, `e_k = z_k − Zᵀp`, for all
/// labels, together with `tr M(p)⁻¹`.
struct VarianceProfile {
    d: Vec<f64>,
    trace_inv: f64,
}

fn variance_profile(p: &[f64], mm: &ModelMatrices) -> Option<VarianceProfile> {
    let mo = moments(p, mm);
    let q = mo.q;
    let chol = Cholesky::factor(&mo.m, q, MEASURE_PIVOT_TOL)?;
    let inv = chol.inverse_flat();
    let trace_inv = (0..q).map(|i| inv[i * q + i]).sum();
    // M⁻¹ e_k = Σ_{c ∈ supp(k)} M⁻¹[:, c] − M⁻¹ Zᵀp
    let mut h = mo.mean.clone();
    chol.solve_in_place(&mut h);
    let d = (0..mm.v())
        .into_par_iter()
        .map(|k| {
            let sup = mm.support(k);
            (0..q)
                .map(|r| {
                    let y = sup.iter().map(|&c| inv[r * q + c]).sum::<f64>() - h[r];
                    y * y
                })
                .sum()
        })
        .collect();
    Some(VarianceProfile { d, trace_inv })
}

/// `d_k` for the 1-based label `label`.
pub fn variance_function(p: &DesignMeasure, mm: &ModelMatrices, label: usize) -> Result<f64> {
    check_len(p, mm)?;
    if label == 0 || label > mm.v() {
        return Err(Error::LabelOutOfRange { label, v: mm.v() });
    }
    let prof = variance_profile(p.masses(), mm).ok_or(Error::SingularMatrix)?;
    Ok(prof.d[label - 1])
}

/// All `d_k`, indexed by 0-based treatment index.
pub fn variance_functions(p: &DesignMeasure, mm: &ModelMatrices) -> Result<Vec<f64>> {
    check_len(p, mm)?;
    Ok(variance_profile(p.masses(), mm).ok_or(Error::SingularMatrix)?.d)
}

fn apply_step(p: &[f64], prof: &VarianceProfile) -> Vec<f64> {
    let mut next: Vec<f64> = p
        .iter()
        .zip(&prof.d)
        .map(|(&pk, &dk)| {
            let x = pk * dk / prof.trace_inv;
            if x < UNDERFLOW {
                0.0
            } else {
                x
            }
        })
        .collect();
    let total: f64 = next.iter().sum();
    next.iter_mut().for_each(|x| *x /= total);
    next
}

/// One multiplicative update `p′_k = p_k d_k / tr M(p)⁻¹`.
pub fn multiplicative_step(p: &DesignMeasure, mm: &ModelMatrices) -> Result<DesignMeasure> {
    check_len(p, mm)?;
    let prof = variance_profile(p.masses(), mm).ok_or(Error::SingularMatrix)?;
    Ok(DesignMeasure(apply_step(p.masses(), &prof)))
}

/// One-sided directional derivative of φ at `p` toward `p̃`.
pub fn directional_derivative(p: &DesignMeasure, p_tilde: &DesignMeasure, mm: &ModelMatrices) -> Result<f64> {
    check_len(p, mm)?;
    check_len(p_tilde, mm)?;
    let prof = variance_profile(p.masses(), mm).ok_or(Error::SingularMatrix)?;
    Ok(p_tilde.masses().iter().zip(&prof.d).map(|(&w, &dk)| w * (prof.trace_inv - dk)).sum())
}

#[derive(Debug, Clone)]
pub struct OptimizerResult {
    pub p_hat: DesignMeasure,
    /// `tr M(p̂)⁻¹ − t`, a lower bound on `N tr(H_d⁻¹)` for every exact design.
    pub s: f64,
    pub tolerance: f64,
    pub iterations: usize,
    /// `max_k d_k − tr M(p̂)⁻¹` at the returned measure.
    pub terminal_gap: f64,
}

impl OptimizerResult {
    /// `φ(p̂) = s + t`.
    pub fn phi_hat(&self) -> f64 {
        self.s + self.tolerance
    }
}

/// Multiplicative algorithm from the uniform measure, stopping once
/// `max_k d_k − tr M(p)⁻¹ ≤ tolerance`.
pub fn optimize(mm: &ModelMatrices, tolerance: f64, max_iter: usize) -> Result<OptimizerResult> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tolerance}")));
    }
    let mut p = DesignMeasure::uniform(mm.v()).0;
    let mut prev_phi = f64::INFINITY;
    let mut gap = f64::INFINITY;
    for iteration in 0..=max_iter {
        let prof = match variance_profile(&p, mm) {
            Some(prof) => prof,
            None if iteration == 0 => {
                return Err(Error::DegenerateModel("M(p) is singular at the uniform measure".into()))
            }
            None => {
                return Err(Error::NonConvergence { iterations: iteration, gap, best: p });
            }
        };
        gap = prof.d.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - prof.trace_inv;
        if prof.trace_inv > prev_phi * (1.0 + 1e-14) {
            debug!("φ increased at iteration {iteration}: {prev_phi} -> {}", prof.trace_inv);
        }
        prev_phi = prof.trace_inv;
        if iteration % 1000 == 0 {
            trace!("iteration {iteration}: φ = {}, gap = {gap:e}", prof.trace_inv);
        }
        if gap <= tolerance {
            return Ok(OptimizerResult {
                p_hat: DesignMeasure(p),
                s: prof.trace_inv - tolerance,
                tolerance,
                iterations: iteration,
                terminal_gap: gap,
            });
        }
        if iteration == max_iter {
            break;
        }
        p = apply_step(&p, &prof);
    }
    Err(Error::NonConvergence { iterations: max_iter, gap, best: p })
}
