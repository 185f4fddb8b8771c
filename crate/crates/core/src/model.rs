//! Baseline-parametrized factorial model: treatment labels, requirement
//! sets and the model matrices `Z`, `X = [1, Z]` and `W = (Zᵀ Δ(1) Z)⁻¹`.
//!
//! Every factor has levels `0..m_i` with `0` the baseline. Treatment
//! combinations are labeled `1..=v` in lexicographic order, so label `k`
//! of treatment `(j_1, …, j_n)` is `Σ μ_i j_i + 1` with strides
//! `μ_i = v / (m_1 ⋯ m_i)`.

use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky};

/// Relative singular-value threshold for rank checks on `X`.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorialSpace {
    levels: Vec<usize>,
    strides: Vec<usize>,
    v: usize,
}

impl FactorialSpace {
    pub fn new(levels: Vec<usize>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidSpace("at least one factor is required".into()));
        }
        if let Some(m) = levels.iter().find(|&&m| m < 2) {
            return Err(Error::InvalidSpace(format!("every factor needs at least 2 levels, got {m}")));
        }
        let v = levels
            .iter()
            .try_fold(1usize, |acc, &m| acc.checked_mul(m))
            .ok_or_else(|| Error::InvalidSpace("number of treatment combinations overflows".into()))?;
        let mut strides = vec![1; levels.len()];
        for i in (0..levels.len() - 1).rev() {
            strides[i] = strides[i + 1] * levels[i + 1];
        }
        Ok(Self { levels, strides, v })
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn n_factors(&self) -> usize {
        self.levels.len()
    }

    /// Number of treatment combinations.
    pub fn v(&self) -> usize {
        self.v
    }

    /// 1-based label of a treatment combination.
    pub fn label(&self, treatment: &[usize]) -> Result<usize> {
        if treatment.len() != self.levels.len() {
            return Err(Error::InvalidTreatment(format!(
                "expected {} levels, got {}",
                self.levels.len(),
                treatment.len()
            )));
        }
        let mut k = 1;
        for (i, (&j, &m)) in treatment.iter().zip(&self.levels).enumerate() {
            if j >= m {
                return Err(Error::InvalidTreatment(format!("level {j} of factor F{} is outside 0..{m}", i + 1)));
            }
            k += self.strides[i] * j;
        }
        Ok(k)
    }

    /// Treatment combination of a 1-based label.
    pub fn unlabel(&self, label: usize) -> Result<Vec<usize>> {
        if label == 0 || label > self.v {
            return Err(Error::LabelOutOfRange { label, v: self.v });
        }
        Ok(self.treatment_of_index(label - 1))
    }

    pub(crate) fn treatment_of_index(&self, index: usize) -> Vec<usize> {
        let mut rest = index;
        self.strides
            .iter()
            .map(|&mu| {
                let j = rest / mu;
                rest %= mu;
                j
            })
            .collect()
    }

    /// Treatment as printed in reports: concatenated digits, or
    /// dash-separated levels when some factor has more than 10 levels.
    pub fn format_treatment(&self, treatment: &[usize]) -> String {
        if self.levels.iter().any(|&m| m > 10) {
            treatment.iter().map(|j| j.to_string()).collect::<Vec<_>>().join("-")
        } else {
            treatment.iter().map(|j| j.to_string()).collect()
        }
    }

    pub fn effect_dimension(&self, effect: &Effect) -> usize {
        effect.factors.iter().map(|&f| self.levels[f - 1] - 1).product()
    }
}

/// A factorial effect: a nonempty set of factors, 1-based (`F1` is `1`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Effect {
    factors: Vec<usize>,
}

impl Effect {
    pub fn new(mut factors: Vec<usize>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidEffect("an effect needs at least one factor".into()));
        }
        if factors.contains(&0) {
            return Err(Error::InvalidEffect("factor indices are 1-based".into()));
        }
        factors.sort_unstable();
        if factors.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidEffect(format!("repeated factor in {factors:?}")));
        }
        Ok(Self { factors })
    }

    pub fn main(factor: usize) -> Result<Self> {
        Self::new(vec![factor])
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.factors.iter().map(|i| format!("F{i}")).collect();
        f.write_str(&parts.concat())
    }
}

impl FromStr for Effect {
    type Err = Error;

    /// Parses `"2"`, `"1x6"` or `"1*2*3"`.
    fn from_str(s: &str) -> Result<Self> {
        let factors = s
            .split(['x', 'X', '*'])
            .map(|t| {
                let t = t.trim().trim_start_matches(['F', 'f']);
                t.parse::<usize>()
                    .map_err(|_| Error::InvalidEffect(format!("cannot parse factor index {t:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(factors)
    }
}

/// Ordered list of effects kept in the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequirementSet {
    effects: Vec<Effect>,
    q: usize,
}

impl RequirementSet {
    pub fn new(space: &FactorialSpace, effects: Vec<Effect>) -> Result<Self> {
        if effects.is_empty() {
            return Err(Error::InvalidRequirementSet("the requirement set is empty".into()));
        }
        for (i, e) in effects.iter().enumerate() {
            if let Some(&f) = e.factors.iter().find(|&&f| f > space.n_factors()) {
                return Err(Error::InvalidEffect(format!(
                    "factor F{f} does not exist in a {}-factor space",
                    space.n_factors()
                )));
            }
            if effects[..i].contains(e) {
                return Err(Error::InvalidRequirementSet(format!("duplicate effect {e}")));
            }
        }
        for e in effects.iter().filter(|e| e.order() > 1) {
            for &f in &e.factors {
                if !effects.iter().any(|m| m.factors == [f]) {
                    warn!("interaction {e} is in the requirement set but main effect F{f} is not");
                }
            }
        }
        let q = effects.iter().map(|e| space.effect_dimension(e)).sum();
        if q + 1 > space.v() {
            return Err(Error::InvalidRequirementSet(format!(
                "q + 1 = {} exceeds the {} treatment combinations",
                q + 1,
                space.v()
            )));
        }
        Ok(Self { effects, q })
    }

    /// Parses a `;`-separated effect list such as `"1;2;3;1x3"`.
    pub fn parse(space: &FactorialSpace, text: &str) -> Result<Self> {
        let effects = text
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Effect>>>()?;
        Self::new(space, effects)
    }

    /// All main effects `F1, …, Fn`.
    pub fn main_effects(space: &FactorialSpace) -> Result<Self> {
        let effects = (1..=space.n_factors()).map(Effect::main).collect::<Result<Vec<_>>>()?;
        Self::new(space, effects)
    }

    pub fn effects(&self) -> &[Effect] {
        &self.effects
    }

    /// Dimension of θ.
    pub fn q(&self) -> usize {
        self.q
    }
}

impl fmt::Display for RequirementSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .effects
            .iter()
            .map(|e| e.factors.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("x"))
            .collect();
        f.write_str(&parts.join(";"))
    }
}

/// `Z`, `X = [1_v, Z]` and `W = (Zᵀ Δ(1_v) Z)⁻¹` for a space and requirement set.
#[derive(Debug, Clone)]
pub struct ModelMatrices {
    space: FactorialSpace,
    reqset: RequirementSet,
    z: DMatrix<f64>,
    x: DMatrix<f64>,
    w: DMatrix<f64>,
    trace_w: f64,
    /// Column indices of the ones in each row of `Z`.
    supports: Vec<Vec<usize>>,
    parameter_names: Vec<String>,
}

impl ModelMatrices {
    pub fn build(space: &FactorialSpace, reqset: &RequirementSet) -> Result<Self> {
        let v = space.v();
        let q = reqset.q();
        let mut supports = vec![Vec::new(); v];
        let mut parameter_names = Vec::with_capacity(q);
        let mut column = 0;
        for effect in reqset.effects() {
            let dims: Vec<usize> = effect.factors().iter().map(|&f| space.levels()[f - 1] - 1).collect();
            // nonzero level tuples of the effect's factors, lexicographic
            let block: usize = dims.iter().product();
            let mut tuple = vec![1usize; dims.len()];
            for _ in 0..block {
                let mut u = vec![0usize; space.n_factors()];
                for (&f, &level) in effect.factors().iter().zip(&tuple) {
                    u[f - 1] = level;
                }
                parameter_names.push(format!("θ({})", space.format_treatment(&u)));
                for (index, support) in supports.iter_mut().enumerate() {
                    let treatment = space.treatment_of_index(index);
                    if effect.factors().iter().zip(&tuple).all(|(&f, &level)| treatment[f - 1] == level) {
                        support.push(column);
                    }
                }
                column += 1;
                for pos in (0..tuple.len()).rev() {
                    if tuple[pos] < dims[pos] {
                        tuple[pos] += 1;
                        break;
                    }
                    tuple[pos] = 1;
                }
            }
        }
        debug_assert_eq!(column, q);

        let mut z = DMatrix::zeros(v, q);
        for (k, support) in supports.iter().enumerate() {
            for &c in support {
                z[(k, c)] = 1.0;
            }
        }
        let mut x = DMatrix::zeros(v, q + 1);
        x.column_mut(0).fill(1.0);
        x.columns_mut(1, q).copy_from(&z);
        if linalg::numerical_rank(&x, RANK_TOL) < q + 1 {
            return Err(Error::DegenerateModel("X = [1, Z] is column-rank deficient".into()));
        }

        let centered = centered_gram(&z);
        let w = Cholesky::from_matrix(&centered, linalg::DESIGN_PIVOT_TOL)
            .ok_or_else(|| Error::DegenerateModel("Zᵀ Δ(1) Z is singular".into()))?
            .inverse();
        let w = linalg::symmetrize(&w);
        let trace_w = w.trace();

        Ok(Self { space: space.clone(), reqset: reqset.clone(), z, x, w, trace_w, supports, parameter_names })
    }

    pub fn space(&self) -> &FactorialSpace {
        &self.space
    }

    pub fn requirement_set(&self) -> &RequirementSet {
        &self.reqset
    }

    pub fn v(&self) -> usize {
        self.space.v()
    }

    pub fn q(&self) -> usize {
        self.reqset.q()
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn trace_w(&self) -> f64 {
        self.trace_w
    }

    /// Columns holding a one in row `index` (0-based) of `Z`.
    pub fn support(&self, index: usize) -> &[usize] {
        &self.supports[index]
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.parameter_names
    }

    /// Orthonormal basis of the orthogonal complement of the column space
    /// of `X`, as a `v × (v − q − 1)` matrix.
    pub fn orthocomplement(&self) -> Result<DMatrix<f64>> {
        build_orthocomplement(&self.x)
    }
}

/// `Zᵀ Δ(1_v) Z = Zᵀ Z − (Zᵀ1)(Zᵀ1)ᵀ / v`.
fn centered_gram(z: &DMatrix<f64>) -> DMatrix<f64> {
    let v = z.nrows() as f64;
    let colsum = z.row_sum().transpose();
    let g = z.transpose() * z - &colsum * colsum.transpose() / v;
    linalg::symmetrize(&g)
}

/// Orthonormal basis `P` of `C⊥(X)`: `PᵀP = I` and `XᵀP = 0`.
pub fn build_orthocomplement(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (v, r) = x.shape();
    if linalg::numerical_rank(x, RANK_TOL) < r {
        return Err(Error::DegenerateModel("X is column-rank deficient".into()));
    }
    let gram = x.transpose() * x;
    let gram_inv = Cholesky::from_matrix(&gram, linalg::DESIGN_PIVOT_TOL)
        .ok_or_else(|| Error::DegenerateModel("XᵀX is singular".into()))?
        .inverse();
    let projector = DMatrix::identity(v, v) - x * gram_inv * x.transpose();
    let eig = linalg::symmetrize(&projector).symmetric_eigen();
    let mut keep: Vec<usize> = (0..v).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    keep.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    if keep.len() != v - r {
        return Err(Error::DegenerateModel(format!(
            "orthocomplement has dimension {} instead of {}",
            keep.len(),
            v - r
        )));
    }
    let mut p = DMatrix::zeros(v, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        p.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok(p)
}
