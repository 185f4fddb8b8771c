//! Small dense symmetric positive-definite kernels.
//!
//! The information matrices handled here are at most a few dozen rows wide
//! and are factored millions of times during design search, so they are
//! stored as flat row-major buffers and factored with a plain Cholesky
//! decomposition that reports singularity through a relative pivot threshold.

use nalgebra::DMatrix;

/// Relative pivot threshold for information matrices of exact designs.
pub const DESIGN_PIVOT_TOL: f64 = 1e-10;

/// Relative pivot threshold for moment matrices of design measures.
pub const MEASURE_PIVOT_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`, row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors the symmetric matrix stored row-major in `a`. Only the lower
    /// triangle is read. Returns `None` when a pivot falls at or below
    /// `rel_tol` times the largest diagonal entry of `a`.
    pub fn factor(a: &[f64], n: usize, rel_tol: f64) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let scale = (0..n).map(|i| a[i * n + i]).fold(0.0_f64, f64::max);
        if n == 0 || !(scale > 0.0) || !scale.is_finite() {
            return None;
        }
        let floor = rel_tol * scale;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > floor) {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Some(Self { n, l })
    }

    pub fn from_matrix(a: &DMatrix<f64>, rel_tol: f64) -> Option<Self> {
        assert!(a.is_square());
        let n = a.nrows();
        let mut flat = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                flat[i * n + j] = a[(i, j)];
            }
        }
        Self::factor(&flat, n, rel_tol)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Inverse of `L`, lower triangular, row-major.
    fn l_inverse(&self) -> Vec<f64> {
        let n = self.n;
        let l = &self.l;
        let mut inv = vec![0.0; n * n];
        for j in 0..n {
            inv[j * n + j] = 1.0 / l[j * n + j];
            for i in (j + 1)..n {
                let mut s = 0.0;
                for k in j..i {
                    s -= l[i * n + k] * inv[k * n + j];
                }
                inv[i * n + j] = s / l[i * n + i];
            }
        }
        inv
    }

    /// `tr(A⁻¹) = ‖L⁻¹‖²_F`.
    pub fn trace_inverse(&self) -> f64 {
        self.l_inverse().iter().map(|x| x * x).sum()
    }

    /// Full inverse `A⁻¹ = L⁻ᵀ L⁻¹`, row-major.
    pub fn inverse_flat(&self) -> Vec<f64> {
        let n = self.n;
        let li = self.l_inverse();
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in i..n {
                    s += li[k * n + i] * li[k * n + j];
                }
                inv[i * n + j] = s;
                inv[j * n + i] = s;
            }
        }
        inv
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.inverse_flat())
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let l = &self.l;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * n + k] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
    }
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Numerical rank from singular values, relative to the largest one.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}
