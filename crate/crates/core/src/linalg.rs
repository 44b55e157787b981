//! Dense matrix helpers and multi-output least squares.
//!
//! Everything here uses column-major vectorisation: `vec(A)` stacks the
//! columns of `A`, which is also nalgebra's storage order. The Kronecker
//! identities used by the variance module, e.g.
//! `vec(B X Aᵀ) = (A ⊗ B) vec(X)`, all assume this convention.

use nalgebra::{DMatrix, DVector, LU};

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Condition numbers above this are treated as singular everywhere.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Relative residual norm below which a response counts as fitted exactly.
pub const EXACT_FIT_TOL: f64 = 1e-10;

/// Result of regressing `m` responses on a shared design with intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiOutputFit {
    /// `(1+k) × m`; row 0 is the intercept.
    pub coef: Matrix,
    /// `m × m`, divisor `n`.
    pub residual_cov: Matrix,
    /// Covariance of `vec(coef)`: `residual_cov ⊗ (XᵀX)⁻¹`.
    pub coef_vcov: Matrix,
    /// Normal-theory covariance of `vec(residual_cov)`.
    pub residual_cov_vcov: Matrix,
    /// `(XᵀX)⁻¹`, kept because callers re-slice it.
    pub xtx_inv: Matrix,
    pub n: usize,
    pub k: usize,
    pub m: usize,
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Column-stacking vectorisation.
pub fn vec(a: &Matrix) -> Vector {
    Vector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &Vector, rows: usize, cols: usize) -> Matrix {
    assert_eq!(v.len(), rows * cols, "unvec: length does not match shape");
    Matrix::from_column_slice(rows, cols, v.as_slice())
}

/// `K_pq` such that `K_pq vec(A) = vec(Aᵀ)` for any `p × q` matrix `A`.
pub fn commutation_matrix(p: usize, q: usize) -> Matrix {
    let mut k = Matrix::zeros(p * q, p * q);
    for i in 0..p {
        for j in 0..q {
            // A[i,j] sits at i + j·p in vec(A) and at j + i·q in vec(Aᵀ).
            k[(j + i * q, i + j * p)] = 1.0;
        }
    }
    k
}

/// 2-norm condition number via singular values; `inf` for exactly singular input.
pub fn condition_number(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(min > 0.0) || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn all_finite(a: &Matrix) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// A square matrix factorised once and solved against many right-hand sides,
/// refusing to exist if it is numerically singular.
#[derive(Debug, Clone)]
pub struct Factorized {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    dim: usize,
    pub condition: f64,
}

impl Factorized {
    /// `stage`/`name` end up in the `NonIdentifiable` error if `a` is singular.
    pub fn new(a: &Matrix, stage: &str, name: &str) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "{name} must be square, got {}×{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if !all_finite(a) {
            return Err(Error::NonFiniteInput {
                what: name.to_string(),
            });
        }
        let condition = condition_number(a);
        if !(condition <= CONDITION_LIMIT) {
            return Err(Error::non_identifiable(stage, name, condition));
        }
        Ok(Self {
            lu: a.clone().lu(),
            dim: a.nrows(),
            condition,
        })
    }

    pub fn solve(&self, b: &Matrix) -> Matrix {
        self.lu
            .solve(b)
            .expect("LU solve failed on a matrix that passed the condition check")
    }

    pub fn solve_vec(&self, b: &Vector) -> Vector {
        self.lu
            .solve(b)
            .expect("LU solve failed on a matrix that passed the condition check")
    }

    pub fn inverse(&self) -> Matrix {
        self.solve(&Matrix::identity(self.dim, self.dim))
    }
}

/// Smallest and largest eigenvalue of the symmetric part of `a`.
pub fn eigen_range(a: &Matrix) -> (f64, f64) {
    if a.is_empty() {
        return (0.0, 0.0);
    }
    let sym = symmetrize(a);
    let ev = sym.symmetric_eigenvalues();
    (ev.min(), ev.max())
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

/// Horizontally concatenate an intercept column and the given blocks.
pub fn design_with_intercept(blocks: &[&Matrix]) -> Matrix {
    let n = blocks.first().map_or(0, |b| b.nrows());
    let cols = 1 + blocks.iter().map(|b| b.ncols()).sum::<usize>();
    let mut x = Matrix::zeros(n, cols);
    x.column_mut(0).fill(1.0);
    let mut at = 1;
    for b in blocks {
        assert_eq!(b.nrows(), n, "design blocks must share a row count");
        x.view_mut((0, at), (n, b.ncols())).copy_from(*b);
        at += b.ncols();
    }
    x
}

/// Multi-output OLS of `responses` on `design` (which must already contain
/// the leading ones column).
///
/// Solved through a Householder QR of the design; the rank check uses the
/// condition number of `R`, which equals that of the design.
pub fn fit_multi_ols(design: &Matrix, responses: &Matrix) -> Result<MultiOutputFit> {
    let n = design.nrows();
    let cols = design.ncols();
    let m = responses.ncols();
    if cols == 0 {
        return Err(Error::DimensionMismatch("design has no columns".into()));
    }
    if responses.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows but responses have {}",
            responses.nrows()
        )));
    }
    let k = cols - 1;
    if n <= k + 1 {
        return Err(Error::InsufficientSampleSize { n, required: k + 1 });
    }
    if !all_finite(design) {
        return Err(Error::NonFiniteInput {
            what: "design matrix".into(),
        });
    }
    if !all_finite(responses) {
        return Err(Error::NonFiniteInput {
            what: "responses".into(),
        });
    }

    let qr = design.clone().qr();
    let r = qr.r();
    let condition = condition_number(&r);
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::RankDeficientDesign { condition });
    }

    let mut qty = responses.clone();
    qr.q_tr_mul(&mut qty);
    let top = qty.rows(0, cols).into_owned();
    let coef = r
        .solve_upper_triangular(&top)
        .expect("R is non-singular after the condition check");

    let mut resid = responses - design * &coef;
    // A response the design reproduces up to rounding has zero residual
    // variance; leaving the ~1e-30 noise in would make a degenerate Σ look
    // perfectly conditioned when it is 1×1.
    for j in 0..m {
        if resid.column(j).norm() <= EXACT_FIT_TOL * responses.column(j).norm() {
            resid.column_mut(j).fill(0.0);
        }
    }
    let residual_cov = symmetrize(&(resid.transpose() * &resid / n as f64));

    let r_inv = r
        .solve_upper_triangular(&Matrix::identity(cols, cols))
        .expect("R is non-singular after the condition check");
    let xtx_inv = symmetrize(&(&r_inv * r_inv.transpose()));

    let coef_vcov = kron(&residual_cov, &xtx_inv);
    let residual_cov_vcov = wishart_vcov(&residual_cov, n);

    Ok(MultiOutputFit {
        coef,
        residual_cov,
        coef_vcov,
        residual_cov_vcov,
        xtx_inv,
        n,
        k,
        m,
    })
}

/// Asymptotic covariance of `vec(Σ̂)` for a normal-theory sample covariance:
/// `n⁻¹ (I + K_mm)(Σ ⊗ Σ)`.
pub fn wishart_vcov(sigma: &Matrix, n: usize) -> Matrix {
    let m = sigma.nrows();
    let ss = kron(sigma, sigma);
    let kmm = commutation_matrix(m, m);
    (&ss + kmm * &ss) / n as f64
}

/// Copy rows/cols `idx` of a square matrix.
pub fn submatrix(a: &Matrix, rows: &[usize], cols: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}
