//! Weighted-projection operators on constraint matrices: Gram matrices,
//! leverage scores, projection matrices, Woodbury low-rank inverse updates,
//! and a preconditioned truncated-Neumann inverse application.

use crate::error::{Error, Result};
use crate::mat::{dot, Cholesky, Lu, Matrix};
use std::cell::OnceCell;

/// Dense matrix of constraint rows; each row is one constraint.
///
/// Requires at least as many rows as columns and finite entries. Full column
/// rank is not checked here; it surfaces as a factorization failure wherever
/// a Gram inverse is formed.
#[derive(Debug, Clone)]
pub struct ConstraintMatrix {
    mat: Matrix,
}

impl ConstraintMatrix {
    pub fn new(mat: Matrix) -> Result<Self> {
        if mat.rows() < mat.cols() {
            return Err(Error::InvalidArgument(format!(
                "constraint matrix needs rows >= cols, got {}x{}",
                mat.rows(),
                mat.cols()
            )));
        }
        if !mat.is_finite() {
            return Err(Error::InvalidArgument(
                "constraint matrix has non-finite entries".into(),
            ));
        }
        Ok(ConstraintMatrix { mat })
    }

    pub fn rows(&self) -> usize {
        self.mat.rows()
    }

    pub fn cols(&self) -> usize {
        self.mat.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.mat.row(i)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.mat
    }
}

/// Strictly positive row weights.
#[derive(Debug, Clone)]
pub struct WeightVector {
    w: Vec<f64>,
}

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if !w.iter().all(|&x| x > 0.0 && x.is_finite()) {
            return Err(Error::InvalidArgument(
                "weights must be positive and finite".into(),
            ));
        }
        Ok(WeightVector { w })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }
}

/// The weighted Gram matrix `A^T W A` with its Cholesky factorization and a
/// lazily materialized inverse.
#[derive(Debug, Clone)]
pub struct GramFactor {
    m: Matrix,
    chol: Cholesky,
    inv: OnceCell<Matrix>,
}

impl GramFactor {
    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.chol.solve_vec(b)
    }

    pub fn inverse(&self) -> &Matrix {
        self.inv.get_or_init(|| self.chol.inverse())
    }

    pub fn log_det(&self) -> f64 {
        self.chol.log_det()
    }
}

/// Form `A^T W A` for positive diagonal `W` and factor it.
pub fn gram(a: &ConstraintMatrix, w: &WeightVector) -> Result<GramFactor> {
    if a.rows() != w.len() {
        return Err(Error::DimensionMismatch {
            context: "gram",
            expected: a.rows(),
            got: w.len(),
        });
    }
    let m = weighted_gram_matrix(a.as_matrix(), w.as_slice());
    let chol = Cholesky::new(&m)?;
    Ok(GramFactor {
        m,
        chol,
        inv: OnceCell::new(),
    })
}

/// `A^T diag(w) A` as a plain matrix (no positivity requirements on `w`).
pub fn weighted_gram_matrix(a: &Matrix, w: &[f64]) -> Matrix {
    let n = a.cols();
    let mut m = Matrix::zeros(n, n);
    for i in 0..a.rows() {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        let row = a.row(i);
        for j in 0..n {
            let s = wi * row[j];
            if s == 0.0 {
                continue;
            }
            for k in j..n {
                m[(j, k)] += s * row[k];
            }
        }
    }
    for j in 0..n {
        for k in 0..j {
            m[(j, k)] = m[(k, j)];
        }
    }
    m
}

/// Leverage scores `sigma_i = w_i * a_i^T (A^T W A)^{-1} a_i`.
///
/// Each score lies in [0, 1] and they sum to the column count.
pub fn leverage_scores_exact(a: &ConstraintMatrix, w: &WeightVector) -> Result<Vec<f64>> {
    let g = gram(a, w)?;
    Ok(leverage_from_cholesky(
        a.as_matrix(),
        w.as_slice(),
        g.cholesky(),
    ))
}

/// Leverage scores given an existing factorization of `A^T W A`.
pub fn leverage_from_cholesky(a: &Matrix, w: &[f64], chol: &Cholesky) -> Vec<f64> {
    (0..a.rows())
        .map(|i| {
            let y = chol.forward_sub(a.row(i));
            w[i] * dot(&y, &y)
        })
        .collect()
}

/// Unnormalized leverage scores `tau_i = a_i^T (A^T W A)^{-1} a_i = sigma_i / w_i`.
pub fn unnormalized_leverage_exact(a: &ConstraintMatrix, w: &WeightVector) -> Result<Vec<f64>> {
    let g = gram(a, w)?;
    Ok((0..a.rows())
        .map(|i| {
            let y = g.cholesky().forward_sub(a.row(i));
            dot(&y, &y)
        })
        .collect())
}

/// The weighted projection matrix `P(w) = W^{1/2} A (A^T W A)^{-1} A^T W^{1/2}`.
/// Symmetric, idempotent, with `diag(P) = sigma`.
pub fn projection_matrix(a: &ConstraintMatrix, w: &WeightVector) -> Result<Matrix> {
    let mut q = q_matrix(a, w)?;
    let sqrt_w: Vec<f64> = w.as_slice().iter().map(|x| x.sqrt()).collect();
    q.scale_rows(&sqrt_w);
    q.scale_cols(&sqrt_w);
    Ok(q)
}

/// `Q(w) = A (A^T W A)^{-1} A^T`; its diagonal is the unnormalized leverage.
pub fn q_matrix(a: &ConstraintMatrix, w: &WeightVector) -> Result<Matrix> {
    let g = gram(a, w)?;
    Ok(q_matrix_from_inverse(a.as_matrix(), g.inverse()))
}

/// `A Minv A^T` for an explicit inverse `Minv`.
pub fn q_matrix_from_inverse(a: &Matrix, minv: &Matrix) -> Matrix {
    let am = a.matmul(minv);
    let mut q = am.matmul(&a.transpose());
    q.symmetrize();
    q
}

/// Woodbury update: given `Minv = M^{-1}`, return `(M + U C V)^{-1}`.
///
/// Fails with a singular-system error when the inner `k x k` system
/// `C^{-1} + V Minv U` cannot be solved; callers fall back to refactoring.
pub fn woodbury_update(minv: &Matrix, u: &Matrix, c: &Matrix, v: &Matrix) -> Result<Matrix> {
    let n = minv.rows();
    let k = u.cols();
    if minv.cols() != n
        || u.rows() != n
        || v.cols() != n
        || v.rows() != k
        || c.rows() != k
        || c.cols() != k
    {
        return Err(Error::DimensionMismatch {
            context: "woodbury_update",
            expected: n,
            got: u.rows(),
        });
    }
    if k == 0 {
        return Ok(minv.clone());
    }
    let c_inv = Lu::new(c)
        .map_err(|_| Error::SingularSystem("woodbury inner C"))?
        .inverse();
    let minv_u = minv.matmul(u); // n x k
    let v_minv = v.matmul(minv); // k x n
    let inner = c_inv.add(&v.matmul(&minv_u)); // k x k
    let inner_lu = Lu::new(&inner).map_err(|_| Error::SingularSystem("woodbury inner system"))?;
    let solved = inner_lu.solve_mat(&v_minv); // k x n
    let correction = minv_u.matmul(&solved); // n x n
    Ok(minv.sub(&correction))
}

/// Sherman-Morrison special case: `(M + c a a^T)^{-1}` from `Minv`.
pub fn sherman_morrison(minv: &Matrix, a: &[f64], c: f64) -> Result<Matrix> {
    let u = minv.matvec(a); // Minv a
    let denom = 1.0 + c * dot(a, &u);
    if denom.abs() < 1e-300 || !denom.is_finite() {
        return Err(Error::SingularSystem("sherman-morrison denominator"));
    }
    let s = c / denom;
    let n = minv.rows();
    let mut out = minv.clone();
    for i in 0..n {
        let ui = u[i];
        for j in 0..n {
            out[(i, j)] -= s * ui * u[j];
        }
    }
    Ok(out)
}

/// Number of Neumann terms needed so that
/// `kappa * (1 - 1/kappa)^(t+1) <= eps`.
pub fn neumann_terms_needed(kappa: f64, eps: f64) -> usize {
    assert!(kappa >= 1.0 && eps > 0.0);
    if kappa == 1.0 {
        return 0;
    }
    let ratio = 1.0 - 1.0 / kappa;
    let mut t = 0usize;
    let mut bound = kappa * ratio;
    while bound > eps && t < 100_000 {
        t += 1;
        bound *= ratio;
    }
    t
}

/// Apply the truncated preconditioned Neumann series
/// `f(M, t) V = (1/kappa) M^{-1} sum_{i=0}^{t} (I - (1/kappa) A M^{-1})^i V`
/// for SPD `M <= A <= kappa M`, given `Minv = M^{-1}` explicitly.
///
/// In the SPD order, `f(M,t) <= A^{-1} <= f(M,t) / (1 - kappa (1-1/kappa)^{t+1})`
/// whenever the right-hand denominator is positive.
///
/// Computed as the Richardson iteration `x <- x + (1/kappa) Minv (V - A x)`
/// started from `(1/kappa) Minv V`, which expands to the same polynomial.
pub fn preconditioned_inverse_apply(
    minv: &Matrix,
    a_target: &Matrix,
    kappa: f64,
    t: usize,
    v: &Matrix,
) -> Result<Matrix> {
    if kappa < 1.0 || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "kappa must be >= 1, got {kappa}"
        )));
    }
    let n = minv.rows();
    if a_target.rows() != n || v.rows() != n {
        return Err(Error::DimensionMismatch {
            context: "preconditioned_inverse_apply",
            expected: n,
            got: v.rows(),
        });
    }
    let inv_kappa = 1.0 / kappa;
    let mut x = minv.matmul(v).scale(inv_kappa);
    for _ in 0..t {
        let residual = v.sub(&a_target.matmul(&x));
        x = x.add(&minv.matmul(&residual).scale(inv_kappa));
    }
    Ok(x)
}
