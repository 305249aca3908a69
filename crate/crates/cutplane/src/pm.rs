//! Projection maintenance: keeps weights `v` multiplicatively close to a
//! target `w` while caching `(A^T V A)^{-1}` and `Q(v) = A (A^T V A)^{-1} A^T`
//! under weight updates and row insertion/deletion.
//!
//! The sandwich `(1 - eps) v_i <= w_i <= (1 + eps) v_i` holds after every
//! operation. A weight update touches only the coordinates whose log-ratio
//! drifted past `log(1 + eps)`; those are folded into the caches with one
//! batched Woodbury correction. Updates fall back to a full refactorization
//! when the drifted set is large or the correction is ill-conditioned.

use crate::error::{Error, Result};
use crate::mat::{dot, Cholesky, Lu, Matrix};
use crate::ops::weighted_gram_matrix;

#[derive(Debug, Clone)]
pub struct ProjectionState {
    a: Matrix,
    w: Vec<f64>,
    v: Vec<f64>,
    eps: f64,
    minv: Matrix,
    q: Matrix,
    q_squared: Option<Matrix>,
    updates: u64,
    refactorizations: u64,
}

/// Initialize with `v = w` and exact caches.
pub fn pm_init(a: Matrix, w: Vec<f64>, eps: f64) -> Result<ProjectionState> {
    if a.rows() != w.len() {
        return Err(Error::DimensionMismatch {
            context: "pm_init",
            expected: a.rows(),
            got: w.len(),
        });
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "pm tolerance must be in [0,1), got {eps}"
        )));
    }
    if !w.iter().all(|&x| x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidArgument("pm weights must be positive".into()));
    }
    let mut state = ProjectionState {
        a,
        v: w.clone(),
        w,
        eps,
        minv: Matrix::zeros(0, 0),
        q: Matrix::zeros(0, 0),
        q_squared: None,
        updates: 0,
        refactorizations: 0,
    };
    state.refactor()?;
    Ok(state)
}

impl ProjectionState {
    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn cols(&self) -> usize {
        self.a.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    /// Target weights (last requested).
    pub fn target(&self) -> &[f64] {
        &self.w
    }

    /// Maintained weights; the caches are exact at these.
    pub fn maintained(&self) -> &[f64] {
        &self.v
    }

    pub fn tolerance(&self) -> f64 {
        self.eps
    }

    /// Cached `(A^T V A)^{-1}`.
    pub fn gram_inverse(&self) -> &Matrix {
        &self.minv
    }

    /// Cached `Q(v) = A (A^T V A)^{-1} A^T`; `Q_ii` is the unnormalized
    /// leverage of row `i` at weights `v`.
    pub fn q(&self) -> &Matrix {
        &self.q
    }

    /// Entry-wise square of `Q(v)`, built lazily and invalidated on update.
    pub fn q_squared(&mut self) -> &Matrix {
        if self.q_squared.is_none() {
            self.q_squared = Some(self.q.entrywise_square());
        }
        self.q_squared.as_ref().unwrap()
    }

    pub fn refactorization_count(&self) -> u64 {
        self.refactorizations
    }

    fn invalidate(&mut self) {
        self.q_squared = None;
    }

    fn refactor(&mut self) -> Result<()> {
        let m = weighted_gram_matrix(&self.a, &self.v);
        let chol = Cholesky::new(&m).map_err(|_| Error::RankDeficient("projection maintenance"))?;
        self.minv = chol.inverse();
        let am = self.a.matmul(&self.minv);
        self.q = am.matmul(&self.a.transpose());
        self.q.symmetrize();
        self.refactorizations += 1;
        self.invalidate();
        Ok(())
    }

    /// Cheap residual probe on `Minv (A^T V A) x = x`; triggers refactoring
    /// when accumulated Woodbury corrections degrade.
    fn conditioning_ok(&self) -> bool {
        let n = self.cols();
        let x: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        // y = A^T V A x without forming the Gram matrix.
        let ax = self.a.matvec(&x);
        let vax: Vec<f64> = ax.iter().zip(&self.v).map(|(t, vi)| t * vi).collect();
        let y = self.a.tr_matvec(&vax);
        let back = self.minv.matvec(&y);
        let err: f64 = back
            .iter()
            .zip(&x)
            .map(|(b, xi)| (b - xi).abs())
            .fold(0.0, f64::max);
        err <= 1e-7 * (n as f64).sqrt()
    }

    /// Move the target to `w_new`, repairing the caches so the sandwich
    /// `(1-eps) v <= w <= (1+eps) v` holds again. Never fails on conditioning:
    /// an ill-conditioned low-rank correction falls back to refactoring.
    pub fn update(&mut self, w_new: &[f64]) -> Result<()> {
        if w_new.len() != self.rows() {
            return Err(Error::DimensionMismatch {
                context: "pm update",
                expected: self.rows(),
                got: w_new.len(),
            });
        }
        if !w_new.iter().all(|&x| x > 0.0 && x.is_finite()) {
            return Err(Error::InvalidArgument(
                "pm update weights must be positive".into(),
            ));
        }
        self.updates += 1;
        let threshold = (1.0 + self.eps).ln();
        let drifted: Vec<usize> = (0..self.rows())
            .filter(|&i| (w_new[i].ln() - self.v[i].ln()).abs() > threshold)
            .collect();
        self.w = w_new.to_vec();
        if drifted.is_empty() {
            return Ok(());
        }
        if drifted.len() > self.cols() / 4 {
            for &i in &drifted {
                self.v[i] = w_new[i];
            }
            return self.refactor();
        }
        match self.low_rank_correction(&drifted) {
            Ok(()) => {
                for &i in &drifted {
                    self.v[i] = w_new[i];
                }
                if !self.conditioning_ok() {
                    self.refactor()?;
                }
                Ok(())
            }
            Err(_) => {
                for &i in &drifted {
                    self.v[i] = w_new[i];
                }
                self.refactor()
            }
        }
    }

    /// Fold `v_S -> w_S` into `minv` and `q` with one rank-|S| Woodbury step.
    fn low_rank_correction(&mut self, s: &[usize]) -> Result<()> {
        let k = s.len();
        let a_s = self.a.select_rows(s); // k x n
        let delta: Vec<f64> = s.iter().map(|&i| self.w[i] - self.v[i]).collect();
        // inner = D^{-1} + A_S Minv A_S^T, with D = diag(delta)
        let minv_ast = self.minv.matmul(&a_s.transpose()); // n x k
        let mut inner = a_s.matmul(&minv_ast); // k x k
        for i in 0..k {
            if delta[i] == 0.0 {
                return Err(Error::SingularSystem("pm zero delta"));
            }
            inner[(i, i)] += 1.0 / delta[i];
        }
        let lu = Lu::new(&inner).map_err(|_| Error::SingularSystem("pm woodbury inner"))?;
        // Minv' = Minv - (Minv A_S^T) K (A_S Minv)
        let solved = lu.solve_mat(&minv_ast.transpose()); // k x n
        let corr = minv_ast.matmul(&solved);
        let mut new_minv = self.minv.sub(&corr);
        new_minv.symmetrize();
        // Q' = Q - Q[:,S] K Q[S,:]
        let q_cols = {
            let mut qc = Matrix::zeros(self.rows(), k);
            for (c, &i) in s.iter().enumerate() {
                for r in 0..self.rows() {
                    qc[(r, c)] = self.q[(r, i)];
                }
            }
            qc
        };
        let solved_q = lu.solve_mat(&q_cols.transpose()); // k x m
        let corr_q = q_cols.matmul(&solved_q);
        let mut new_q = self.q.sub(&corr_q);
        new_q.symmetrize();
        if !new_minv.is_finite() || !new_q.is_finite() {
            return Err(Error::SingularSystem(
                "pm woodbury produced non-finite values",
            ));
        }
        self.minv = new_minv;
        self.q = new_q;
        self.invalidate();
        Ok(())
    }

    /// Append a constraint row with the given weight; caches get a rank-1
    /// Sherman-Morrison correction.
    pub fn insert(&mut self, row: Vec<f64>, weight: f64) -> Result<()> {
        if row.len() != self.cols() {
            return Err(Error::DimensionMismatch {
                context: "pm insert",
                expected: self.cols(),
                got: row.len(),
            });
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidArgument(
                "insert weight must be positive".into(),
            ));
        }
        let u = self.minv.matvec(&row); // Minv a
        let tau = dot(&row, &u);
        let denom = 1.0 + weight * tau;
        if !(denom > 1e-12) {
            return Err(Error::SingularSystem("pm insert denominator"));
        }
        let k = weight / denom;
        let m_old = self.rows();
        // Minv' = Minv - k u u^T
        for i in 0..self.cols() {
            for j in 0..self.cols() {
                self.minv[(i, j)] -= k * u[i] * u[j];
            }
        }
        // Old Q block shrinks by k q q^T where q = A Minv_old a; the new row
        // and column are the rescaled q with corner tau / denom.
        let q_col = self.a.matvec(&u);
        let mut new_q = Matrix::zeros(m_old + 1, m_old + 1);
        for i in 0..m_old {
            for j in 0..m_old {
                new_q[(i, j)] = self.q[(i, j)] - k * q_col[i] * q_col[j];
            }
        }
        for i in 0..m_old {
            let val = q_col[i] / denom;
            new_q[(i, m_old)] = val;
            new_q[(m_old, i)] = val;
        }
        new_q[(m_old, m_old)] = tau / denom;
        self.q = new_q;
        self.a.push_row(&row);
        self.v.push(weight);
        self.w.push(weight);
        self.invalidate();
        if !self.conditioning_ok() {
            self.refactor()?;
        }
        Ok(())
    }

    /// Remove a constraint row; refuses to drop below a square system.
    pub fn delete(&mut self, index: usize) -> Result<()> {
        let m = self.rows();
        if index >= m {
            return Err(Error::InvalidArgument(format!(
                "delete index {index} out of range {m}"
            )));
        }
        if m <= self.cols() {
            return Err(Error::Structural(format!(
                "deleting a row would leave {} rows for {} columns",
                m - 1,
                self.cols()
            )));
        }
        let vi = self.v[index];
        let tau = self.q[(index, index)];
        let denom = 1.0 - vi * tau;
        if !(denom > 1e-10) {
            // The row carries an entire direction; removing it would make the
            // Gram matrix singular.
            return Err(Error::RankDeficient("pm delete of full-leverage row"));
        }
        let c = vi / denom;
        let u = self.minv.matvec(self.a.row(index));
        for i in 0..self.cols() {
            for j in 0..self.cols() {
                self.minv[(i, j)] += c * u[i] * u[j];
            }
        }
        let mut new_q = Matrix::zeros(m - 1, m - 1);
        for (ni, oi) in (0..m).filter(|&r| r != index).enumerate() {
            for (nj, oj) in (0..m).filter(|&r| r != index).enumerate() {
                new_q[(ni, nj)] = self.q[(oi, oj)] + c * self.q[(oi, index)] * self.q[(index, oj)];
            }
        }
        self.q = new_q;
        self.a.remove_row(index);
        self.v.remove(index);
        self.w.remove(index);
        self.invalidate();
        if !self.conditioning_ok() {
            self.refactor()?;
        }
        Ok(())
    }

    /// Exact log-drift between target and maintained weights; bounded by
    /// `log(1 + eps)` after every update.
    pub fn max_log_drift(&self) -> f64 {
        self.w
            .iter()
            .zip(&self.v)
            .map(|(w, v)| (w.ln() - v.ln()).abs())
            .fold(0.0, f64::max)
    }
}
