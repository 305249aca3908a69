//! Dense row-major matrices and the factorizations the rest of the crate
//! builds on: Cholesky, partially pivoted LU, and a symmetric eigensolver
//! (Householder tridiagonalization + implicit QL).
//!
//! Everything here targets desk-scale problems (a few hundred rows), so the
//! kernels favor clarity and determinism over blocking tricks.

use crate::error::{Error, Result};
use std::ops::{Index, IndexMut};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = Matrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            m.row_mut(i).copy_from_slice(row);
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Matrix::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `self * other`, plain i-k-j loop (cache friendly for row-major).
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dims");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let arow = self.row(i);
            let orow = out.row_mut(i);
            for (k, &aik) in arow.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let brow = other.row(k);
                for j in 0..brow.len() {
                    orow[j] += aik * brow[j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec dims");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `self^T * v`.
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "tr_matvec dims");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for (j, &aij) in self.row(i).iter().enumerate() {
                out[j] += aij * vi;
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= s;
        }
        out
    }

    /// Scale row `i` by `d[i]` in place.
    pub fn scale_rows(&mut self, d: &[f64]) {
        assert_eq!(self.rows, d.len());
        for i in 0..self.rows {
            let s = d[i];
            for v in self.row_mut(i) {
                *v *= s;
            }
        }
    }

    /// Scale column `j` by `d[j]` in place.
    pub fn scale_cols(&mut self, d: &[f64]) {
        assert_eq!(self.cols, d.len());
        for i in 0..self.rows {
            let row = self.row_mut(i);
            for (v, s) in row.iter_mut().zip(d) {
                *v *= s;
            }
        }
    }

    /// Entry-wise square.
    pub fn entrywise_square(&self) -> Matrix {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= *v;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Gather the listed rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.cols);
        for (k, &i) in idx.iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.row(i));
        }
        out
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols);
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn remove_row(&mut self, i: usize) {
        assert!(i < self.rows);
        let start = i * self.cols;
        self.data.drain(start..start + self.cols);
        self.rows -= 1;
    }

    /// Force exact symmetry by averaging with the transpose.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..i {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

// ---- vector helpers ----

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale_vec(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

// ---- Cholesky ----

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Factor an SPD matrix. A non-positive pivot means the matrix is not
    /// (numerically) positive definite.
    pub fn new(m: &Matrix) -> Result<Self> {
        assert_eq!(m.rows(), m.cols(), "cholesky needs square input");
        let n = m.rows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::RankDeficient("cholesky"));
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    /// Solve `L y = b`.
    pub fn forward_sub(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            let row = self.l.row(i);
            for k in 0..i {
                s -= row[k] * y[k];
            }
            y[i] = s / row[i];
        }
        y
    }

    /// Solve `L^T x = y`.
    pub fn backward_sub(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solve `M x = b`.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        self.backward_sub(&self.forward_sub(b))
    }

    /// Solve `M X = B` column by column.
    pub fn solve_mat(&self, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let col = b.column(j);
            let x = self.solve_vec(&col);
            for i in 0..b.rows() {
                out[(i, j)] = x[i];
            }
        }
        out
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut inv = self.solve_mat(&Matrix::identity(n));
        inv.symmetrize();
        inv
    }

    /// log det of the factored matrix: `2 * sum_i log L_ii`.
    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>() * 2.0
    }
}

// ---- LU with partial pivoting (for small, possibly indefinite systems) ----

#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(m: &Matrix) -> Result<Self> {
        assert_eq!(m.rows(), m.cols());
        let n = m.rows();
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in k + 1..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::SingularSystem("lu"));
            }
            if p != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = t;
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                for j in k + 1..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] -= f * v;
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.lu[(i, k)] * y[k];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.lu[(i, k)] * y[k];
            }
            y[i] = s / self.lu[(i, i)];
        }
        y
    }

    pub fn solve_mat(&self, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve_vec(&b.column(j));
            for i in 0..b.rows() {
                out[(i, j)] = x[i];
            }
        }
        out
    }

    pub fn inverse(&self) -> Matrix {
        self.solve_mat(&Matrix::identity(self.lu.rows()))
    }
}

// ---- symmetric eigensolver ----

/// Eigenvalues (ascending) and first-row eigenvector components of a
/// symmetric tridiagonal matrix, via implicit QL with Wilkinson shifts.
///
/// `diag` holds the diagonal, `off` the subdiagonal (`off.len() == diag.len() - 1`).
/// The returned pairs are `(eigenvalue, first component of its unit eigenvector)`.
pub fn tridiagonal_eigen_first_components(diag: &[f64], off: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = diag.len();
    assert!(n > 0 && off.len() + 1 == n);
    let mut d = diag.to_vec();
    let mut e = {
        let mut e = off.to_vec();
        e.push(0.0);
        e
    };
    // First row of the accumulated rotation matrix; starts as e_1^T.
    let mut z = vec![0.0; n];
    z[0] = 1.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            // Find a small subdiagonal element.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::SingularSystem(
                    "tridiagonal eigensolver failed to converge",
                ));
            }
            // Wilkinson shift.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0, 1.0);
            let mut p = 0.0;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                // Apply the rotation to the tracked first row.
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if r == 0.0 && m > l + 1 {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut pairs: Vec<(f64, f64)> = d.into_iter().zip(z).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(pairs)
}

/// All eigenvalues of a dense symmetric matrix, ascending.
/// Householder tridiagonalization followed by the QL sweep above.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    assert_eq!(m.rows(), m.cols());
    let n = m.rows();
    if n == 0 {
        return Ok(vec![]);
    }
    if n == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let mut a = m.clone();
    a.symmetrize();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n - 1];

    // Householder reduction to tridiagonal form (values only).
    for k in 0..n - 2 {
        let mut alpha = 0.0;
        for i in k + 1..n {
            alpha += a[(i, k)] * a[(i, k)];
        }
        let mut alpha = alpha.sqrt();
        if alpha == 0.0 {
            e[k] = 0.0;
            continue;
        }
        if a[(k + 1, k)] > 0.0 {
            alpha = -alpha;
        }
        let r2 = alpha * alpha - a[(k + 1, k)] * alpha;
        let mut v = vec![0.0; n];
        v[k + 1] = a[(k + 1, k)] - alpha;
        for i in k + 2..n {
            v[i] = a[(i, k)];
        }
        // p = A v / r2 ; restrict to the trailing block.
        let mut p = vec![0.0; n];
        for i in k + 1..n {
            let mut s = 0.0;
            for j in k + 1..n {
                s += a[(i, j)] * v[j];
            }
            p[i] = s / r2;
        }
        let kvp = {
            let mut s = 0.0;
            for i in k + 1..n {
                s += v[i] * p[i];
            }
            s / (2.0 * r2)
        };
        for i in k + 1..n {
            p[i] -= kvp * v[i];
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[(i, j)] -= v[i] * p[j] + p[i] * v[j];
            }
        }
        a[(k + 1, k)] = alpha;
        a[(k, k + 1)] = alpha;
    }
    for i in 0..n {
        d[i] = a[(i, i)];
    }
    for i in 0..n - 1 {
        e[i] = a[(i + 1, i)];
    }

    let pairs = tridiagonal_eigen_first_components(&d, &e)?;
    Ok(pairs.into_iter().map(|(ev, _)| ev).collect())
}

/// Spectral norm estimate via power iteration on `m^T m`.
pub fn spectral_norm(m: &Matrix, iters: usize) -> f64 {
    let n = m.cols();
    if n == 0 || m.rows() == 0 {
        return 0.0;
    }
    // Deterministic start vector with all spectral components populated.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 + 1.0).sin()).collect();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = m.tr_matvec(&m.matvec(&v));
        let norm = norm2(&w);
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = scale_vec(&w, 1.0 / norm);
    }
    lambda.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn cholesky_round_trip() {
        let m = Matrix::from_rows(&[
            vec![4.0, 2.0, 0.6],
            vec![2.0, 5.0, 1.0],
            vec![0.6, 1.0, 3.0],
        ]);
        let ch = Cholesky::new(&m).unwrap();
        let l = ch.factor();
        let back = l.matmul(&l.transpose());
        assert!(back.max_abs_diff(&m) < 1e-12);
        let b = vec![1.0, -2.0, 0.5];
        let x = ch.solve_vec(&b);
        let bx = m.matvec(&x);
        for (u, v) in bx.iter().zip(&b) {
            approx(*u, *v, 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert_eq!(
            Cholesky::new(&m).unwrap_err(),
            Error::RankDeficient("cholesky")
        );
    }

    #[test]
    fn lu_solves_indefinite() {
        let m = Matrix::from_rows(&[vec![0.0, 2.0], vec![3.0, -4.0]]);
        let lu = Lu::new(&m).unwrap();
        let x = lu.solve_vec(&[2.0, 5.0]);
        let b = m.matvec(&x);
        approx(b[0], 2.0, 1e-12);
        approx(b[1], 5.0, 1e-12);
    }

    #[test]
    fn tridiagonal_eigen_matches_known_2x2() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3, eigenvectors (1,∓1)/√2.
        let pairs = tridiagonal_eigen_first_components(&[2.0, 2.0], &[1.0]).unwrap();
        approx(pairs[0].0, 1.0, 1e-12);
        approx(pairs[1].0, 3.0, 1e-12);
        approx(pairs[0].1.abs(), (0.5f64).sqrt(), 1e-12);
        approx(pairs[1].1.abs(), (0.5f64).sqrt(), 1e-12);
    }

    #[test]
    fn symmetric_eigenvalues_match_trace_and_det() {
        let m = Matrix::from_rows(&[
            vec![3.0, 1.0, 0.5, 0.0],
            vec![1.0, 4.0, 1.5, 0.2],
            vec![0.5, 1.5, 5.0, 1.0],
            vec![0.0, 0.2, 1.0, 2.0],
        ]);
        let ev = symmetric_eigenvalues(&m).unwrap();
        let trace: f64 = (0..4).map(|i| m[(i, i)]).sum();
        approx(ev.iter().sum::<f64>(), trace, 1e-10);
        // determinant via LU for cross-check
        let lu = Lu::new(&m).unwrap();
        let inv = lu.inverse();
        let prod: f64 = ev.iter().product();
        // det(M) * det(M^{ -1}) = 1
        let ev_inv = symmetric_eigenvalues(&inv).unwrap();
        approx(prod * ev_inv.iter().product::<f64>(), 1.0, 1e-8);
    }

    #[test]
    fn spectral_norm_of_diag() {
        let m = Matrix::diag(&[1.0, -7.0, 3.0]);
        approx(spectral_norm(&m, 100), 7.0, 1e-9);
    }
}
