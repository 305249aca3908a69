//! Seeded Gaussian sketching.
//!
//! A sketch is a materialized `r x m` matrix with independent `N(0, 1/r)`
//! entries, generated deterministically from a seed. For any fixed vectors,
//! `(Rx)^T (Ry)` is an unbiased estimate of `x^T y` with variance at most
//! `(3/r) |x|^2 |y|^2`.

use crate::error::{Error, Result};
use crate::mat::{dot, Matrix};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct GaussianSketch {
    r: usize,
    m: usize,
    seed: u64,
    data: Matrix,
}

/// Build an `r x m` Gaussian sketch from a seed. Same `(r, m, seed)` always
/// yields the identical matrix; entries are filled row-major.
pub fn make_sketch(r: usize, m: usize, seed: u64) -> GaussianSketch {
    assert!(r >= 1 && m >= 1, "sketch dims must be positive");
    let mut rng = Rng::from_seed(seed);
    let scale = 1.0 / (r as f64).sqrt();
    let data = Matrix::from_fn(r, m, |_, _| rng.normal() * scale);
    GaussianSketch { r, m, seed, data }
}

impl GaussianSketch {
    pub fn sketch_dim(&self) -> usize {
        self.r
    }

    pub fn ambient_dim(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.data
    }

    /// `R x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.m {
            return Err(Error::DimensionMismatch {
                context: "sketch apply",
                expected: self.m,
                got: x.len(),
            });
        }
        Ok(self.data.matvec(x))
    }

    /// `(Rx)^T (Ry)`, the sketched estimate of `x^T y`.
    pub fn sketched_inner(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let rx = self.apply(x)?;
        let ry = self.apply(y)?;
        Ok(dot(&rx, &ry))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_seed;

    #[test]
    fn same_seed_same_matrix() {
        let a = make_sketch(8, 16, 321);
        let b = make_sketch(8, 16, 321);
        assert_eq!(a.as_matrix(), b.as_matrix());
        let c = make_sketch(8, 16, 322);
        assert_ne!(a.as_matrix(), c.as_matrix());
    }

    #[test]
    fn entry_statistics_match_model() {
        let r = 64;
        let m = 64;
        let s = make_sketch(r, m, 7);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for i in 0..r {
            for j in 0..m {
                let v = s.as_matrix()[(i, j)];
                sum += v;
                sum_sq += v * v;
            }
        }
        let count = (r * m) as f64;
        let mean = sum / count;
        // std of the mean is 1/sqrt(r * m * r); allow 3 sigma.
        let tol = 3.0 / ((r * m * r) as f64).sqrt();
        assert!(mean.abs() <= tol, "mean {mean} tol {tol}");
        let var = sum_sq / count - mean * mean;
        let expected = 1.0 / r as f64;
        assert!((var - expected).abs() <= 0.1 * expected, "var {var}");
    }

    #[test]
    fn zero_vector_sketches_to_zero() {
        let s = make_sketch(4, 6, 1);
        let z = vec![0.0; 6];
        let y = vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0];
        assert_eq!(s.sketched_inner(&z, &y).unwrap(), 0.0);
    }

    #[test]
    fn unbiased_on_unit_vector() {
        let r = 16;
        let m = 8;
        let mut e1 = vec![0.0; m];
        e1[0] = 1.0;
        let trials = 2000;
        let mut mean = 0.0;
        for k in 0..trials {
            let s = make_sketch(r, m, derive_seed(1001, &[k]));
            mean += s.sketched_inner(&e1, &e1).unwrap();
        }
        mean /= trials as f64;
        assert!((mean - 1.0).abs() <= 0.05, "mean {mean}");
    }

    #[test]
    fn variance_bound_on_orthogonal_pair() {
        let r = 16;
        let m = 8;
        let mut x = vec![0.0; m];
        let mut y = vec![0.0; m];
        x[0] = 1.0;
        y[1] = 1.0;
        let trials = 2000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for k in 0..trials {
            let s = make_sketch(r, m, derive_seed(2002, &[k]));
            let v = s.sketched_inner(&x, &y).unwrap();
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / trials as f64;
        let var = sum_sq / trials as f64 - mean * mean;
        let bound = 3.0 / r as f64;
        assert!(var <= bound * 1.3, "var {var} bound {bound}");
        assert!(mean.abs() <= 0.05);
    }

    #[test]
    fn sketched_inner_is_linear_in_first_argument() {
        let s = make_sketch(8, 5, 55);
        let x = vec![0.3, -1.0, 2.0, 0.7, -0.2];
        let z = vec![1.1, 0.4, -0.6, 0.0, 2.5];
        let y = vec![0.9, 0.9, -1.3, 0.2, 0.4];
        let (a, b) = (1.7, -0.45);
        let combined: Vec<f64> = x.iter().zip(&z).map(|(xi, zi)| a * xi + b * zi).collect();
        let lhs = s.sketched_inner(&combined, &y).unwrap();
        let rhs = a * s.sketched_inner(&x, &y).unwrap() + b * s.sketched_inner(&z, &y).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = make_sketch(4, 6, 1);
        assert!(s.sketched_inner(&[1.0; 5], &[1.0; 6]).is_err());
    }
}
