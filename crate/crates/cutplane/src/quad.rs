//! Gauss-Legendre quadrature on [0, 1] and tensor-product cubature.
//!
//! Nodes and weights come from the eigendecomposition of the Jacobi matrix
//! (Golub-Welsch). Weights are normalized so they sum to one: the rule
//! integrates against the uniform measure on [0, 1].

use crate::error::{Error, Result};
use crate::mat::tridiagonal_eigen_first_components;

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// The `n`-point Gauss-Legendre rule mapped to [0, 1].
    ///
    /// Exact for polynomials of degree up to `2n - 1`.
    pub fn gauss(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "quadrature rule needs at least one node".into(),
            ));
        }
        // Jacobi matrix for Legendre polynomials on [-1, 1]: zero diagonal,
        // off-diagonal b_k = k / sqrt(4k^2 - 1).
        let diag = vec![0.0; n];
        let off: Vec<f64> = (1..n)
            .map(|k| {
                let k = k as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            })
            .collect();
        let pairs = tridiagonal_eigen_first_components(&diag, &off)?;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for (x, first) in pairs {
            // Weight on [-1,1] is 2 * first^2; map x -> (x+1)/2 and divide the
            // weight by 2 so the weights sum to 1 on [0,1].
            nodes.push(0.5 * (x + 1.0));
            weights.push(first * first);
        }
        Ok(QuadratureRule { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in (0, 1), ascending.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Nonnegative weights summing to one.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Approximate `∫_0^1 f(t) dt`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for (&s, &w) in self.nodes.iter().zip(&self.weights) {
            let v = f(s);
            if !v.is_finite() {
                return Err(Error::Eval(format!("integrand not finite at node {s}")));
            }
            acc += w * v;
        }
        Ok(acc)
    }

    /// Approximate `∫_{[0,1]^d} f(t) dt` with the tensor product of this rule.
    pub fn integrate_tensor(&self, d: usize, mut f: impl FnMut(&[f64]) -> f64) -> Result<f64> {
        if d == 0 {
            return Err(Error::InvalidArgument(
                "tensor dimension must be >= 1".into(),
            ));
        }
        let n = self.len();
        let mut idx = vec![0usize; d];
        let mut point = vec![0.0; d];
        let mut acc = 0.0;
        loop {
            let mut w = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                point[k] = self.nodes[i];
                w *= self.weights[i];
            }
            let v = f(&point);
            if !v.is_finite() {
                return Err(Error::Eval(format!("integrand not finite at {point:?}")));
            }
            acc += w * v;
            // Mixed-radix increment.
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == d {
                    return Ok(acc);
                }
            }
        }
    }
}
