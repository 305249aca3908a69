//! Small dense linear programs in equality standard form, solved with a
//! two-phase primal simplex using Bland's rule. Sized for the certificate
//! and recovery programs in this crate (tens of variables), not for general
//! LP workloads.

use crate::error::{Error, Result};
use crate::mat::Matrix;

const PIVOT_TOL: f64 = 1e-9;

/// `minimize c^T x  subject to  A x = b, x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Matrix,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

struct Tableau {
    /// rows x (cols + 1); the last column is the right-hand side.
    t: Matrix,
    basis: Vec<usize>,
    rows: usize,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.t[(r, self.cols)]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[(r, c)];
        for j in 0..=self.cols {
            self.t[(r, j)] /= p;
        }
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.t[(i, c)];
            if f == 0.0 {
                continue;
            }
            for j in 0..=self.cols {
                let v = self.t[(r, j)];
                self.t[(i, j)] -= f * v;
            }
        }
        self.basis[r] = c;
    }

    /// Minimize `obj` over the current feasible tableau with Bland's rule.
    /// Returns the reduced-cost row and objective value at optimality.
    fn optimize(&mut self, obj: &[f64]) -> Result<f64> {
        loop {
            // Reduced costs from the basis.
            let mut reduced = obj.to_vec();
            let mut value = 0.0;
            for (r, &b) in self.basis.iter().enumerate() {
                let cb = obj[b];
                if cb == 0.0 {
                    continue;
                }
                value += cb * self.rhs(r);
                for j in 0..self.cols {
                    reduced[j] -= cb * self.t[(r, j)];
                }
            }
            // Bland: smallest index with a negative reduced cost.
            let entering = (0..self.cols).find(|&j| reduced[j] < -PIVOT_TOL);
            let Some(c) = entering else {
                return Ok(value);
            };
            // Ratio test, ties broken by smallest basis variable.
            let mut best: Option<(f64, usize, usize)> = None;
            for r in 0..self.rows {
                let a = self.t[(r, c)];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    let key = (ratio, self.basis[r]);
                    match best {
                        None => best = Some((key.0, key.1, r)),
                        Some((br, bv, _)) => {
                            if ratio < br - PIVOT_TOL || (ratio < br + PIVOT_TOL && key.1 < bv) {
                                best = Some((key.0, key.1, r));
                            }
                        }
                    }
                }
            }
            let Some((_, _, r)) = best else {
                return Err(Error::Infeasible("unbounded linear program".into()));
            };
            self.pivot(r, c);
        }
    }
}

/// Solve the standard-form program. Rows may be linearly dependent; redundant
/// rows are detected and dropped during phase one.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    let k = lp.constraints.rows();
    let n = lp.constraints.cols();
    if lp.objective.len() != n || lp.rhs.len() != k {
        return Err(Error::DimensionMismatch {
            context: "solve_lp",
            expected: n,
            got: lp.objective.len(),
        });
    }
    // Build the phase-one tableau with one artificial per row; flip signs so
    // the right-hand side is nonnegative.
    let cols = n + k;
    let mut t = Matrix::zeros(k, cols + 1);
    for r in 0..k {
        let sign = if lp.rhs[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(r, j)] = sign * lp.constraints[(r, j)];
        }
        t[(r, n + r)] = 1.0;
        t[(r, cols)] = sign * lp.rhs[r];
    }
    let mut tab = Tableau {
        t,
        basis: (n..n + k).collect(),
        rows: k,
        cols,
    };

    // Phase one: minimize the artificial mass.
    let mut phase1_obj = vec![0.0; cols];
    for j in n..cols {
        phase1_obj[j] = 1.0;
    }
    let infeasibility = tab.optimize(&phase1_obj)?;
    if infeasibility > 1e-7 {
        return Err(Error::Infeasible(format!(
            "phase one residual {infeasibility:.3e}"
        )));
    }
    // Drive remaining artificials out of the basis where possible.
    for r in 0..tab.rows {
        if tab.basis[r] >= n {
            let c = (0..n).find(|&j| tab.t[(r, j)].abs() > 1e-7);
            if let Some(c) = c {
                tab.pivot(r, c);
            }
            // Otherwise the row is redundant (all-zero in the original
            // variables); it stays basic at level ~0 and never pivots again.
        }
    }

    // Phase two on the original objective; artificials get a prohibitive cost
    // so they stay out.
    let mut phase2_obj = vec![0.0; cols];
    phase2_obj[..n].copy_from_slice(&lp.objective);
    let big = 1e12 * (1.0 + lp.objective.iter().map(|c| c.abs()).fold(0.0, f64::max));
    for j in n..cols {
        phase2_obj[j] = big;
    }
    let objective = tab.optimize(&phase2_obj)?;

    let mut x = vec![0.0; n];
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.rhs(r);
        }
    }
    Ok(LpSolution { x, objective })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_textbook_program() {
        // min -x - 2y  s.t.  x + y + s1 = 4, y + s2 = 2, all >= 0.
        // Optimum at (2, 2): objective -6.
        let lp = LinearProgram {
            objective: vec![-1.0, -2.0, 0.0, 0.0],
            constraints: Matrix::from_rows(&[vec![1.0, 1.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 1.0]]),
            rhs: vec![4.0, 2.0],
        };
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.objective + 6.0).abs() < 1e-9);
        assert!((sol.x[0] - 2.0).abs() < 1e-9);
        assert!((sol.x[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasibility() {
        // x = 1 and x = 2 simultaneously.
        let lp = LinearProgram {
            objective: vec![0.0],
            constraints: Matrix::from_rows(&[vec![1.0], vec![1.0]]),
            rhs: vec![1.0, 2.0],
        };
        assert!(matches!(solve_lp(&lp), Err(Error::Infeasible(_))));
    }

    #[test]
    fn detects_unbounded() {
        // min -x with only x - y = 0.
        let lp = LinearProgram {
            objective: vec![-1.0, 0.0],
            constraints: Matrix::from_rows(&[vec![1.0, -1.0]]),
            rhs: vec![0.0],
        };
        assert!(solve_lp(&lp).is_err());
    }

    #[test]
    fn handles_negative_rhs_and_redundant_rows() {
        // -x - y = -3 duplicated; min x subject to x + y = 3.
        let lp = LinearProgram {
            objective: vec![1.0, 0.0],
            constraints: Matrix::from_rows(&[vec![-1.0, -1.0], vec![-1.0, -1.0]]),
            rhs: vec![-3.0, -3.0],
        };
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.x[0]).abs() < 1e-9);
        assert!((sol.x[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn simplex_on_simplex_constraint() {
        // max 3a + b + 2c on the probability simplex = min of the negation.
        let lp = LinearProgram {
            objective: vec![-3.0, -1.0, -2.0],
            constraints: Matrix::from_rows(&[vec![1.0, 1.0, 1.0]]),
            rhs: vec![1.0],
        };
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        assert!((sol.objective + 3.0).abs() < 1e-9);
    }
}
