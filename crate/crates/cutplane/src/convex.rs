//! Convex minimization by reduction to the feasibility driver: every
//! feasible query point contributes its subgradient halfspace as a cut, and
//! the best feasible point seen is returned.

use crate::cutting_plane::{CutPlaneConfig, OracleResponse, PolytopeState, SeparationOracle};
use crate::error::{Error, Result};
use crate::mat::norm2;

/// Value-and-subgradient oracle for a convex function.
pub trait SubgradientOracle {
    fn eval(&mut self, x: &[f64]) -> (f64, Vec<f64>);
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> SubgradientOracle for F {
    fn eval(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        self(x)
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub subgradient_calls: usize,
    pub iterations: usize,
}

/// Minimize a convex function over a convex set `S` contained in the box of
/// the given radius. `minwidth` is the smallest directional width of `S`
/// (2x the inner radius for boxes and balls); together with `alpha` it sets
/// the iteration budget. The returned point satisfies the relative-range
/// guarantee `f(x) - min <= alpha (max - min)` over `S`.
pub fn minimize_convex(
    objective: &mut dyn SubgradientOracle,
    domain: &mut dyn SeparationOracle,
    n: usize,
    radius: f64,
    alpha: f64,
    minwidth: f64,
    cfg: CutPlaneConfig,
) -> Result<MinimizeResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    if !(minwidth > 0.0) {
        return Err(Error::InvalidArgument("minwidth must be positive".into()));
    }
    let kappa = (n as f64) * (2.0 * radius / minwidth) / alpha;
    let budget = (cfg.budget_factor * n as f64 * kappa.ln().max(1.0)).ceil() as usize;
    let mut state = PolytopeState::bounding_box(n, radius, cfg)?;
    state.recenter()?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut sub_calls = 0usize;
    let mut iterations = 0usize;
    while iterations < budget {
        iterations += 1;
        state.drop_phase()?;
        let z = state.query_point().to_vec();
        match domain.query(&z) {
            OracleResponse::Separator { a, b } => {
                state.add_cut(&a, b, iterations as u64)?;
            }
            OracleResponse::Inside => {
                let (value, grad) = objective.eval(&z);
                sub_calls += 1;
                if best.as_ref().map(|(_, v)| value < *v).unwrap_or(true) {
                    best = Some((z.clone(), value));
                }
                let gnorm = norm2(&grad);
                if gnorm <= 1e-14 {
                    // Exact stationary point of a convex function.
                    return Ok(MinimizeResult {
                        point: z,
                        value,
                        subgradient_calls: sub_calls,
                        iterations,
                    });
                }
                // Level cut: minimizers satisfy g^T (w - z) <= 0.
                let a: Vec<f64> = grad.iter().map(|g| -g).collect();
                let b = crate::mat::dot(&a, &z);
                state.add_cut(&a, b, iterations as u64)?;
            }
        }
        state.recenter()?;
    }
    let (point, value) = best.ok_or_else(|| {
        Error::BudgetExhausted("no feasible query point produced by the budget".into())
    })?;
    Ok(MinimizeResult {
        point,
        value,
        subgradient_calls: sub_calls,
        iterations,
    })
}

/// Membership oracle for the box `|x|_inf <= radius`: separates with the
/// violated face.
pub struct BoxDomain {
    pub radius: f64,
}

impl SeparationOracle for BoxDomain {
    fn query(&mut self, x: &[f64]) -> OracleResponse {
        for (j, &v) in x.iter().enumerate() {
            if v > self.radius {
                let mut a = vec![0.0; x.len()];
                a[j] = -1.0; // -x_j >= -radius
                return OracleResponse::Separator { a, b: -self.radius };
            }
            if v < -self.radius {
                let mut a = vec![0.0; x.len()];
                a[j] = 1.0; // x_j >= -radius
                return OracleResponse::Separator { a, b: -self.radius };
            }
        }
        OracleResponse::Inside
    }
}
