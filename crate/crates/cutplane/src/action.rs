//! Update actions consumed by the leverage-score maintainers: full weight
//! updates, row insertion, row deletion, plus the per-action size conditions
//! that every maintainer assumes.

use crate::error::{Error, Result};
use crate::mat::{dot, norm2, Cholesky, Matrix};
use crate::ops::weighted_gram_matrix;

/// One update to a weighted constraint system.
#[derive(Debug, Clone)]
pub enum UpdateAction {
    /// Replace the whole weight vector.
    WeightUpdate(Vec<f64>),
    /// Append a constraint row with its weight.
    Insert { row: Vec<f64>, weight: f64 },
    /// Remove the row at this index (indices refer to the state at the time
    /// the action is applied).
    Delete(usize),
}

/// An ordered list of actions against a base system.
#[derive(Debug, Clone, Default)]
pub struct ActionSequence {
    actions: Vec<UpdateAction>,
}

/// Per-action caps: weight updates move `log w` by at most `weight_step` in
/// l2; inserted or deleted rows carry leverage at most `row_leverage`.
#[derive(Debug, Clone, Copy)]
pub struct ActionCaps {
    pub weight_step: f64,
    pub row_leverage: f64,
    pub max_len: usize,
}

impl Default for ActionCaps {
    fn default() -> Self {
        ActionCaps {
            weight_step: 0.01,
            row_leverage: 0.01,
            max_len: 4096,
        }
    }
}

/// Matrices and weights after each action, starting from the base state.
#[derive(Debug, Clone)]
pub struct SnapshotTrail {
    pub matrices: Vec<Matrix>,
    pub weights: Vec<Vec<f64>>,
}

impl ActionSequence {
    pub fn new(actions: Vec<UpdateAction>) -> Self {
        ActionSequence { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[UpdateAction] {
        &self.actions
    }

    pub fn push(&mut self, action: UpdateAction) {
        self.actions.push(action);
    }

    /// Replay the sequence from `(a0, w0)`, checking each action's size
    /// condition, and return every intermediate state. The slack `1e-9` on
    /// the caps absorbs round-off from callers that drive the conditions to
    /// their boundary.
    pub fn validate_and_snapshot(
        &self,
        a0: &Matrix,
        w0: &[f64],
        caps: &ActionCaps,
    ) -> Result<SnapshotTrail> {
        if self.len() > caps.max_len {
            return Err(Error::AssumptionViolated(format!(
                "sequence of {} actions exceeds cap {}",
                self.len(),
                caps.max_len
            )));
        }
        let mut matrices = vec![a0.clone()];
        let mut weights = vec![w0.to_vec()];
        for (k, act) in self.actions.iter().enumerate() {
            let a_prev = matrices.last().unwrap();
            let w_prev = weights.last().unwrap();
            match act {
                UpdateAction::WeightUpdate(w_new) => {
                    if w_new.len() != w_prev.len() {
                        return Err(Error::DimensionMismatch {
                            context: "weight update",
                            expected: w_prev.len(),
                            got: w_new.len(),
                        });
                    }
                    if !w_new.iter().all(|&x| x > 0.0 && x.is_finite()) {
                        return Err(Error::AssumptionViolated(format!(
                            "action {k}: weights must stay positive"
                        )));
                    }
                    let log_step: Vec<f64> = w_new
                        .iter()
                        .zip(w_prev)
                        .map(|(n, p)| n.ln() - p.ln())
                        .collect();
                    let step = norm2(&log_step);
                    if step > caps.weight_step + 1e-9 {
                        return Err(Error::AssumptionViolated(format!(
                            "action {k}: log-weight step {step:.3e} exceeds {}",
                            caps.weight_step
                        )));
                    }
                    matrices.push(a_prev.clone());
                    weights.push(w_new.clone());
                }
                UpdateAction::Insert { row, weight } => {
                    if row.len() != a_prev.cols() {
                        return Err(Error::DimensionMismatch {
                            context: "insert row",
                            expected: a_prev.cols(),
                            got: row.len(),
                        });
                    }
                    if !(*weight > 0.0 && weight.is_finite()) {
                        return Err(Error::AssumptionViolated(format!(
                            "action {k}: insert weight must be positive"
                        )));
                    }
                    let lev = row_leverage(a_prev, w_prev, row, *weight)?;
                    if lev > caps.row_leverage + 1e-9 {
                        return Err(Error::AssumptionViolated(format!(
                            "action {k}: inserted row leverage {lev:.3e} exceeds {}",
                            caps.row_leverage
                        )));
                    }
                    let mut a_next = a_prev.clone();
                    a_next.push_row(row);
                    let mut w_next = w_prev.clone();
                    w_next.push(*weight);
                    matrices.push(a_next);
                    weights.push(w_next);
                }
                UpdateAction::Delete(index) => {
                    if *index >= a_prev.rows() {
                        return Err(Error::InvalidArgument(format!(
                            "action {k}: delete index {index} out of range"
                        )));
                    }
                    if a_prev.rows() <= a_prev.cols() {
                        return Err(Error::Structural(format!(
                            "action {k}: delete would drop below a square system"
                        )));
                    }
                    let row = a_prev.row(*index).to_vec();
                    let lev = row_leverage(a_prev, w_prev, &row, w_prev[*index])?;
                    // The removed mass must be spectrally small relative to
                    // the rest; sigma/(1-sigma) <= cap is the exact form.
                    let ratio = lev / (1.0 - lev).max(1e-12);
                    if ratio > caps.row_leverage + 1e-9 {
                        return Err(Error::AssumptionViolated(format!(
                            "action {k}: deleted row leverage ratio {ratio:.3e} exceeds {}",
                            caps.row_leverage
                        )));
                    }
                    let mut a_next = a_prev.clone();
                    a_next.remove_row(*index);
                    let mut w_next = w_prev.clone();
                    w_next.remove(*index);
                    matrices.push(a_next);
                    weights.push(w_next);
                }
            }
        }
        Ok(SnapshotTrail { matrices, weights })
    }
}

/// Leverage `w_a a^T (A^T W A)^{-1} a` of a row against an existing system.
pub fn row_leverage(a: &Matrix, w: &[f64], row: &[f64], weight: f64) -> Result<f64> {
    let gram = weighted_gram_matrix(a, w);
    let chol = Cholesky::new(&gram).map_err(|_| Error::RankDeficient("row leverage check"))?;
    let y = chol.forward_sub(row);
    Ok(weight * dot(&y, &y))
}
