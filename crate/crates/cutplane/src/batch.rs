//! Batched low-rank maintenance of leverage-score changes.
//!
//! [`monotone_lowrank_delta`] estimates `sigma(w_new) - sigma(w)` for a
//! monotone weight change through approximate Gram inverses, using the
//! split `c_i = (w_new - w)_i tau(w_new)_i + w_i (tau(w_new) - tau(w))_i`
//! with the second term evaluated in Woodbury form.
//!
//! [`batched_update`] consumes a whole action sequence: it splits every
//! weight update into a positive and a negative part, moves all mass
//! increases in front of all decreases, merges and sparsifies each
//! fixed-length monotone phase, and accumulates per-phase deltas. It returns
//! sparsified weights `v` (multiplicatively close to the true final weights)
//! together with the accumulated leverage change.

use crate::action::{ActionSequence, UpdateAction};
use crate::error::{Error, Result};
use crate::mat::{dot, norm2, Cholesky, Lu, Matrix};
use crate::ops::{
    leverage_from_cholesky, neumann_terms_needed, preconditioned_inverse_apply,
    weighted_gram_matrix,
};
use std::collections::HashMap;

/// An explicit preconditioner for a Gram inverse: `minv` is the inverse of
/// some SPD `B` with `B <= A^T W A <= kappa * B`. With `kappa = 1` the
/// operator is the exact inverse.
#[derive(Debug, Clone)]
pub struct InverseApprox {
    pub minv: Matrix,
    pub kappa: f64,
}

impl InverseApprox {
    pub fn exact(gram: &Matrix) -> Result<Self> {
        let chol = Cholesky::new(gram).map_err(|_| Error::RankDeficient("inverse approx"))?;
        Ok(InverseApprox {
            minv: chol.inverse(),
            kappa: 1.0,
        })
    }

    /// Apply an operator `U_eps` with `U_eps <= (A^T W A)^{-1} <= (1 + eps) U_eps`
    /// in the SPD order, truncating the preconditioned Neumann series at the
    /// first length that meets `eps`.
    pub fn apply_tight(&self, gram: &Matrix, eps: f64, v: &Matrix) -> Result<Matrix> {
        let terms = if self.kappa <= 1.0 {
            0
        } else {
            // kappa (1 - 1/kappa)^{t+1} <= eps/2 makes the upper factor
            // 1/(1 - .) at most 1 + eps.
            neumann_terms_needed(self.kappa, 0.5 * eps.clamp(1e-15, 0.9))
        };
        preconditioned_inverse_apply(&self.minv, gram, self.kappa, terms, v)
    }
}

/// Exact sigma(w_new) - sigma(w); the fallback when a low-rank inner system
/// is singular.
fn exact_delta(a: &Matrix, w_lo: &[f64], w_hi: &[f64]) -> Result<Vec<f64>> {
    let ch_lo = Cholesky::new(&weighted_gram_matrix(a, w_lo))
        .map_err(|_| Error::RankDeficient("exact delta"))?;
    let ch_hi = Cholesky::new(&weighted_gram_matrix(a, w_hi))
        .map_err(|_| Error::RankDeficient("exact delta"))?;
    let lo = leverage_from_cholesky(a, w_lo, &ch_lo);
    let hi = leverage_from_cholesky(a, w_hi, &ch_hi);
    Ok(hi.iter().zip(&lo).map(|(h, l)| h - l).collect())
}

/// Leverage drift of the base rows when PSD mass `S^T diag(d) S` (`d > 0`)
/// is added to their Gram matrix:
/// `c_i = w_i [ (A (M + Delta)^{-1} A^T)_{ii} - (A M^{-1} A^T)_{ii} ] <= 0`,
/// evaluated through `U_eps` in Woodbury form.
fn psd_add_drift(
    a: &Matrix,
    w: &[f64],
    gram_lo: &Matrix,
    u_lo: &InverseApprox,
    s_rows: &Matrix,
    d: &[f64],
    eps_tilde: f64,
) -> Result<Vec<f64>> {
    let k = s_rows.rows();
    debug_assert_eq!(k, d.len());
    let y = u_lo.apply_tight(gram_lo, eps_tilde, &s_rows.transpose())?; // n x k
    let mut inner = s_rows.matmul(&y); // k x k
    for i in 0..k {
        inner[(i, i)] += 1.0 / d[i];
    }
    let lu = Lu::new(&inner).map_err(|_| Error::SingularSystem("low-rank inner system"))?;
    let z = a.matmul(&y); // m x k
    let mut c = vec![0.0; a.rows()];
    for i in 0..a.rows() {
        let zi = z.row(i);
        let kz = lu.solve_vec(zi);
        c[i] = -w[i] * dot(zi, &kz);
    }
    Ok(c)
}

/// Gain term `(w_hi - w_lo)_i (A U_eps_hi A^T)_{ii}` on the changed rows.
fn weight_gain_term(
    a: &Matrix,
    s: &[usize],
    dw: &[f64],
    gram_hi: &Matrix,
    u_hi: &InverseApprox,
    eps_tilde: f64,
) -> Result<Vec<(usize, f64)>> {
    let a_s = a.select_rows(s);
    let x = u_hi.apply_tight(gram_hi, eps_tilde, &a_s.transpose())?; // n x k
    Ok(s.iter()
        .enumerate()
        .map(|(c, &i)| {
            let col = x.column(c);
            (i, dw[c] * dot(a.row(i), &col))
        })
        .collect())
}

fn weight_increase_delta(
    a: &Matrix,
    w_lo: &[f64],
    w_hi: &[f64],
    u_lo: &InverseApprox,
    u_hi: &InverseApprox,
    eps: f64,
) -> Result<Vec<f64>> {
    let m = a.rows();
    let s: Vec<usize> = (0..m).filter(|&i| w_hi[i] > w_lo[i]).collect();
    if s.is_empty() {
        return Ok(vec![0.0; m]);
    }
    let k = s.len();
    let beta = s.iter().map(|&i| w_hi[i] / w_lo[i]).fold(1.0f64, f64::max);
    let eps_tilde = eps / (3.0 * beta * (k as f64).sqrt());
    let dw: Vec<f64> = s.iter().map(|&i| w_hi[i] - w_lo[i]).collect();
    let gram_lo = weighted_gram_matrix(a, w_lo);
    let gram_hi = weighted_gram_matrix(a, w_hi);
    let mut c = match psd_add_drift(a, w_lo, &gram_lo, u_lo, &a.select_rows(&s), &dw, eps_tilde) {
        Ok(c) => c,
        Err(Error::SingularSystem(_)) => return exact_delta(a, w_lo, w_hi),
        Err(e) => return Err(e),
    };
    for (i, gain) in weight_gain_term(a, &s, &dw, &gram_hi, u_hi, eps_tilde)? {
        c[i] += gain;
    }
    Ok(c)
}

/// Estimate `sigma(w_new) - sigma(w)` for an entrywise-monotone weight change
/// with l2 error at most `eps`, given approximate inverses at both endpoints.
/// A decreasing change is handled by swapping the endpoints; mixed-sign
/// changes are rejected.
pub fn monotone_lowrank_delta(
    a: &Matrix,
    w: &[f64],
    w_new: &[f64],
    u: &InverseApprox,
    u_new: &InverseApprox,
    eps: f64,
) -> Result<Vec<f64>> {
    if w.len() != a.rows() || w_new.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            context: "monotone_lowrank_delta",
            expected: a.rows(),
            got: w_new.len(),
        });
    }
    let any_up = w_new.iter().zip(w).any(|(n, o)| n > o);
    let any_down = w_new.iter().zip(w).any(|(n, o)| n < o);
    match (any_up, any_down) {
        (false, false) => Ok(vec![0.0; a.rows()]),
        (true, true) => Err(Error::InvalidArgument(
            "weight change must be entrywise monotone".into(),
        )),
        (true, false) => weight_increase_delta(a, w, w_new, u, u_new, eps),
        (false, true) => {
            let c = weight_increase_delta(a, w_new, w, u_new, u, eps)?;
            Ok(c.into_iter().map(|x| -x).collect())
        }
    }
}

// ---- batched update ----

#[derive(Debug, Clone)]
pub struct BatchConfig {
    /// Target l2 error of the accumulated leverage change.
    pub tol: f64,
    /// Sparsification threshold: per-phase weight deltas smaller than
    /// `eta * w` (entrywise) are dropped.
    pub eta: f64,
    /// Phase length; monotone runs are processed in blocks of this size.
    pub phase_len: usize,
}

impl BatchConfig {
    pub fn for_dim(n: usize) -> Self {
        let ln = (n.max(2) as f64).ln();
        BatchConfig {
            tol: 1e-8,
            eta: 1e-3,
            phase_len: (ln * ln * ln).ceil().max(4.0) as usize,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchedOutcome {
    /// Sparsified final weights `v`, multiplicatively close to the true ones.
    pub w_mid: Vec<f64>,
    /// Accumulated leverage change on the final rows: for rows present in the
    /// base state this approximates `sigma_final(v) - sigma_base(w0)`; rows
    /// inserted along the way carry their estimated leverage outright.
    pub delta_sigma: Vec<f64>,
    /// For every final row, its index in the base state (None if inserted).
    pub row_origin: Vec<Option<usize>>,
    /// Final constraint matrix after all structural actions.
    pub final_matrix: Matrix,
    /// True final weights `w^(T)` (unsparsified).
    pub final_weights: Vec<f64>,
}

#[derive(Clone)]
struct TrackedRow {
    id: u64,
    a: Vec<f64>,
    w: f64,
}

#[derive(Clone)]
struct SysState {
    rows: Vec<TrackedRow>,
}

impl SysState {
    fn matrix(&self) -> Matrix {
        let cols = self.rows.first().map(|r| r.a.len()).unwrap_or(0);
        let mut m = Matrix::zeros(self.rows.len(), cols);
        for (i, r) in self.rows.iter().enumerate() {
            m.row_mut(i).copy_from_slice(&r.a);
        }
        m
    }

    fn weights(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.w).collect()
    }

    fn index_of(&self, id: u64) -> Option<usize> {
        self.rows.iter().position(|r| r.id == id)
    }
}

/// Elementary monotone transitions after splitting (additive weight deltas,
/// so they can be reordered freely).
enum Elem {
    Insert(TrackedRow),
    Delete(u64),
    /// Same-sign additive weight deltas keyed by row id.
    Scale(Vec<(u64, f64)>),
    Noop,
}

impl Elem {
    fn is_positive(&self) -> bool {
        match self {
            Elem::Insert(_) => true,
            Elem::Delete(_) => false,
            // Scale lists are sign-pure by construction.
            Elem::Scale(list) => list.first().map(|&(_, d)| d > 0.0).unwrap_or(true),
            Elem::Noop => true,
        }
    }
}

/// One merged operation per phase component.
enum MergedOp {
    InsertBatch(Vec<TrackedRow>),
    ScaleBatch(Vec<(u64, f64)>),
    DeleteBatch(Vec<u64>),
}

fn exact_inverse_at(state: &SysState) -> Result<InverseApprox> {
    let a = state.matrix();
    let w = state.weights();
    InverseApprox::exact(&weighted_gram_matrix(&a, &w))
}

/// Split the action sequence into elementary monotone transitions.
fn split_actions(
    a0: &Matrix,
    w0: &[f64],
    actions: &ActionSequence,
) -> Result<(SysState, Vec<Elem>, u64)> {
    let mut next_id = 0u64;
    let initial = SysState {
        rows: (0..a0.rows())
            .map(|i| {
                let r = TrackedRow {
                    id: next_id,
                    a: a0.row(i).to_vec(),
                    w: w0[i],
                };
                next_id += 1;
                r
            })
            .collect(),
    };
    let mut cur = initial.clone();
    let mut elems = Vec::new();
    for act in actions.actions() {
        match act {
            UpdateAction::WeightUpdate(w_new) => {
                if w_new.len() != cur.rows.len() {
                    return Err(Error::DimensionMismatch {
                        context: "batched weight update",
                        expected: cur.rows.len(),
                        got: w_new.len(),
                    });
                }
                let mut ups = Vec::new();
                let mut downs = Vec::new();
                for (row, &target) in cur.rows.iter().zip(w_new) {
                    let delta = target - row.w;
                    if delta > 0.0 {
                        ups.push((row.id, delta));
                    } else if delta < 0.0 {
                        downs.push((row.id, delta));
                    }
                }
                if !ups.is_empty() {
                    elems.push(Elem::Scale(ups));
                }
                if !downs.is_empty() {
                    elems.push(Elem::Scale(downs));
                }
                for (row, &target) in cur.rows.iter_mut().zip(w_new) {
                    row.w = target;
                }
            }
            UpdateAction::Insert { row, weight } => {
                let tr = TrackedRow {
                    id: next_id,
                    a: row.clone(),
                    w: *weight,
                };
                next_id += 1;
                cur.rows.push(tr.clone());
                elems.push(Elem::Insert(tr));
            }
            UpdateAction::Delete(index) => {
                if *index >= cur.rows.len() {
                    return Err(Error::InvalidArgument(format!(
                        "delete index {index} out of range"
                    )));
                }
                let removed = cur.rows.remove(*index);
                elems.push(Elem::Delete(removed.id));
            }
        }
    }
    Ok((initial, elems, next_id))
}

/// Reorder mass increases in front of decreases, pad each block to a multiple
/// of the phase length, then merge and sparsify each phase.
fn merge_phases(elems: Vec<Elem>, initial: &SysState, eta: f64, phase_len: usize) -> Vec<MergedOp> {
    let mut ordered: Vec<Elem> = Vec::with_capacity(elems.len() + 2 * phase_len);
    let (pos, neg): (Vec<Elem>, Vec<Elem>) = elems.into_iter().partition(|e| e.is_positive());
    ordered.extend(pos);
    while ordered.len() % phase_len != 0 {
        ordered.push(Elem::Noop);
    }
    let boundary = ordered.len();
    ordered.extend(neg);
    while ordered.len() % phase_len != 0 {
        ordered.push(Elem::Noop);
    }

    // Track weights along the merged trajectory so the sparsification
    // threshold compares against the phase-start weights.
    let mut weight_now: HashMap<u64, f64> = initial.rows.iter().map(|r| (r.id, r.w)).collect();

    let mut merged = Vec::new();
    let mut start = 0;
    while start < ordered.len() {
        let end = (start + phase_len).min(ordered.len());
        let positive_phase = start < boundary;
        let mut inserts = Vec::new();
        let mut deletes = Vec::new();
        let mut deltas: HashMap<u64, f64> = HashMap::new();
        let mut delta_order: Vec<u64> = Vec::new();
        for e in &ordered[start..end] {
            match e {
                Elem::Insert(r) => {
                    weight_now.insert(r.id, r.w);
                    inserts.push(r.clone());
                }
                Elem::Delete(id) => deletes.push(*id),
                Elem::Scale(list) => {
                    for (id, d) in list {
                        let slot = deltas.entry(*id).or_insert_with(|| {
                            delta_order.push(*id);
                            0.0
                        });
                        *slot += d;
                    }
                }
                Elem::Noop => {}
            }
        }
        // Sparsify: drop per-phase deltas below eta relative to the
        // phase-start weight.
        let mut kept = Vec::new();
        for id in delta_order {
            let d = deltas[&id];
            let w_ref = weight_now.get(&id).copied().unwrap_or(0.0);
            if d.abs() >= eta * w_ref.abs() && d != 0.0 {
                kept.push((id, d));
                *weight_now.get_mut(&id).unwrap() += d;
            }
        }
        if positive_phase {
            if !inserts.is_empty() {
                merged.push(MergedOp::InsertBatch(inserts));
            }
            if !kept.is_empty() {
                merged.push(MergedOp::ScaleBatch(kept));
            }
        } else {
            if !kept.is_empty() {
                merged.push(MergedOp::ScaleBatch(kept));
            }
            if !deletes.is_empty() {
                for id in &deletes {
                    weight_now.remove(id);
                }
                merged.push(MergedOp::DeleteBatch(deletes));
            }
        }
        start = end;
    }
    merged
}

/// Run the whole pipeline: split, reorder, merge/sparsify, accumulate.
pub fn batched_update(
    a0: &Matrix,
    w0: &[f64],
    actions: &ActionSequence,
    cfg: &BatchConfig,
) -> Result<BatchedOutcome> {
    if a0.rows() != w0.len() {
        return Err(Error::DimensionMismatch {
            context: "batched_update",
            expected: a0.rows(),
            got: w0.len(),
        });
    }
    let t = actions.len().max(1);
    let eps_step = cfg.tol / (8.0 * t as f64);

    let (initial, elems, _) = split_actions(a0, w0, actions)?;
    // True final weights before any merging, used by callers for the last hop.
    let final_true = {
        let mut cur = initial.clone();
        replay_elems_exact(&mut cur, &elems);
        cur
    };
    let merged = merge_phases(elems, &initial, cfg.eta, cfg.phase_len);

    let mut cur = initial;
    let mut track: Vec<f64> = vec![0.0; cur.rows.len()];
    for op in &merged {
        let u_lo = exact_inverse_at(&cur)?;
        match op {
            MergedOp::InsertBatch(rows) => {
                let a_base = cur.matrix();
                let w_base = cur.weights();
                let gram_lo = weighted_gram_matrix(&a_base, &w_base);
                let k = rows.len();
                let beta = 1.01f64.powi(k as i32);
                let eps_tilde = eps_step / (3.0 * beta * (k as f64).sqrt());
                let s_rows =
                    Matrix::from_rows(&rows.iter().map(|r| r.a.clone()).collect::<Vec<_>>());
                let dws: Vec<f64> = rows.iter().map(|r| r.w).collect();
                let drift = match psd_add_drift(
                    &a_base, &w_base, &gram_lo, &u_lo, &s_rows, &dws, eps_tilde,
                ) {
                    Ok(c) => c,
                    Err(Error::SingularSystem(_)) => exact_insert_drift(&cur, rows)?,
                    Err(e) => return Err(e),
                };
                for (t, d) in track.iter_mut().zip(&drift) {
                    *t += d;
                }
                for r in rows {
                    cur.rows.push(r.clone());
                }
                // Leverage of the inserted rows at the extended state.
                let u_hi = exact_inverse_at(&cur)?;
                let a_ext = cur.matrix();
                let w_ext = cur.weights();
                let gram_hi = weighted_gram_matrix(&a_ext, &w_ext);
                let x = u_hi.apply_tight(&gram_hi, eps_tilde, &s_rows.transpose())?;
                for (j, r) in rows.iter().enumerate() {
                    let col = x.column(j);
                    track.push(r.w * dot(&r.a, &col));
                }
            }
            MergedOp::ScaleBatch(deltas) => {
                let a_cur = cur.matrix();
                let w_cur = cur.weights();
                let mut w_target = w_cur.clone();
                for (id, d) in deltas {
                    let idx = cur.index_of(*id).expect("scale target must exist");
                    w_target[idx] += d;
                }
                // Clamp to within a factor of two, then finish: both hops are
                // monotone in the same direction.
                let w_half: Vec<f64> = w_cur
                    .iter()
                    .zip(&w_target)
                    .map(|(c, t)| t.clamp(0.5 * c, 2.0 * c))
                    .collect();
                for (lo, hi) in [
                    (w_cur.clone(), w_half.clone()),
                    (w_half.clone(), w_target.clone()),
                ] {
                    if lo == hi {
                        continue;
                    }
                    let u_a = InverseApprox::exact(&weighted_gram_matrix(&a_cur, &lo))?;
                    let u_b = InverseApprox::exact(&weighted_gram_matrix(&a_cur, &hi))?;
                    let c = monotone_lowrank_delta(&a_cur, &lo, &hi, &u_a, &u_b, eps_step)?;
                    for (t, d) in track.iter_mut().zip(&c) {
                        *t += d;
                    }
                }
                for (row, &t) in cur.rows.iter_mut().zip(&w_target) {
                    row.w = t;
                }
            }
            MergedOp::DeleteBatch(ids) => {
                let removed_idx: Vec<usize> = ids
                    .iter()
                    .map(|id| cur.index_of(*id).expect("delete target"))
                    .collect();
                let removed_rows = Matrix::from_rows(
                    &removed_idx
                        .iter()
                        .map(|&i| cur.rows[i].a.clone())
                        .collect::<Vec<_>>(),
                );
                let removed_w: Vec<f64> = removed_idx.iter().map(|&i| cur.rows[i].w).collect();
                // Survivors, in order.
                let mut survivors = SysState { rows: Vec::new() };
                let mut surv_track = Vec::new();
                for (i, r) in cur.rows.iter().enumerate() {
                    if !removed_idx.contains(&i) {
                        survivors.rows.push(r.clone());
                        surv_track.push(track[i]);
                    }
                }
                let u_after = exact_inverse_at(&survivors)?;
                let a_after = survivors.matrix();
                let w_after = survivors.weights();
                let gram_after = weighted_gram_matrix(&a_after, &w_after);
                let k = ids.len();
                let beta = 1.02f64.powi(k as i32);
                let eps_tilde = eps_step / (3.0 * beta * (k as f64).sqrt());
                // Adding the removed mass back to the surviving system walks
                // the transition backwards; negate to go forwards.
                let drift_back = match psd_add_drift(
                    &a_after,
                    &w_after,
                    &gram_after,
                    &u_after,
                    &removed_rows,
                    &removed_w,
                    eps_tilde,
                ) {
                    Ok(c) => c,
                    Err(Error::SingularSystem(_)) => {
                        exact_insert_drift(&survivors, &tracked_rows(&removed_rows, &removed_w))?
                    }
                    Err(e) => return Err(e),
                };
                for (t, d) in surv_track.iter_mut().zip(&drift_back) {
                    *t -= d;
                }
                cur = survivors;
                track = surv_track;
            }
        }
    }

    let row_origin: Vec<Option<usize>> = cur
        .rows
        .iter()
        .map(|r| {
            if (r.id as usize) < a0.rows() {
                Some(r.id as usize)
            } else {
                None
            }
        })
        .collect();
    Ok(BatchedOutcome {
        w_mid: cur.weights(),
        delta_sigma: track,
        row_origin,
        final_matrix: final_true.matrix(),
        final_weights: final_true.weights(),
    })
}

fn tracked_rows(m: &Matrix, w: &[f64]) -> Vec<TrackedRow> {
    (0..m.rows())
        .map(|i| TrackedRow {
            id: u64::MAX - i as u64,
            a: m.row(i).to_vec(),
            w: w[i],
        })
        .collect()
}

/// Exact drift of the base rows when the listed rows are appended.
fn exact_insert_drift(base: &SysState, rows: &[TrackedRow]) -> Result<Vec<f64>> {
    let a_base = base.matrix();
    let w_base = base.weights();
    let mut ext = base.clone();
    for r in rows {
        ext.rows.push(r.clone());
    }
    let a_ext = ext.matrix();
    let w_ext = ext.weights();
    let ch_lo = Cholesky::new(&weighted_gram_matrix(&a_base, &w_base))
        .map_err(|_| Error::RankDeficient("exact insert drift"))?;
    let ch_hi = Cholesky::new(&weighted_gram_matrix(&a_ext, &w_ext))
        .map_err(|_| Error::RankDeficient("exact insert drift"))?;
    let lo = leverage_from_cholesky(&a_base, &w_base, &ch_lo);
    let hi = leverage_from_cholesky(&a_ext, &w_ext, &ch_hi);
    Ok((0..a_base.rows()).map(|i| hi[i] - lo[i]).collect())
}

fn replay_elems_exact(cur: &mut SysState, elems: &[Elem]) {
    for e in elems {
        match e {
            Elem::Insert(r) => cur.rows.push(r.clone()),
            Elem::Delete(id) => {
                let idx = cur.index_of(*id).expect("replay delete");
                cur.rows.remove(idx);
            }
            Elem::Scale(list) => {
                for (id, d) in list {
                    let idx = cur.index_of(*id).expect("replay scale");
                    cur.rows[idx].w += d;
                }
            }
            Elem::Noop => {}
        }
    }
}

/// l-infinity and l2 norms of `log v - log w` for aligned weight vectors.
pub fn log_gap_norms(v: &[f64], w: &[f64]) -> (f64, f64) {
    let diffs: Vec<f64> = v.iter().zip(w).map(|(a, b)| a.ln() - b.ln()).collect();
    (
        diffs.iter().map(|d| d.abs()).fold(0.0, f64::max),
        norm2(&diffs),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ActionCaps;
    use crate::ops::{leverage_scores_exact, ConstraintMatrix, WeightVector};
    use crate::rng::Rng;

    fn exact_sigma(a: &Matrix, w: &[f64]) -> Vec<f64> {
        leverage_scores_exact(
            &ConstraintMatrix::new(a.clone()).unwrap(),
            &WeightVector::new(w.to_vec()).unwrap(),
        )
        .unwrap()
    }

    fn random_system(rng: &mut Rng, m: usize, n: usize) -> (Matrix, Vec<f64>) {
        let a = Matrix::from_fn(m, n, |_, _| rng.normal());
        let w = (0..m).map(|_| 0.5 + rng.next_f64()).collect();
        (a, w)
    }

    /// Sandwich-degraded inverse: B = kappa^{-1} A^T W A gives
    /// B <= A^T W A <= kappa B, exercising the Neumann path.
    fn degraded_inverse(a: &Matrix, w: &[f64], kappa: f64) -> InverseApprox {
        let gram = weighted_gram_matrix(a, w);
        let minv = Cholesky::new(&gram).unwrap().inverse().scale(kappa);
        InverseApprox { minv, kappa }
    }

    #[test]
    fn no_change_gives_zero_delta() {
        let mut rng = Rng::from_seed(101);
        let (a, w) = random_system(&mut rng, 10, 4);
        let u = InverseApprox::exact(&weighted_gram_matrix(&a, &w)).unwrap();
        let c = monotone_lowrank_delta(&a, &w, &w, &u, &u, 1e-8).unwrap();
        assert!(c.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_weight_doubling_matches_exact() {
        let mut rng = Rng::from_seed(103);
        let (a, w) = random_system(&mut rng, 10, 4);
        let mut w_new = w.clone();
        w_new[3] *= 2.0;
        let kappa = 1.0 + 1.0 / (10f64).ln();
        let u = degraded_inverse(&a, &w, kappa);
        let u_new = degraded_inverse(&a, &w_new, kappa);
        let c = monotone_lowrank_delta(&a, &w, &w_new, &u, &u_new, 1e-8).unwrap();
        let exact = exact_delta(&a, &w, &w_new).unwrap();
        let err = norm2(&c.iter().zip(&exact).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(err <= 1e-8, "err {err}");
    }

    #[test]
    fn rank_five_growth_matches_exact() {
        let mut rng = Rng::from_seed(107);
        let (a, w) = random_system(&mut rng, 30, 10);
        let mut w_new = w.clone();
        for i in [2, 7, 11, 19, 28] {
            w_new[i] *= 4.0;
        }
        let kappa = 1.0 + 1.0 / (30f64).ln();
        let u = degraded_inverse(&a, &w, kappa);
        let u_new = degraded_inverse(&a, &w_new, kappa);
        let c = monotone_lowrank_delta(&a, &w, &w_new, &u, &u_new, 1e-8).unwrap();
        let exact = exact_delta(&a, &w, &w_new).unwrap();
        let err = norm2(&c.iter().zip(&exact).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(err <= 1e-8, "err {err}");
    }

    #[test]
    fn decreasing_change_is_mirrored() {
        let mut rng = Rng::from_seed(109);
        let (a, w) = random_system(&mut rng, 12, 5);
        let mut w_new = w.clone();
        w_new[4] *= 0.3;
        w_new[9] *= 0.5;
        let u = InverseApprox::exact(&weighted_gram_matrix(&a, &w)).unwrap();
        let u_new = InverseApprox::exact(&weighted_gram_matrix(&a, &w_new)).unwrap();
        let c = monotone_lowrank_delta(&a, &w, &w_new, &u, &u_new, 1e-9).unwrap();
        let exact = exact_delta(&a, &w, &w_new).unwrap();
        let err = norm2(&c.iter().zip(&exact).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(err <= 1e-9, "err {err}");
    }

    #[test]
    fn mixed_sign_change_is_rejected() {
        let mut rng = Rng::from_seed(113);
        let (a, w) = random_system(&mut rng, 8, 3);
        let mut w_new = w.clone();
        w_new[0] *= 2.0;
        w_new[1] *= 0.5;
        let u = InverseApprox::exact(&weighted_gram_matrix(&a, &w)).unwrap();
        assert!(matches!(
            monotone_lowrank_delta(&a, &w, &w_new, &u, &u, 1e-8),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn empty_sequence_is_identity() {
        let mut rng = Rng::from_seed(127);
        let (a, w) = random_system(&mut rng, 10, 4);
        let out =
            batched_update(&a, &w, &ActionSequence::default(), &BatchConfig::for_dim(4)).unwrap();
        assert_eq!(out.w_mid, w);
        assert!(out.delta_sigma.iter().all(|&x| x == 0.0));
        assert_eq!(out.final_matrix.rows(), 10);
    }

    fn random_weight_step(rng: &mut Rng, w: &[f64], size: f64) -> Vec<f64> {
        let step: Vec<f64> = (0..w.len()).map(|_| rng.normal()).collect();
        let scale = size / norm2(&step).max(1e-12);
        w.iter()
            .zip(&step)
            .map(|(wi, s)| wi * (s * scale).exp())
            .collect()
    }

    #[test]
    fn pure_weight_sequence_matches_exact_and_log_bounds() {
        let mut rng = Rng::from_seed(131);
        let (a, w) = random_system(&mut rng, 24, 8);
        let mut cur = w.clone();
        let mut acts = Vec::new();
        for _ in 0..3 {
            cur = random_weight_step(&mut rng, &cur, 0.01);
            acts.push(UpdateAction::WeightUpdate(cur.clone()));
        }
        let seq = ActionSequence::new(acts);
        seq.validate_and_snapshot(&a, &w, &ActionCaps::default())
            .unwrap();
        let cfg = BatchConfig::for_dim(8);
        let out = batched_update(&a, &w, &seq, &cfg).unwrap();
        // c approximates sigma(v) - sigma(w0) on the (unchanged) row set
        let sigma0 = exact_sigma(&a, &w);
        let sigma_v = exact_sigma(&out.final_matrix, &out.w_mid);
        let err: Vec<f64> = (0..24)
            .map(|i| out.delta_sigma[i] - (sigma_v[i] - sigma0[i]))
            .collect();
        assert!(norm2(&err) <= 1e-8, "err {}", norm2(&err));
        let (linf, l2) = log_gap_norms(&out.w_mid, &out.final_weights);
        let t = seq.len() as f64;
        assert!(linf <= t * cfg.eta + 1e-12, "linf {linf}");
        assert!(l2 <= 0.01 * t + 1e-12, "l2 {l2}");
    }

    #[test]
    fn mixed_structural_sequence_matches_exact() {
        let mut rng = Rng::from_seed(137);
        let (a, w) = random_system(&mut rng, 20, 8);
        // Build: one insert, one delete, two weight updates, all within caps.
        let row: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        let lev = crate::action::row_leverage(&a, &w, &row, 1.0).unwrap();
        let insert_weight = 0.009 / lev;
        let w1 = random_weight_step(&mut rng, &w, 0.01);
        let mut acts = vec![
            UpdateAction::WeightUpdate(w1.clone()),
            UpdateAction::Insert {
                row: row.clone(),
                weight: insert_weight,
            },
        ];
        let mut w2 = w1.clone();
        w2.push(insert_weight);
        let w3 = random_weight_step(&mut rng, &w2, 0.01);
        acts.push(UpdateAction::WeightUpdate(w3.clone()));
        // Delete the light row inserted above (index 20 after the insert);
        // base rows of a random 20x8 system carry too much leverage.
        acts.push(UpdateAction::Delete(20));
        let seq = ActionSequence::new(acts);
        let trail = seq
            .validate_and_snapshot(&a, &w, &ActionCaps::default())
            .unwrap();
        let a_final = trail.matrices.last().unwrap().clone();

        let cfg = BatchConfig::for_dim(8);
        let out = batched_update(&a, &w, &seq, &cfg).unwrap();
        assert_eq!(out.final_matrix.rows(), a_final.rows());
        assert!(out.final_matrix.max_abs_diff(&a_final) == 0.0);

        // Expected delta under the row-alignment convention.
        let sigma0 = exact_sigma(&a, &w);
        let sigma_v = exact_sigma(&out.final_matrix, &out.w_mid);
        let mut err = Vec::new();
        for (f, origin) in out.row_origin.iter().enumerate() {
            let base = origin.map(|i| sigma0[i]).unwrap_or(0.0);
            err.push(out.delta_sigma[f] - (sigma_v[f] - base));
        }
        assert!(norm2(&err) <= 1e-8, "err {}", norm2(&err));
        let (linf, l2) = log_gap_norms(&out.w_mid, &out.final_weights);
        let t = seq.len() as f64;
        assert!(linf <= t * cfg.eta + 1e-12);
        assert!(l2 <= 0.01 * t + 1e-12);
    }

    #[test]
    fn randomized_sequences_meet_tolerance() {
        let mut rng = Rng::from_seed(139);
        for trial in 0..10 {
            let (a, w) = random_system(&mut rng, 16, 6);
            let t = 1 + (trial % 5);
            let mut acts = Vec::new();
            let mut cur = w.clone();
            for _ in 0..t {
                cur = random_weight_step(&mut rng, &cur, 0.009);
                acts.push(UpdateAction::WeightUpdate(cur.clone()));
            }
            let seq = ActionSequence::new(acts);
            let cfg = BatchConfig::for_dim(6);
            let out = batched_update(&a, &w, &seq, &cfg).unwrap();
            let sigma0 = exact_sigma(&a, &w);
            let sigma_v = exact_sigma(&out.final_matrix, &out.w_mid);
            let err: Vec<f64> = (0..16)
                .map(|i| out.delta_sigma[i] - (sigma_v[i] - sigma0[i]))
                .collect();
            assert!(norm2(&err) <= cfg.tol, "trial {trial}: {}", norm2(&err));
        }
    }

    #[test]
    fn endpoint_grams_stay_spectrally_close() {
        // Any two states along a short small-step trajectory sandwich each
        // other well within 2^(c L).
        let mut rng = Rng::from_seed(149);
        let (a, w) = random_system(&mut rng, 16, 6);
        let mut acts = Vec::new();
        let mut cur = w.clone();
        for _ in 0..6 {
            cur = random_weight_step(&mut rng, &cur, 0.01);
            acts.push(UpdateAction::WeightUpdate(cur.clone()));
        }
        let seq = ActionSequence::new(acts);
        let cfg = BatchConfig::for_dim(6);
        let out = batched_update(&a, &w, &seq, &cfg).unwrap();
        let m0 = weighted_gram_matrix(&a, &w);
        let m1 = weighted_gram_matrix(&out.final_matrix, &out.w_mid);
        let ch = Cholesky::new(&m0).unwrap();
        // eigenvalues of M0^{-1/2} M1 M0^{-1/2} via L^{-1} M1 L^{-T}
        let linv_m1 = {
            let mut cols = Matrix::zeros(6, 6);
            for j in 0..6 {
                let y = ch.forward_sub(&m1.column(j));
                for i in 0..6 {
                    cols[(i, j)] = y[i];
                }
            }
            // now cols = L^{-1} M1; apply L^{-1} to its transpose
            let ct = cols.transpose();
            let mut out2 = Matrix::zeros(6, 6);
            for j in 0..6 {
                let y = ch.forward_sub(&ct.column(j));
                for i in 0..6 {
                    out2[(i, j)] = y[i];
                }
            }
            out2
        };
        let evs = crate::mat::symmetric_eigenvalues(&linv_m1).unwrap();
        let lo = evs.first().copied().unwrap();
        let hi = evs.last().copied().unwrap();
        let bound = 2f64.powf(cfg.phase_len as f64);
        assert!(hi <= bound && lo >= 1.0 / bound, "ratio [{lo}, {hi}]");
        assert!(hi / lo < 1.5, "small steps should stay near 1");
    }
}
