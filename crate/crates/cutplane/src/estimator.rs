//! Leverage-score estimate maintainers.
//!
//! [`SimpleEstimator`] is deterministic: a batched low-rank pass brings the
//! estimate to the sparsified weights, and the final hop to the true weights
//! is corrected with the entry-wise-squared projection trick.
//!
//! [`ComplicatedEstimator`] additionally spreads the final hop over a
//! quadrature grid and estimates the heavy cross terms with independent
//! Gaussian sketches, solving the inner systems through a preconditioned
//! Neumann series on the cached inverse. All randomness derives from one
//! master seed.
//!
//! Sketch stream layout: `derive_seed(master, [update_index, phase, ...])`
//! with phase 1 for the pair sketches (tags `[.., 1, t, s]`), phase 2 for the
//! drift sketches (tags `[.., 2, s]`), and phase 3 for the quadratic-term
//! sketches (tags `[.., 3, t, s, s']`).

use crate::action::{ActionCaps, ActionSequence, UpdateAction};
use crate::batch::{batched_update, BatchConfig, BatchedOutcome};
use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::ops::{
    leverage_scores_exact, neumann_terms_needed, preconditioned_inverse_apply,
    weighted_gram_matrix, ConstraintMatrix, WeightVector,
};
use crate::pm::{pm_init, ProjectionState};
use crate::quad::QuadratureRule;
use crate::rng::derive_seed;
use crate::sketch::make_sketch;

fn exact_sigma(a: &Matrix, w: &[f64]) -> Result<Vec<f64>> {
    leverage_scores_exact(
        &ConstraintMatrix::new(a.clone())?,
        &WeightVector::new(w.to_vec())?,
    )
}

/// Replay structural actions into the projection state, then settle its
/// weights at the batched output.
fn sync_projection(
    pm: &mut ProjectionState,
    actions: &ActionSequence,
    outcome: &BatchedOutcome,
) -> Result<()> {
    for act in actions.actions() {
        match act {
            UpdateAction::Insert { row, weight } => pm.insert(row.clone(), *weight)?,
            UpdateAction::Delete(index) => pm.delete(*index)?,
            UpdateAction::WeightUpdate(_) => {}
        }
    }
    pm.update(&outcome.w_mid)
}

/// Re-align an estimate across a structural change: surviving rows keep their
/// entries, inserted rows start from zero.
fn realign(sigma: &[f64], row_origin: &[Option<usize>]) -> Vec<f64> {
    row_origin
        .iter()
        .map(|o| o.map(|i| sigma[i]).unwrap_or(0.0))
        .collect()
}

/// Final-hop correction through the cached projection:
/// `(w_new - w_mid)_i Q_ii + w_new_i [Q^(2) (w_mid - w_new)]_i`.
fn squared_projection_delta(pm: &mut ProjectionState, w_mid: &[f64], w_new: &[f64]) -> Vec<f64> {
    let diff: Vec<f64> = w_mid.iter().zip(w_new).map(|(m, n)| m - n).collect();
    let qd = pm.q_squared().matvec(&diff);
    let q = pm.q();
    (0..w_mid.len())
        .map(|i| (w_new[i] - w_mid[i]) * q[(i, i)] + w_new[i] * qd[i])
        .collect()
}

// ---- simple deterministic estimator ----

#[derive(Debug, Clone)]
pub struct SimpleEstimator {
    a: Matrix,
    w: Vec<f64>,
    sigma: Vec<f64>,
    pm: ProjectionState,
    batch: BatchConfig,
    caps: ActionCaps,
}

impl SimpleEstimator {
    pub fn init(a: Matrix, w: Vec<f64>, eps: f64) -> Result<Self> {
        let batch = BatchConfig::for_dim(a.cols());
        Self::with_config(a, w, eps, batch, ActionCaps::default())
    }

    pub fn with_config(
        a: Matrix,
        w: Vec<f64>,
        eps: f64,
        batch: BatchConfig,
        caps: ActionCaps,
    ) -> Result<Self> {
        let sigma = exact_sigma(&a, &w)?;
        let pm = pm_init(a.clone(), w.clone(), eps)?;
        Ok(SimpleEstimator {
            a,
            w,
            sigma,
            pm,
            batch,
            caps,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn query(&self) -> &[f64] {
        &self.sigma
    }

    /// Overwrite the estimate (used by outer layers to push down a fresher one).
    pub fn refine(&mut self, sigma_new: Vec<f64>) -> Result<()> {
        if sigma_new.len() != self.sigma.len() {
            return Err(Error::DimensionMismatch {
                context: "refine",
                expected: self.sigma.len(),
                got: sigma_new.len(),
            });
        }
        self.sigma = sigma_new;
        Ok(())
    }

    /// Consume a batch of actions and move the estimate along. Returns the
    /// applied per-row change, aligned to the post-update rows.
    pub fn update(&mut self, actions: &ActionSequence) -> Result<Vec<f64>> {
        actions.validate_and_snapshot(&self.a, &self.w, &self.caps)?;
        let outcome = batched_update(&self.a, &self.w, actions, &self.batch)?;
        sync_projection(&mut self.pm, actions, &outcome)?;
        let hop = squared_projection_delta(&mut self.pm, &outcome.w_mid, &outcome.final_weights);
        let mut sigma = realign(&self.sigma, &outcome.row_origin);
        let mut applied = Vec::with_capacity(sigma.len());
        for i in 0..sigma.len() {
            let d = outcome.delta_sigma[i] + hop[i];
            sigma[i] += d;
            applied.push(d);
        }
        self.sigma = sigma;
        self.a = outcome.final_matrix;
        self.w = outcome.final_weights;
        Ok(applied)
    }
}

// ---- randomized estimator ----

#[derive(Debug, Clone)]
pub struct ComplicatedConfig {
    /// Sketch dimension.
    pub sketch_dim: usize,
    /// Quadrature node count per integration variable.
    pub quad_nodes: usize,
    /// Accuracy of the preconditioned inner solves.
    pub solve_tol: f64,
    pub batch: BatchConfig,
    pub caps: ActionCaps,
}

impl ComplicatedConfig {
    pub fn new(sketch_dim: usize, quad_nodes: usize, n: usize) -> Self {
        ComplicatedConfig {
            sketch_dim,
            quad_nodes,
            solve_tol: 1e-10,
            batch: BatchConfig::for_dim(n),
            caps: ActionCaps::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComplicatedEstimator {
    a: Matrix,
    w: Vec<f64>,
    sigma: Vec<f64>,
    pm: ProjectionState,
    rule: QuadratureRule,
    cfg: ComplicatedConfig,
    master_seed: u64,
    update_index: u64,
}

/// Solver for `M(y)^{-1} X` preconditioned on a cached `M(z)^{-1}`, for
/// positive weight vectors `y`, `z` that are entrywise close.
struct SegmentSolver {
    gram_y: Matrix,
    minv_scaled: Matrix,
    kappa: f64,
    terms: usize,
}

impl SegmentSolver {
    fn new(a: &Matrix, y: &[f64], z: &[f64], minv_z: &Matrix, tol: f64) -> Self {
        let mut rho_lo = f64::INFINITY;
        let mut rho_hi = 0.0f64;
        for (yi, zi) in y.iter().zip(z) {
            let r = yi / zi;
            rho_lo = rho_lo.min(r);
            rho_hi = rho_hi.max(r);
        }
        // M(y) sits between rho_lo M(z) and rho_hi M(z).
        let kappa = (rho_hi / rho_lo).max(1.0);
        let minv_scaled = minv_z.scale(1.0 / rho_lo);
        let gram_y = weighted_gram_matrix(a, y);
        let terms = neumann_terms_needed(kappa, tol);
        SegmentSolver {
            gram_y,
            minv_scaled,
            kappa,
            terms,
        }
    }

    fn apply(&self, rhs: &Matrix) -> Result<Matrix> {
        preconditioned_inverse_apply(&self.minv_scaled, &self.gram_y, self.kappa, self.terms, rhs)
    }
}

/// Positive/negative split of a signed diagonal, as square roots.
fn sqrt_split(d: &[f64]) -> (Vec<f64>, Vec<f64>, bool, bool) {
    let mut pos = vec![0.0; d.len()];
    let mut neg = vec![0.0; d.len()];
    let (mut any_pos, mut any_neg) = (false, false);
    for (i, &x) in d.iter().enumerate() {
        if x > 0.0 {
            pos[i] = x.sqrt();
            any_pos = true;
        } else if x < 0.0 {
            neg[i] = (-x).sqrt();
            any_neg = true;
        }
    }
    (pos, neg, any_pos, any_neg)
}

/// `R diag(scale) A M(y)^{-1} A^T` for a sketch matrix `R`.
fn sketched_projection_prefix(
    r_mat: &Matrix,
    scale: &[f64],
    a: &Matrix,
    solver: &SegmentSolver,
) -> Result<Matrix> {
    let mut rs = r_mat.clone();
    rs.scale_cols(scale);
    let b = rs.matmul(a); // r x n
    let e = solver.apply(&b.transpose())?; // n x r
    Ok(e.transpose().matmul(&a.transpose())) // r x m
}

impl ComplicatedEstimator {
    pub fn init(
        a: Matrix,
        w: Vec<f64>,
        eps: f64,
        cfg: ComplicatedConfig,
        seed: u64,
    ) -> Result<Self> {
        if cfg.sketch_dim < 1 {
            return Err(Error::InvalidArgument(
                "sketch dimension must be >= 1".into(),
            ));
        }
        let sigma = exact_sigma(&a, &w)?;
        let pm = pm_init(a.clone(), w.clone(), eps)?;
        let rule = QuadratureRule::gauss(cfg.quad_nodes)?;
        Ok(ComplicatedEstimator {
            a,
            w,
            sigma,
            pm,
            rule,
            cfg,
            master_seed: seed,
            update_index: 0,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn query(&self) -> &[f64] {
        &self.sigma
    }

    pub fn refine(&mut self, sigma_new: Vec<f64>) -> Result<()> {
        if sigma_new.len() != self.sigma.len() {
            return Err(Error::DimensionMismatch {
                context: "refine",
                expected: self.sigma.len(),
                got: sigma_new.len(),
            });
        }
        self.sigma = sigma_new;
        Ok(())
    }

    pub fn update(&mut self, actions: &ActionSequence) -> Result<Vec<f64>> {
        actions.validate_and_snapshot(&self.a, &self.w, &self.cfg.caps)?;
        let outcome = batched_update(&self.a, &self.w, actions, &self.cfg.batch)?;
        sync_projection(&mut self.pm, actions, &outcome)?;
        self.update_index += 1;

        let a = outcome.final_matrix.clone();
        let m = a.rows();
        let w_mid = outcome.w_mid.clone();
        let w_new = outcome.final_weights.clone();
        let v_mid = self.pm.maintained().to_vec();
        let minv_vmid = self.pm.gram_inverse().clone();
        let q_vmid_diag: Vec<f64> = (0..m).map(|i| self.pm.q()[(i, i)]).collect();

        // Signed diagonals of the final hop.
        let d1: Vec<f64> = w_mid.iter().zip(&w_new).map(|(a, b)| a - b).collect();
        let d1_sqrt_abs: Vec<f64> = d1.iter().map(|x| x.abs().sqrt()).collect();
        let sqrt_w_new: Vec<f64> = w_new.iter().map(|x| x.sqrt()).collect();
        let any_hop = d1.iter().any(|&x| x != 0.0);

        let mut accum = vec![0.0; m];
        // Linear term at the maintained weights.
        for i in 0..m {
            accum[i] += q_vmid_diag[i] * (w_new[i] - w_mid[i]);
        }

        let nodes = self.rule.nodes().to_vec();
        let omegas = self.rule.weights().to_vec();
        let r_dim = self.cfg.sketch_dim;
        let seed = self.master_seed;
        let upd = self.update_index;

        // Drift of the linear term from maintained to target weights,
        // integrated along the segment and estimated with one sketch per node.
        let d2_zero: Vec<f64> = v_mid.iter().zip(&w_mid).map(|(z, x)| z - x).collect();
        if any_hop && d2_zero.iter().any(|&x| x != 0.0) {
            let (d2p, d2n, has_p, has_n) = sqrt_split(&d2_zero);
            for (s_idx, (&s, &omega_s)) in nodes.iter().zip(&omegas).enumerate() {
                let y: Vec<f64> = v_mid
                    .iter()
                    .zip(&w_mid)
                    .map(|(z, x)| z + s * (x - z))
                    .collect();
                let solver = SegmentSolver::new(&a, &y, &v_mid, &minv_vmid, self.cfg.solve_tol);
                let r_eta = make_sketch(r_dim, m, derive_seed(seed, &[upd, 2, s_idx as u64]));
                let mut norm_sq = vec![0.0; m];
                for (scale, sign, active) in [(&d2p, 1.0, has_p), (&d2n, -1.0, has_n)] {
                    if !active {
                        continue;
                    }
                    let mut g = sketched_projection_prefix(r_eta.as_matrix(), scale, &a, &solver)?;
                    g.scale_cols(&d1_sqrt_abs);
                    for i in 0..m {
                        let col_sq: f64 = (0..r_dim).map(|r| g[(r, i)] * g[(r, i)]).sum();
                        norm_sq[i] += sign * col_sq;
                    }
                }
                for i in 0..m {
                    let s1 = if d1[i] >= 0.0 { 1.0 } else { -1.0 };
                    accum[i] -= omega_s * s1 * norm_sq[i];
                }
            }
        }

        // Quadrature sweep over the weight segment from w_mid to w_new.
        if any_hop {
            for (t_idx, (&t, &omega_t)) in nodes.iter().zip(&omegas).enumerate() {
                let x_t: Vec<f64> = w_mid
                    .iter()
                    .zip(&w_new)
                    .map(|(a, b)| a + t * (b - a))
                    .collect();
                self.pm.update(&x_t)?;
                let z_t = self.pm.maintained().to_vec();
                let minv_z = self.pm.gram_inverse().clone();
                let q_z = self.pm.q().clone();

                // Exact diagonal term through the entry-wise square.
                let q2d = self.pm.q_squared().matvec(&d1);
                for i in 0..m {
                    accum[i] += omega_t * w_new[i] * q2d[i];
                }

                let d2: Vec<f64> = z_t.iter().zip(&x_t).map(|(z, x)| z - x).collect();
                let (d2p, d2n, has_p, has_n) = sqrt_split(&d2);
                if !(has_p || has_n) {
                    continue;
                }

                // Cross term between the projection drift along z -> x and
                // the weight movement.
                for (s_idx, (&s, &omega_s)) in nodes.iter().zip(&omegas).enumerate() {
                    let y: Vec<f64> = z_t.iter().zip(&x_t).map(|(z, x)| z + s * (x - z)).collect();
                    let solver = SegmentSolver::new(&a, &y, &z_t, &minv_z, self.cfg.solve_tol);
                    let r_ab = make_sketch(
                        r_dim,
                        m,
                        derive_seed(seed, &[upd, 1, t_idx as u64, s_idx as u64]),
                    );
                    for (scale, sign, active) in [(&d2p, 1.0, has_p), (&d2n, -1.0, has_n)] {
                        if !active {
                            continue;
                        }
                        let f = sketched_projection_prefix(r_ab.as_matrix(), scale, &a, &solver)?;
                        let mut lhs = f.clone();
                        lhs.scale_cols(&sqrt_w_new);
                        let mut fd = f;
                        fd.scale_cols(&d1);
                        let mut rhs = fd.matmul(&q_z);
                        rhs.scale_cols(&sqrt_w_new);
                        for i in 0..m {
                            let prod: f64 = (0..r_dim).map(|r| lhs[(r, i)] * rhs[(r, i)]).sum();
                            accum[i] += 2.0 * omega_t * omega_s * sign * prod;
                        }
                    }
                }

                // Quadratic term in the projection drift: one sketch per node
                // pair, applied to both endpoints.
                let (d1p_sqrt, d1n_sqrt, d1_has_p, d1_has_n) = sqrt_split(&d1);
                let solvers: Vec<SegmentSolver> = nodes
                    .iter()
                    .map(|&s| {
                        let y: Vec<f64> =
                            z_t.iter().zip(&x_t).map(|(z, x)| z + s * (x - z)).collect();
                        SegmentSolver::new(&a, &y, &z_t, &minv_z, self.cfg.solve_tol)
                    })
                    .collect();
                for s_idx in 0..nodes.len() {
                    for sp_idx in 0..nodes.len() {
                        let r_g = make_sketch(
                            r_dim,
                            m,
                            derive_seed(seed, &[upd, 3, t_idx as u64, s_idx as u64, sp_idx as u64]),
                        );
                        let omega = omega_t * omegas[s_idx] * omegas[sp_idx];
                        for (scale, sign, active) in
                            [(&d1p_sqrt, 1.0, d1_has_p), (&d1n_sqrt, -1.0, d1_has_n)]
                        {
                            if !active {
                                continue;
                            }
                            let mut pair = Vec::with_capacity(2);
                            for &idx in [s_idx, sp_idx].iter() {
                                let solver = &solvers[idx];
                                let mut pd =
                                    sketched_projection_prefix(r_g.as_matrix(), scale, &a, solver)?;
                                pd.scale_cols(&d2);
                                let b = pd.matmul(&a); // r x n
                                let e = solver.apply(&b.transpose())?; // n x r
                                let mut g = e.transpose().matmul(&a.transpose());
                                g.scale_cols(&sqrt_w_new);
                                pair.push(g);
                            }
                            for i in 0..m {
                                let prod: f64 =
                                    (0..r_dim).map(|r| pair[0][(r, i)] * pair[1][(r, i)]).sum();
                                accum[i] += omega * sign * prod;
                            }
                        }
                    }
                }
            }
        }

        // Leave the projection state consistent with the true final weights.
        self.pm.update(&w_new)?;

        let mut sigma = realign(&self.sigma, &outcome.row_origin);
        let mut applied = Vec::with_capacity(m);
        for i in 0..m {
            let d = outcome.delta_sigma[i] + accum[i];
            sigma[i] += d;
            applied.push(d);
        }
        self.sigma = sigma;
        self.a = a;
        self.w = w_new;
        Ok(applied)
    }
}

// ---- dense quadrature references ----

/// Dense reference for the leverage change from `w_mid` to `w_new`:
/// `(w_new - w_mid)_i tau(w_mid)_i + w_new_i ∫ [Q(x_t)(W_mid - W_new)Q(x_t)]_ii dt`
/// with the integral evaluated by the supplied rule and exact projections.
/// Used by tests as an independent route to the exact change.
pub fn dense_linear_path_delta(
    a: &Matrix,
    w_mid: &[f64],
    w_new: &[f64],
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    let m = a.rows();
    let d1: Vec<f64> = w_mid.iter().zip(w_new).map(|(a, b)| a - b).collect();
    let q_at = |weights: &[f64]| -> Result<Matrix> {
        let gram = weighted_gram_matrix(a, weights);
        let minv = crate::mat::Cholesky::new(&gram)
            .map_err(|_| Error::RankDeficient("dense path delta"))?
            .inverse();
        Ok(crate::ops::q_matrix_from_inverse(a, &minv))
    };
    let tau_mid = q_at(w_mid)?;
    let mut out: Vec<f64> = (0..m)
        .map(|i| (w_new[i] - w_mid[i]) * tau_mid[(i, i)])
        .collect();
    for (&t, &omega) in rule.nodes().iter().zip(rule.weights()) {
        let x_t: Vec<f64> = w_mid
            .iter()
            .zip(w_new)
            .map(|(a, b)| a + t * (b - a))
            .collect();
        let q = q_at(&x_t)?;
        for i in 0..m {
            let mut s = 0.0;
            for j in 0..m {
                s += q[(i, j)] * d1[j] * q[(j, i)];
            }
            out[i] += omega * w_new[i] * s;
        }
    }
    Ok(out)
}

/// Dense reference for the five-term decomposition of the same change around
/// an anchor weight vector `v` (playing the maintained weights): linear term
/// at the anchor, its drift correction, the diagonal term, the cross term and
/// the quadratic term, all with exact projections and tensor quadrature.
/// No sketching anywhere; tests compare this against the exact change.
pub fn dense_anchored_decomposition_delta(
    a: &Matrix,
    w_mid: &[f64],
    w_new: &[f64],
    v: &[f64],
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    let m = a.rows();
    let q_at = |weights: &[f64]| -> Result<Matrix> {
        let gram = weighted_gram_matrix(a, weights);
        let minv = crate::mat::Cholesky::new(&gram)
            .map_err(|_| Error::RankDeficient("dense decomposition"))?
            .inverse();
        Ok(crate::ops::q_matrix_from_inverse(a, &minv))
    };
    let d1: Vec<f64> = w_mid.iter().zip(w_new).map(|(a, b)| a - b).collect();
    let q_v = q_at(v)?;
    // Linear term at the anchor.
    let mut out: Vec<f64> = (0..m)
        .map(|i| (w_new[i] - w_mid[i]) * q_v[(i, i)])
        .collect();
    // Drift correction of the linear term along v -> w_mid.
    let d2_zero: Vec<f64> = v.iter().zip(w_mid).map(|(z, x)| z - x).collect();
    for (&s, &omega_s) in rule.nodes().iter().zip(rule.weights()) {
        let y: Vec<f64> = v.iter().zip(w_mid).map(|(z, x)| z + s * (x - z)).collect();
        let q_y = q_at(&y)?;
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                acc += q_y[(i, j)] * d2_zero[j] * q_y[(j, i)];
            }
            out[i] -= omega_s * d1[i] * acc;
        }
    }
    // Sweep over the weight segment, anchoring the projection at v.
    for (&t, &omega_t) in rule.nodes().iter().zip(rule.weights()) {
        let x_t: Vec<f64> = w_mid
            .iter()
            .zip(w_new)
            .map(|(a, b)| a + t * (b - a))
            .collect();
        // Diagonal term with the anchored projection.
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                acc += q_v[(i, j)] * d1[j] * q_v[(j, i)];
            }
            out[i] += omega_t * w_new[i] * acc;
        }
        // Projection drift along v -> x_t, integrated in s.
        let d2: Vec<f64> = v.iter().zip(&x_t).map(|(z, x)| z - x).collect();
        let mut dq_t = Matrix::zeros(m, m);
        for (&s, &omega_s) in rule.nodes().iter().zip(rule.weights()) {
            let y: Vec<f64> = v.iter().zip(&x_t).map(|(z, x)| z + s * (x - z)).collect();
            let q_y = q_at(&y)?;
            let mut qd = q_y.clone();
            qd.scale_cols(&d2);
            dq_t = dq_t.add(&qd.matmul(&q_y).scale(omega_s));
        }
        // Cross term 2 [DQ D1 Q_v]_ii and quadratic term [DQ D1 DQ]_ii.
        let mut dq_d1 = dq_t.clone();
        dq_d1.scale_cols(&d1);
        let cross = dq_d1.matmul(&q_v);
        let quad = dq_d1.matmul(&dq_t);
        for i in 0..m {
            out[i] += omega_t * w_new[i] * (2.0 * cross[(i, i)] + quad[(i, i)]);
        }
    }
    Ok(out)
}
