//! Convex-concave saddle points with duality-gap certificates.
//!
//! The cutting-plane driver runs on the product space: infeasible query
//! points contribute scaled domain separators, feasible ones contribute the
//! game gradient `(grad_x f, -grad_y f)`. From the surviving cuts plus the
//! outer box faces, a small linear program extracts multipliers whose convex
//! combination of feasible query points is the returned pair, and whose
//! residuals certify the duality gap.

use crate::cutting_plane::{CutPlaneConfig, OracleResponse, PolytopeState, SeparationOracle};
use crate::error::{Error, Result};
use crate::mat::{dot, norm1, norm2, Matrix};
use crate::simplex::{solve_lp, LinearProgram};
use std::collections::HashMap;

/// Dimensions and scales of a convex-concave game on `X x Y`.
#[derive(Debug, Clone)]
pub struct SaddleSpec {
    pub dim_x: usize,
    pub dim_y: usize,
    /// Outer box radius containing both domains.
    pub radius: f64,
    /// Radius of a ball contained in each domain.
    pub inner_radius: f64,
    /// Lipschitz bound of the objective.
    pub lipschitz: f64,
}

/// One recorded cut: the query point, the (scaled) vector defining the
/// halfspace `(w - z)^T g <= 0`, and whether the point was inside `X x Y`.
#[derive(Debug, Clone)]
pub struct TranscriptEntry {
    pub point: Vec<f64>,
    pub grad: Vec<f64>,
    pub feasible: bool,
}

/// The surviving constraint set at the end of a run: all outer box faces
/// plus the cuts still present in the polytope.
#[derive(Debug, Clone)]
pub struct GameTranscript {
    pub entries: Vec<TranscriptEntry>,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Upper bound on the duality gap of `(x, y)` derived from the
    /// multipliers: the maximum over the box of the weighted gap functions.
    pub gap_certificate: f64,
    /// Multiplier mass on feasible entries (> 1/2 when beta >= 3 sqrt(d) L).
    pub feasible_mass: f64,
    pub lambda: Vec<f64>,
    pub transcript: GameTranscript,
    pub oracle_calls: usize,
}

/// Gap function `min_k (z_k - z)^T g_k` over the recorded cuts.
pub fn gap_value(transcript: &GameTranscript, z: &[f64]) -> f64 {
    transcript
        .entries
        .iter()
        .map(|e| {
            let diff: Vec<f64> = e.point.iter().zip(z).map(|(p, q)| p - q).collect();
            dot(&diff, &e.grad)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Simplex multipliers subject to `sum_k lambda_k g_k = 0`: the weighted gap
/// function becomes a constant, made as small as possible, which then
/// dominates the gap function everywhere. Feasibility is guaranteed whenever
/// the transcript contains all outer box faces (opposite normals pair up).
pub fn lagrange_multipliers(transcript: &GameTranscript, eta_tol: f64) -> Result<Vec<f64>> {
    let k = transcript.entries.len();
    if k == 0 {
        return Err(Error::InvalidArgument("empty transcript".into()));
    }
    let d = transcript.entries[0].point.len();
    let mut constraints = Matrix::zeros(d + 1, k);
    for (col, e) in transcript.entries.iter().enumerate() {
        for row in 0..d {
            constraints[(row, col)] = e.grad[row];
        }
        constraints[(d, col)] = 1.0;
    }
    let mut rhs = vec![0.0; d + 1];
    rhs[d] = 1.0;
    // Normalize the gradient rows so the phase-one scale is benign.
    let scale = transcript.beta.max(1.0);
    for row in 0..d {
        for col in 0..k {
            constraints[(row, col)] /= scale;
        }
    }
    // The constant value of the combination is sum_k lambda_k z_k^T g_k;
    // minimizing it gives the tightest certificate and keeps the multiplier
    // mass off the (large-value) box faces.
    let objective: Vec<f64> = transcript
        .entries
        .iter()
        .map(|e| dot(&e.point, &e.grad))
        .collect();
    let sol = solve_lp(&LinearProgram {
        objective,
        constraints,
        rhs,
    })?;
    let lambda = sol.x;
    // Residual check on the combined gradient.
    let mut combined = vec![0.0; d];
    for (e, &l) in transcript.entries.iter().zip(&lambda) {
        for (c, g) in combined.iter_mut().zip(&e.grad) {
            *c += l * g;
        }
    }
    let residual = norm1(&combined);
    let allowed = eta_tol * (d as f64).sqrt() * transcript.beta;
    if residual > allowed {
        return Err(Error::Infeasible(format!(
            "multiplier residual {residual:.3e} exceeds {allowed:.3e}"
        )));
    }
    Ok(lambda)
}

/// Solve the game to an `eps L r` duality gap.
#[allow(clippy::too_many_arguments)]
pub fn solve_saddle(
    spec: &SaddleSpec,
    first_order: &mut dyn FnMut(&[f64], &[f64]) -> (f64, Vec<f64>, Vec<f64>),
    x_domain: &mut dyn SeparationOracle,
    y_domain: &mut dyn SeparationOracle,
    eps: f64,
    cfg: CutPlaneConfig,
) -> Result<SaddleSolution> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "eps must be in (0, 1/2], got {eps}"
        )));
    }
    let d = spec.dim_x + spec.dim_y;
    let beta = 3.0 * (d as f64).sqrt() * spec.lipschitz;
    let radius = spec.radius;
    let kappa = (d as f64 / eps) * (radius / spec.inner_radius);
    let budget = (cfg.budget_factor * d as f64 * kappa.ln().max(1.0)).ceil() as usize;

    let mut state = PolytopeState::bounding_box(d, radius, cfg)?;
    state.recenter()?;
    let mut entries: HashMap<u64, TranscriptEntry> = HashMap::new();
    let mut next_tag = 1u64;
    let gap_target = eps * spec.lipschitz * spec.inner_radius;
    let check_every = 8.max(d);

    for iteration in 0..budget {
        // Reformulated games can hold flat directions that the cuts never
        // remove; once the certificate meets the target there is nothing
        // left to gain, and continuing would only squeeze the polytope into
        // a numerically hostile needle. The certificate chain is valid at
        // any stopping time.
        if iteration > 0 && iteration % check_every == 0 {
            if let Ok(cert) = certificate_of(&state, &entries, beta, radius, d) {
                if cert <= gap_target {
                    break;
                }
            }
        }
        if step_once(
            &mut state,
            spec,
            first_order,
            x_domain,
            y_domain,
            beta,
            &mut entries,
            &mut next_tag,
        )?
        .is_break()
        {
            break;
        }
    }

    assemble_solution(spec, state, entries, next_tag, beta, radius)
}

/// One cutting-plane iteration; `Break` means a saddle point was hit exactly
/// or the geometry degenerated past the point of useful progress.
#[allow(clippy::too_many_arguments)]
fn step_once(
    state: &mut PolytopeState,
    spec: &SaddleSpec,
    first_order: &mut dyn FnMut(&[f64], &[f64]) -> (f64, Vec<f64>, Vec<f64>),
    x_domain: &mut dyn SeparationOracle,
    y_domain: &mut dyn SeparationOracle,
    beta: f64,
    entries: &mut HashMap<u64, TranscriptEntry>,
    next_tag: &mut u64,
) -> Result<std::ops::ControlFlow<()>> {
    use std::ops::ControlFlow;
    let d = spec.dim_x + spec.dim_y;
    if let Err(e) = state.drop_phase() {
        return degrade(e);
    }
    let z = state.query_point().to_vec();
    let (zx, zy) = z.split_at(spec.dim_x);

    // Domain membership; violations cut with the scaled separator.
    let domain_cut = match x_domain.query(zx) {
        OracleResponse::Separator { a, b } => {
            let mut padded = vec![0.0; d];
            padded[..spec.dim_x].copy_from_slice(&a);
            Some((padded, b))
        }
        OracleResponse::Inside => match y_domain.query(zy) {
            OracleResponse::Separator { a, b } => {
                let mut padded = vec![0.0; d];
                padded[spec.dim_x..].copy_from_slice(&a);
                Some((padded, b))
            }
            OracleResponse::Inside => None,
        },
    };
    match domain_cut {
        Some((a, b)) => {
            // Containing halfspace a^T w >= b; the recorded vector points
            // the other way and is scaled to length beta.
            let norm = norm2(&a);
            let ghat: Vec<f64> = a.iter().map(|v| -beta * v / norm).collect();
            entries.insert(
                *next_tag,
                TranscriptEntry {
                    point: z.clone(),
                    grad: ghat,
                    feasible: false,
                },
            );
            if let Err(e) = state.add_cut(&a, b, *next_tag) {
                entries.remove(next_tag);
                return degrade(e);
            }
            *next_tag += 1;
        }
        None => {
            let (_, gx, gy) = first_order(zx, zy);
            let mut g: Vec<f64> = Vec::with_capacity(d);
            g.extend_from_slice(&gx);
            g.extend(gy.iter().map(|v| -v));
            let gnorm = norm2(&g);
            if gnorm > beta {
                return Err(Error::Protocol(format!(
                    "gradient norm {gnorm:.3e} exceeds the declared scale {beta:.3e}"
                )));
            }
            if gnorm <= 1e-14 {
                // Exact saddle point; record it for the multiplier stage and
                // stop cutting. The tag is not advanced, so assembly picks
                // this entry up even though no polytope row carries it.
                entries.insert(
                    *next_tag,
                    TranscriptEntry {
                        point: z,
                        grad: g,
                        feasible: true,
                    },
                );
                return Ok(ControlFlow::Break(()));
            }
            entries.insert(
                *next_tag,
                TranscriptEntry {
                    point: z.clone(),
                    grad: g.clone(),
                    feasible: true,
                },
            );
            let a: Vec<f64> = g.iter().map(|v| -v).collect();
            let b = dot(&a, &z);
            if let Err(e) = state.add_cut(&a, b, *next_tag) {
                entries.remove(next_tag);
                return degrade(e);
            }
            *next_tag += 1;
        }
    }
    if let Err(e) = state.recenter() {
        return degrade(e);
    }
    Ok(ControlFlow::Continue(()))
}

/// Numerical collapse of the polytope geometry ends the run gracefully; the
/// certificate built from what was collected still judges the result.
/// Anything else propagates.
fn degrade(e: Error) -> Result<std::ops::ControlFlow<()>> {
    match e {
        Error::Degenerate(_) | Error::RankDeficient(_) | Error::SingularSystem(_) => {
            Ok(std::ops::ControlFlow::Break(()))
        }
        other => Err(other),
    }
}

/// Box faces plus the surviving cut rows (and optionally the last uncut
/// entry) as a transcript.
fn build_transcript(
    state: &PolytopeState,
    entries: &HashMap<u64, TranscriptEntry>,
    extra_tag: u64,
    beta: f64,
    radius: f64,
    d: usize,
) -> GameTranscript {
    let mut transcript = GameTranscript {
        entries: Vec::new(),
        beta,
    };
    for j in 0..d {
        for sign in [1.0f64, -1.0] {
            let mut point = vec![0.0; d];
            point[j] = sign * radius;
            let mut grad = vec![0.0; d];
            grad[j] = sign * beta;
            transcript.entries.push(TranscriptEntry {
                point,
                grad,
                feasible: false,
            });
        }
    }
    for &tag in state.row_tags().iter().filter(|&&t| t != 0) {
        if let Some(e) = entries.get(&tag) {
            transcript.entries.push(e.clone());
        }
    }
    // A saddle-point hit recorded without a cut still certifies.
    if let Some(e) = entries.get(&extra_tag) {
        transcript.entries.push(e.clone());
    }
    transcript
}

/// Certificate value of the current constraint set (used for early exit).
fn certificate_of(
    state: &PolytopeState,
    entries: &HashMap<u64, TranscriptEntry>,
    beta: f64,
    radius: f64,
    d: usize,
) -> Result<f64> {
    let transcript = build_transcript(state, entries, u64::MAX, beta, radius, d);
    let lambda = lagrange_multipliers(&transcript, 1e-6)?;
    let (certificate, mass) = certificate_from(&transcript, &lambda, radius);
    if mass <= 0.5 {
        return Err(Error::Degenerate("insufficient feasible mass".into()));
    }
    Ok(certificate)
}

fn certificate_from(transcript: &GameTranscript, lambda: &[f64], radius: f64) -> (f64, f64) {
    let d = transcript
        .entries
        .first()
        .map(|e| e.point.len())
        .unwrap_or(0);
    let mut weighted_value = 0.0;
    let mut combined = vec![0.0; d];
    let mut mass = 0.0;
    for (e, &l) in transcript.entries.iter().zip(lambda) {
        weighted_value += l * dot(&e.point, &e.grad);
        for (c, g) in combined.iter_mut().zip(&e.grad) {
            *c += l * g;
        }
        if e.feasible {
            mass += l;
        }
    }
    let certificate = (weighted_value + radius * norm1(&combined)) / mass.max(1e-300);
    (certificate, mass)
}

fn assemble_solution(
    spec: &SaddleSpec,
    state: PolytopeState,
    entries: HashMap<u64, TranscriptEntry>,
    next_tag: u64,
    beta: f64,
    radius: f64,
) -> Result<SaddleSolution> {
    let d = spec.dim_x + spec.dim_y;
    let oracle_calls = entries.values().filter(|e| e.feasible).count();
    let transcript = build_transcript(&state, &entries, next_tag, beta, radius, d);
    let lambda = lagrange_multipliers(&transcript, 1e-6)?;
    let (gap_certificate, feasible_mass) = certificate_from(&transcript, &lambda, radius);
    if feasible_mass <= 0.5 {
        return Err(Error::Degenerate(format!(
            "feasible multiplier mass {feasible_mass:.3} <= 1/2; scale bound violated"
        )));
    }
    let mut zhat = vec![0.0; d];
    for (e, &l) in transcript.entries.iter().zip(&lambda) {
        if e.feasible {
            for (acc, p) in zhat.iter_mut().zip(&e.point) {
                *acc += l * p;
            }
        }
    }
    for v in zhat.iter_mut() {
        *v /= feasible_mass;
    }
    let (x, y) = zhat.split_at(spec.dim_x);
    Ok(SaddleSolution {
        x: x.to_vec(),
        y: y.to_vec(),
        gap_certificate,
        feasible_mass,
        lambda,
        transcript,
        oracle_calls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::BoxDomain;

    fn scalar_game_spec() -> SaddleSpec {
        SaddleSpec {
            dim_x: 1,
            dim_y: 1,
            radius: 1.0,
            inner_radius: 1.0,
            lipschitz: 1.5,
        }
    }

    #[test]
    fn product_game_reaches_small_gap() {
        // f(x, y) = x y on [-1,1] x [-1,1]; saddle at the origin; the duality
        // gap of a pair is |x| + |y|.
        let spec = scalar_game_spec();
        let mut oracle = |x: &[f64], y: &[f64]| (x[0] * y[0], vec![y[0]], vec![x[0]]);
        let mut xd = BoxDomain { radius: 1.0 };
        let mut yd = BoxDomain { radius: 1.0 };
        let eps = 0.05;
        let sol = solve_saddle(
            &spec,
            &mut oracle,
            &mut xd,
            &mut yd,
            eps,
            CutPlaneConfig::default(),
        )
        .unwrap();
        let gap = sol.x[0].abs() + sol.y[0].abs();
        assert!(gap <= eps * spec.lipschitz * spec.inner_radius, "gap {gap}");
        assert!(
            sol.gap_certificate >= gap - 1e-9,
            "certificate must dominate the gap"
        );
        assert!(sol.feasible_mass > 0.5);
    }

    #[test]
    fn separable_quadratic_game() {
        // f = |x|^2 - |y|^2 on boxes; saddle at the origin; gap = |x|^2 + |y|^2.
        let spec = SaddleSpec {
            dim_x: 2,
            dim_y: 2,
            radius: 1.0,
            inner_radius: 1.0,
            lipschitz: 4.0,
        };
        let mut oracle = |x: &[f64], y: &[f64]| {
            let val = dot(x, x) - dot(y, y);
            (
                val,
                x.iter().map(|v| 2.0 * v).collect(),
                y.iter().map(|v| -2.0 * v).collect(),
            )
        };
        let mut xd = BoxDomain { radius: 1.0 };
        let mut yd = BoxDomain { radius: 1.0 };
        let eps = 0.05;
        let sol = solve_saddle(
            &spec,
            &mut oracle,
            &mut xd,
            &mut yd,
            eps,
            CutPlaneConfig::default(),
        )
        .unwrap();
        let gap = dot(&sol.x, &sol.x) + dot(&sol.y, &sol.y);
        assert!(gap <= eps * spec.lipschitz * spec.inner_radius, "gap {gap}");
        assert!(sol.gap_certificate >= gap - 1e-9);
    }

    #[test]
    fn bilinear_matrix_game_certificate_bounds_gap() {
        let c = Matrix::from_rows(&[
            vec![0.3, -0.5, 0.1],
            vec![0.2, 0.4, -0.6],
            vec![-0.1, 0.2, 0.5],
        ]);
        let lipschitz = 2.0;
        let spec = SaddleSpec {
            dim_x: 3,
            dim_y: 3,
            radius: 1.0,
            inner_radius: 1.0,
            lipschitz,
        };
        let c2 = c.clone();
        let mut oracle = move |x: &[f64], y: &[f64]| {
            let cy = c2.matvec(y);
            let ctx = c2.tr_matvec(x);
            (dot(x, &cy), cy, ctx)
        };
        let mut xd = BoxDomain { radius: 1.0 };
        let mut yd = BoxDomain { radius: 1.0 };
        let eps = 0.05;
        let sol = solve_saddle(
            &spec,
            &mut oracle,
            &mut xd,
            &mut yd,
            eps,
            CutPlaneConfig::default(),
        )
        .unwrap();
        // measured gap: max_y x^T C y - min_x x^T C y over the boxes
        let gap = norm1(&c.tr_matvec(&sol.x)) + norm1(&c.matvec(&sol.y));
        assert!(gap <= eps * lipschitz, "gap {gap}");
        assert!(sol.gap_certificate >= gap - 1e-9);
    }

    #[test]
    fn gap_function_is_nonpositive_at_recorded_points() {
        let transcript = GameTranscript {
            beta: 2.0,
            entries: vec![
                TranscriptEntry {
                    point: vec![0.5, 0.0],
                    grad: vec![1.0, 0.0],
                    feasible: true,
                },
                TranscriptEntry {
                    point: vec![0.0, 0.5],
                    grad: vec![0.0, 1.0],
                    feasible: true,
                },
            ],
        };
        for e in &transcript.entries {
            assert!(gap_value(&transcript, &e.point) <= 0.0);
        }
    }

    #[test]
    fn gap_function_negative_outside_box_faces() {
        // With all four faces of a 1-d-by-1-d box recorded, points outside
        // the box have negative gap.
        let beta = 3.0;
        let mut entries = Vec::new();
        for (j, sign) in [(0usize, 1.0f64), (0, -1.0), (1, 1.0), (1, -1.0)] {
            let mut point = vec![0.0; 2];
            point[j] = sign;
            let mut grad = vec![0.0; 2];
            grad[j] = sign * beta;
            entries.push(TranscriptEntry {
                point,
                grad,
                feasible: false,
            });
        }
        let transcript = GameTranscript { entries, beta };
        assert!(gap_value(&transcript, &[1.5, 0.0]) < 0.0);
        assert!(gap_value(&transcript, &[0.0, -2.0]) < 0.0);
    }

    #[test]
    fn multipliers_for_symmetric_interval_are_balanced() {
        // Two opposite faces of a 1-d box: symmetry forces lambda = (1/2, 1/2).
        let beta = 2.0;
        let transcript = GameTranscript {
            beta,
            entries: vec![
                TranscriptEntry {
                    point: vec![1.0],
                    grad: vec![beta],
                    feasible: false,
                },
                TranscriptEntry {
                    point: vec![-1.0],
                    grad: vec![-beta],
                    feasible: false,
                },
            ],
        };
        let lambda = lagrange_multipliers(&transcript, 1e-6).unwrap();
        assert!((lambda[0] - 0.5).abs() < 1e-9);
        assert!((lambda[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn multipliers_match_enumerated_optimum() {
        // Three cuts in one dimension; the zero-combination constraint and
        // the simplex constraint leave a segment of feasible multipliers;
        // the optimum sits at a vertex, checked by enumeration.
        let transcript = GameTranscript {
            beta: 2.0,
            entries: vec![
                TranscriptEntry {
                    point: vec![1.0],
                    grad: vec![2.0],
                    feasible: true,
                },
                TranscriptEntry {
                    point: vec![-1.0],
                    grad: vec![-2.0],
                    feasible: true,
                },
                TranscriptEntry {
                    point: vec![0.5],
                    grad: vec![-1.0],
                    feasible: true,
                },
            ],
        };
        let lambda = lagrange_multipliers(&transcript, 1e-6).unwrap();
        let value: f64 = transcript
            .entries
            .iter()
            .zip(&lambda)
            .map(|(e, &l)| l * e.point[0] * e.grad[0])
            .sum();
        // Enumerate vertices of {l >= 0, sum l = 1, 2 l0 - 2 l1 - l2 = 0}:
        // l2 = 0 gives l = (1/2, 1/2, 0) with value 2; l1 = 0 gives
        // l = (1/3, 0, 2/3) with value 1/3*2 + 2/3*(-0.5) = 1/3, the minimum.
        assert!((value - 1.0 / 3.0).abs() < 1e-6, "value {value}");
        let residual: f64 = transcript
            .entries
            .iter()
            .zip(&lambda)
            .map(|(e, &l)| l * e.grad[0])
            .sum();
        assert!(residual.abs() <= 1e-6 * 2.0);
    }
}
