//! Market equilibria through the saddle-point solver.
//!
//! Linear exchange markets: each of `n` agents owns one unit of their good
//! and values the others linearly; the entropy-regularized price program is
//! solved as a game between prices/inverse-bang-per-buck and the multipliers
//! of the clearing constraints, then allocations are recovered from a small
//! transportation program on the best-bang-per-buck edges.
//!
//! Fisher markets with spending-constraint utilities: buyers split budgets
//! over per-good segments with rates and caps; the price/dual game has hinge
//! terms per segment, and spending is recovered from complementary slackness
//! plus the same transportation fallback.
//!
//! Every solver output is judged by an independent verifier that evaluates
//! the equilibrium conditions directly.

use crate::cutting_plane::{CutPlaneConfig, OracleResponse, SeparationOracle};
use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::saddle::{solve_saddle, SaddleSpec};
use crate::simplex::{solve_lp, LinearProgram};

// ---- linear exchange markets ----

/// Agents with linear utilities over each other's goods; `utilities[i][j]`
/// is agent `i`'s value for a unit of good `j` (nonnegative integers).
#[derive(Debug, Clone)]
pub struct ExchangeMarket {
    n: usize,
    utilities: Vec<Vec<u64>>,
}

impl ExchangeMarket {
    /// Validates the standard existence assumptions: every agent has an
    /// incoming and an outgoing edge in the positive-utility graph, and any
    /// single-node strongly connected component carries a self-loop.
    pub fn new(utilities: Vec<Vec<u64>>) -> Result<Self> {
        let n = utilities.len();
        if n == 0 || utilities.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidArgument(
                "utility matrix must be square and nonempty".into(),
            ));
        }
        for i in 0..n {
            if !(0..n).any(|j| utilities[i][j] > 0) {
                return Err(Error::InvalidArgument(format!("agent {i} values no good")));
            }
            if !(0..n).any(|j| utilities[j][i] > 0) {
                return Err(Error::InvalidArgument(format!("good {i} has no buyer")));
            }
        }
        let market = ExchangeMarket { n, utilities };
        for comp in market.strongly_connected_components() {
            if comp.len() == 1 {
                let v = comp[0];
                if market.utilities[v][v] == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "agent {v} forms a singleton component without a self-loop"
                    )));
                }
            }
        }
        Ok(market)
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    pub fn utility(&self, i: usize, j: usize) -> u64 {
        self.utilities[i][j]
    }

    pub fn max_utility(&self) -> u64 {
        self.utilities.iter().flatten().copied().max().unwrap_or(0)
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.utilities[i][j] > 0 {
                    e.push((i, j));
                }
            }
        }
        e
    }

    fn strongly_connected_components(&self) -> Vec<Vec<usize>> {
        // Kosaraju on the positive-utility graph.
        let n = self.n;
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            // Iterative DFS, pushing in post-order.
            let mut stack = vec![(start, 0usize)];
            seen[start] = true;
            while let Some(&mut (v, ref mut next)) = stack.last_mut() {
                let mut advanced = false;
                while *next < n {
                    let u = *next;
                    *next += 1;
                    if self.utilities[v][u] > 0 && !seen[u] {
                        seen[u] = true;
                        stack.push((u, 0));
                        advanced = true;
                        break;
                    }
                }
                if !advanced
                    && stack
                        .last()
                        .map(|&(w, nx)| w == v && nx >= n)
                        .unwrap_or(false)
                {
                    order.push(v);
                    stack.pop();
                }
            }
        }
        let mut comp = vec![usize::MAX; n];
        let mut comps = Vec::new();
        for &start in order.iter().rev() {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut members = vec![start];
            comp[start] = id;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for u in 0..n {
                    // reversed edges
                    if self.utilities[u][v] > 0 && comp[u] == usize::MAX {
                        comp[u] = id;
                        members.push(u);
                        stack.push(u);
                    }
                }
            }
            comps.push(members);
        }
        comps
    }
}

/// Value and gradients of the exchange-market game objective
/// `sum_i p_i log(p_i / beta_i) - sum_i (lambda_i + eta_i) p_i`
/// at an interior point of the domains.
#[allow(clippy::type_complexity)]
pub fn ad_game_oracle(
    _market: &ExchangeMarket,
    p: &[f64],
    beta: &[f64],
    lambda: &[f64],
    eta: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = p.len();
    if beta.len() != n || lambda.len() != n || eta.len() != n {
        return Err(Error::DimensionMismatch {
            context: "ad oracle",
            expected: n,
            got: beta.len(),
        });
    }
    for i in 0..n {
        if !(p[i] >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "price {i} below one: {}",
                p[i]
            )));
        }
        if !(beta[i] > 0.0) {
            return Err(Error::InvalidArgument(format!("nonpositive beta {i}")));
        }
    }
    let mut value = 0.0;
    let mut grad_p = vec![0.0; n];
    let mut grad_beta = vec![0.0; n];
    let mut grad_lambda = vec![0.0; n];
    let mut grad_eta = vec![0.0; n];
    for i in 0..n {
        let ratio = (p[i] / beta[i]).ln();
        value += p[i] * ratio - (lambda[i] + eta[i]) * p[i];
        grad_p[i] = ratio + 1.0 - lambda[i] - eta[i];
        grad_beta[i] = -p[i] / beta[i];
        grad_lambda[i] = -p[i];
        grad_eta[i] = -p[i];
    }
    Ok((value, grad_p, grad_beta, grad_lambda, grad_eta))
}

/// Prices, allocations and exact residual evaluations.
#[derive(Debug, Clone)]
pub struct EquilibriumReport {
    pub prices: Vec<f64>,
    /// Exchange: `allocations[i][j]` is the share of good `j` bought by
    /// agent `i`. Fisher: spending per segment, aligned with the segment list.
    pub allocations: Vec<Vec<f64>>,
    pub clearing_residual: f64,
    pub budget_residual: f64,
    pub optimality_residual: f64,
}

impl EquilibriumReport {
    pub fn max_residual(&self) -> f64 {
        self.clearing_residual
            .max(self.budget_residual)
            .max(self.optimality_residual)
    }
}

#[derive(Debug, Clone)]
pub struct MarketOptions {
    /// Upper bound of the price box (exchange: lower bound is 1).
    pub price_bound: Option<f64>,
    /// Half-width of the dual boxes.
    pub dual_bound: Option<f64>,
    /// Relative slack when collecting best-bang-per-buck edges.
    pub recovery_slack: f64,
    pub cut_plane: CutPlaneConfig,
}

impl Default for MarketOptions {
    fn default() -> Self {
        let mut cut_plane = CutPlaneConfig::default();
        // The saddle phase only pins the equilibrium structure; the recovery
        // supplies precision. A lean budget keeps market runs short.
        cut_plane.budget_factor = 5.0;
        MarketOptions {
            price_bound: None,
            dual_bound: None,
            recovery_slack: 0.05,
            cut_plane,
        }
    }
}

struct AdDomainX {
    market: ExchangeMarket,
    p_max: f64,
    beta_min: f64,
}

impl SeparationOracle for AdDomainX {
    fn query(&mut self, x: &[f64]) -> OracleResponse {
        let n = self.market.agents();
        let (p, beta) = x.split_at(n);
        for i in 0..n {
            if p[i] < 1.0 {
                let mut a = vec![0.0; 2 * n];
                a[i] = 1.0;
                return OracleResponse::Separator { a, b: 1.0 };
            }
            if p[i] > self.p_max {
                let mut a = vec![0.0; 2 * n];
                a[i] = -1.0;
                return OracleResponse::Separator { a, b: -self.p_max };
            }
            if beta[i] < self.beta_min {
                let mut a = vec![0.0; 2 * n];
                a[n + i] = 1.0;
                return OracleResponse::Separator {
                    a,
                    b: self.beta_min,
                };
            }
            if beta[i] > self.p_max {
                let mut a = vec![0.0; 2 * n];
                a[n + i] = -1.0;
                return OracleResponse::Separator { a, b: -self.p_max };
            }
        }
        for (i, j) in self.market.edges() {
            let u = self.market.utility(i, j) as f64;
            // u beta_i <= p_j
            if u * beta[i] > p[j] + 1e-12 {
                let mut a = vec![0.0; 2 * n];
                a[j] = 1.0;
                a[n + i] = -u;
                return OracleResponse::Separator { a, b: 0.0 };
            }
        }
        OracleResponse::Inside
    }
}

struct AdDomainY {
    market: ExchangeMarket,
    bound: f64,
}

impl SeparationOracle for AdDomainY {
    fn query(&mut self, x: &[f64]) -> OracleResponse {
        let n = self.market.agents();
        let (lambda, eta) = x.split_at(n);
        for (k, &v) in x.iter().enumerate() {
            if v > self.bound {
                let mut a = vec![0.0; 2 * n];
                a[k] = -1.0;
                return OracleResponse::Separator { a, b: -self.bound };
            }
            if v < -self.bound {
                let mut a = vec![0.0; 2 * n];
                a[k] = 1.0;
                return OracleResponse::Separator { a, b: -self.bound };
            }
        }
        for (i, j) in self.market.edges() {
            let bound = (self.market.utility(i, j) as f64).ln();
            // lambda_j + eta_i >= log u_ij
            if lambda[j] + eta[i] < bound - 1e-12 {
                let mut a = vec![0.0; 2 * n];
                a[j] = 1.0;
                a[n + i] = 1.0;
                return OracleResponse::Separator { a, b: bound };
            }
        }
        OracleResponse::Inside
    }
}

/// Solve a linear exchange market: saddle solve for prices, transportation
/// recovery for allocations, residuals from the independent verifier.
/// The report carries the residuals; callers compare them with `eps_eq`.
pub fn solve_arrow_debreu(
    market: &ExchangeMarket,
    eps_eq: f64,
    seed: u64,
    options: &MarketOptions,
) -> Result<EquilibriumReport> {
    let n = market.agents();
    let u_max = market.max_utility() as f64;
    // Desk-scale default price box; equilibria of well-connected integer
    // markets sit comfortably inside. Raise through the options for
    // instances with extreme price spread.
    let p_max = options
        .price_bound
        .unwrap_or_else(|| (2.0 * n as f64 * u_max).max(8.0));
    let beta_min = 1.0 / (2.0 * u_max);
    let dual_bound = options
        .dual_bound
        .unwrap_or_else(|| (u_max * p_max).ln() + 2.0);

    // Lipschitz bound over the boxes: the beta gradient dominates.
    let grad_p_bound = (p_max / beta_min).ln() + 1.0 + 2.0 * dual_bound;
    let grad_beta_bound = p_max / beta_min;
    let lipschitz = ((n as f64)
        * (grad_p_bound * grad_p_bound + grad_beta_bound * grad_beta_bound)
        + 2.0 * (n as f64) * p_max * p_max)
        .sqrt();
    let spec = SaddleSpec {
        dim_x: 2 * n,
        dim_y: 2 * n,
        radius: p_max,
        inner_radius: 0.1f64.min(0.25 * (p_max - 1.0)),
        lipschitz,
    };
    let mut cfg = options.cut_plane.clone();
    cfg.seed = seed;
    cfg.audit_every = 0;
    let market2 = market.clone();
    let mut first_order = move |x: &[f64], y: &[f64]| {
        let (p, beta) = x.split_at(market2.agents());
        let (lambda, eta) = y.split_at(market2.agents());
        let (value, gp, gb, gl, ge) =
            ad_game_oracle(&market2, p, beta, lambda, eta).expect("interior point");
        let mut gx = gp;
        gx.extend(gb);
        let mut gy = gl;
        gy.extend(ge);
        (value, gx, gy)
    };
    let mut x_domain = AdDomainX {
        market: market.clone(),
        p_max,
        beta_min,
    };
    let mut y_domain = AdDomainY {
        market: market.clone(),
        bound: dual_bound,
    };
    // The saddle phase only needs to pin the bang-per-buck structure; the
    // joint recovery below supplies the precision. A moderate gap target
    // keeps the phase short.
    let saddle = solve_saddle(
        &spec,
        &mut first_order,
        &mut x_domain,
        &mut y_domain,
        0.15,
        cfg,
    )?;
    let price_hint: Vec<f64> = saddle.x[..n].to_vec();
    // The saddle phase identifies the best-bang-per-buck structure; the
    // recovery re-solves prices and flows jointly on that edge set. Sweep
    // edge windows, keep whatever the verifier scores best, and iterate the
    // sweep from the refined prices: narrow windows around good prices pin
    // the residual down.
    let windows = [
        1e-6,
        1e-3,
        0.5 * eps_eq,
        options.recovery_slack,
        2.0 * options.recovery_slack,
        0.15,
        0.3,
    ];
    let mut best: Option<EquilibriumReport> = None;
    let mut hint = price_hint;
    for _round in 0..3 {
        for window in windows {
            let (prices, allocations) = match recover_exchange_equilibrium(market, &hint, window) {
                Ok(pair) => pair,
                Err(_) => continue,
            };
            let (clearing, budget, optimality) =
                verify_equilibrium_ad(market, &prices, &allocations);
            let report = EquilibriumReport {
                prices,
                allocations,
                clearing_residual: clearing,
                budget_residual: budget,
                optimality_residual: optimality,
            };
            if best
                .as_ref()
                .map(|b| report.max_residual() < b.max_residual())
                .unwrap_or(true)
            {
                best = Some(report);
            }
        }
        match &best {
            Some(b) if b.max_residual() <= 1e-12 => break,
            Some(b) => {
                // Re-anchor on prices that make the flow support exactly
                // optimal; the next sweep then clears at those prices.
                hint = match refine_prices_for_support(market, &b.allocations, &b.prices) {
                    Ok(p) => p,
                    Err(_) => b.prices.clone(),
                };
            }
            None => break,
        }
    }
    best.ok_or_else(|| Error::Degenerate("allocation recovery failed on every edge window".into()))
}

/// Log-price program: find prices for which the support of the given
/// allocation is (as nearly as possible) bang-per-buck optimal. In log space
/// the optimality conditions are linear; the support's suboptimality slacks
/// are minimized with the price scale pinned to the hint.
pub fn refine_prices_for_support(
    market: &ExchangeMarket,
    allocations: &[Vec<f64>],
    price_hint: &[f64],
) -> Result<Vec<f64>> {
    let n = market.agents();
    let edges = market.edges();
    let e = edges.len();
    // Variables: l_j = u_j - v_j (log prices), m_i = g_i - h_i (per-agent
    // log best), t_e >= 0 (edge suboptimality).
    // Rows: l_j - m_i - t_e = ln u_ij per edge; scale pin sum l = sum hint.
    let vars = 4 * n + e;
    let rows = e + 1;
    let mut constraints = Matrix::zeros(rows, vars);
    let mut rhs = vec![0.0; rows];
    for (row, &(i, j)) in edges.iter().enumerate() {
        constraints[(row, j)] = 1.0; // +u_j
        constraints[(row, n + j)] = -1.0; // -v_j
        constraints[(row, 2 * n + i)] = -1.0; // -g_i
        constraints[(row, 3 * n + i)] = 1.0; // +h_i
        constraints[(row, 4 * n + row)] = -1.0; // -t_e
        rhs[row] = (market.utility(i, j) as f64).ln();
    }
    for j in 0..n {
        constraints[(e, j)] = 1.0;
        constraints[(e, n + j)] = -1.0;
    }
    rhs[e] = price_hint.iter().map(|p| p.ln()).sum();
    let mut objective = vec![0.0; vars];
    for (row, &(i, j)) in edges.iter().enumerate() {
        if allocations[i][j] > 1e-9 {
            objective[4 * n + row] = 1.0;
        }
    }
    let sol = solve_lp(&LinearProgram {
        objective,
        constraints,
        rhs,
    })?;
    let prices: Vec<f64> = (0..n).map(|j| (sol.x[j] - sol.x[n + j]).exp()).collect();
    if !prices.iter().all(|p| p.is_finite() && *p > 0.0) {
        return Err(Error::Degenerate(
            "log-price refinement produced unusable prices".into(),
        ));
    }
    Ok(prices)
}

/// Joint price/money-flow refinement around the hinted prices: a linear
/// program over flows on the near-best-bang-per-buck edge set, prices
/// constrained to a multiplicative window of the hint, and marginal slacks.
/// Among slack-minimal solutions, flow is nudged onto the highest-ratio
/// edges. With the edge structure identified correctly and the true prices
/// inside the window, the slacks vanish and the prices are equilibrium
/// prices.
pub fn recover_exchange_equilibrium(
    market: &ExchangeMarket,
    price_hint: &[f64],
    window: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = market.agents();
    if price_hint.len() != n || price_hint.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::InvalidArgument("price hint must be positive".into()));
    }
    let mut kept: Vec<(usize, usize)> = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    for i in 0..n {
        let best = (0..n)
            .filter(|&j| market.utility(i, j) > 0)
            .map(|j| market.utility(i, j) as f64 / price_hint[j])
            .fold(0.0f64, f64::max);
        for j in 0..n {
            if market.utility(i, j) > 0 {
                let ratio = market.utility(i, j) as f64 / price_hint[j];
                if ratio >= (1.0 - window) * best {
                    kept.push((i, j));
                    ratios.push(ratio / best);
                }
            }
        }
    }
    // Variables: y_e, then xi_j in [0,1] parameterizing the price window
    // p_j = (1 - w) hint_j + 2 w hint_j xi_j, the upper-bound slack of each
    // xi, and slack pairs per good and per agent.
    let e = kept.len();
    let vars = e + 2 * n + 4 * n;
    let rows = 3 * n;
    let w = window.min(0.9);
    let mut constraints = Matrix::zeros(rows, vars);
    let mut rhs = vec![0.0; rows];
    for (col, &(i, j)) in kept.iter().enumerate() {
        constraints[(j, col)] = 1.0; // good j sold
        constraints[(n + i, col)] = 1.0; // agent i spends
    }
    for j in 0..n {
        let lo = (1.0 - w) * price_hint[j];
        let span = 2.0 * w * price_hint[j];
        // goods: sum_i y_ij - span xi_j +- slack = lo
        constraints[(j, e + j)] = -span;
        constraints[(j, e + 2 * n + 2 * j)] = 1.0;
        constraints[(j, e + 2 * n + 2 * j + 1)] = -1.0;
        rhs[j] = lo;
        // agents: sum_j y_ij - span xi_i +- slack = lo
        constraints[(n + j, e + j)] = -span;
        constraints[(n + j, e + 4 * n + 2 * j)] = 1.0;
        constraints[(n + j, e + 4 * n + 2 * j + 1)] = -1.0;
        rhs[n + j] = lo;
        // xi_j + aux_j = 1
        constraints[(2 * n + j, e + j)] = 1.0;
        constraints[(2 * n + j, e + n + j)] = 1.0;
        rhs[2 * n + j] = 1.0;
    }
    let mut objective = vec![0.0; vars];
    for s in objective.iter_mut().skip(e + 2 * n) {
        *s = 1.0;
    }
    // Tie-break toward the best edges without disturbing slack minimality.
    let scale: f64 = price_hint.iter().sum();
    for (col, r) in ratios.iter().enumerate() {
        objective[col] = -1e-4 * r / scale.max(1.0);
    }
    let sol = solve_lp(&LinearProgram {
        objective,
        constraints,
        rhs,
    })?;
    let prices: Vec<f64> = (0..n)
        .map(|j| (1.0 - w) * price_hint[j] + 2.0 * w * price_hint[j] * sol.x[e + j])
        .collect();
    let mut x = vec![vec![0.0; n]; n];
    for (col, &(i, j)) in kept.iter().enumerate() {
        x[i][j] = sol.x[col] / prices[j];
    }
    Ok((prices, x))
}

/// Exact residual triple for a candidate exchange equilibrium:
/// goods fully sold, budgets balanced, and purchases confined to
/// best-bang-per-buck goods.
pub fn verify_equilibrium_ad(
    market: &ExchangeMarket,
    prices: &[f64],
    allocations: &[Vec<f64>],
) -> (f64, f64, f64) {
    let n = market.agents();
    let mut clearing = 0.0f64;
    for j in 0..n {
        let sold: f64 = (0..n).map(|i| allocations[i][j]).sum();
        clearing = clearing.max((sold - 1.0).abs());
    }
    let mut budget = 0.0f64;
    for i in 0..n {
        let spent: f64 = (0..n).map(|j| allocations[i][j] * prices[j]).sum();
        budget = budget.max((prices[i] - spent).abs());
    }
    let mut bpb = 0.0f64;
    for i in 0..n {
        let best = (0..n)
            .filter(|&j| market.utility(i, j) > 0)
            .map(|j| market.utility(i, j) as f64 / prices[j])
            .fold(0.0f64, f64::max);
        if best <= 0.0 {
            continue;
        }
        for j in 0..n {
            if allocations[i][j] > 1e-9 {
                let ratio = market.utility(i, j) as f64 / prices[j];
                bpb = bpb.max((best - ratio) / best);
            }
        }
    }
    (clearing, budget, bpb)
}

/// Objective of the underlying convex program at a recovered solution; zero
/// at an exact equilibrium.
pub fn exchange_program_objective(
    market: &ExchangeMarket,
    prices: &[f64],
    beta: &[f64],
    allocations: &[Vec<f64>],
) -> f64 {
    let n = market.agents();
    let mut value = 0.0;
    for i in 0..n {
        value += prices[i] * (prices[i] / beta[i]).ln();
        for j in 0..n {
            if market.utility(i, j) > 0 {
                let money = allocations[i][j] * prices[j];
                value -= money * (market.utility(i, j) as f64).ln();
            }
        }
    }
    value
}

// ---- Fisher markets with spending-constraint utilities ----

#[derive(Debug, Clone)]
pub struct FisherSegment {
    pub buyer: usize,
    pub good: usize,
    /// Utility per unit of the good on this segment.
    pub rate: f64,
    /// Spending cap of the segment.
    pub cap: f64,
}

#[derive(Debug, Clone)]
pub struct FisherMarket {
    budgets: Vec<f64>,
    goods: usize,
    segments: Vec<FisherSegment>,
}

impl FisherMarket {
    pub fn new(budgets: Vec<f64>, goods: usize, segments: Vec<FisherSegment>) -> Result<Self> {
        let buyers = budgets.len();
        if buyers == 0 || goods == 0 {
            return Err(Error::InvalidArgument(
                "need at least one buyer and one good".into(),
            ));
        }
        if !budgets.iter().all(|&b| b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidArgument("budgets must be positive".into()));
        }
        for (k, seg) in segments.iter().enumerate() {
            if seg.buyer >= buyers || seg.good >= goods {
                return Err(Error::InvalidArgument(format!("segment {k} out of range")));
            }
            if !(seg.rate > 0.0 && seg.cap > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "segment {k} needs positive rate and cap"
                )));
            }
        }
        for i in 0..buyers {
            let cap_total: f64 = segments
                .iter()
                .filter(|s| s.buyer == i)
                .map(|s| s.cap)
                .sum();
            if cap_total < budgets[i] {
                return Err(Error::InvalidArgument(format!(
                    "buyer {i} cannot spend the whole budget within segment caps"
                )));
            }
        }
        for j in 0..goods {
            if !segments.iter().any(|s| s.good == j) {
                return Err(Error::InvalidArgument(format!("good {j} has no segment")));
            }
        }
        Ok(FisherMarket {
            budgets,
            goods,
            segments,
        })
    }

    pub fn buyers(&self) -> usize {
        self.budgets.len()
    }

    pub fn goods(&self) -> usize {
        self.goods
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn segments(&self) -> &[FisherSegment] {
        &self.segments
    }

    pub fn max_rate(&self) -> f64 {
        self.segments.iter().map(|s| s.rate).fold(0.0, f64::max)
    }
}

/// Value and gradients of the Fisher game objective
/// `-sum_j p_j log p_j + sum_j eta_j p_j + sum_i lambda_i B_i
///  + sum_segments cap * max(0, log rate - eta_good - lambda_buyer)`.
/// Hinge subgradients take 0 at the kink.
#[allow(clippy::type_complexity)]
pub fn fisher_game_oracle(
    market: &FisherMarket,
    p: &[f64],
    eta: &[f64],
    lambda: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let ng = market.goods();
    let nb = market.buyers();
    if p.len() != ng || eta.len() != ng || lambda.len() != nb {
        return Err(Error::DimensionMismatch {
            context: "fisher oracle",
            expected: ng,
            got: p.len(),
        });
    }
    if !p.iter().all(|&v| v > 0.0) {
        return Err(Error::InvalidArgument("prices must be positive".into()));
    }
    let mut value = 0.0;
    let mut grad_p = vec![0.0; ng];
    let mut grad_eta = vec![0.0; ng];
    let mut grad_lambda = vec![0.0; nb];
    for j in 0..ng {
        value += -p[j] * p[j].ln() + eta[j] * p[j];
        grad_p[j] = -p[j].ln() - 1.0 + eta[j];
        grad_eta[j] = p[j];
    }
    for i in 0..nb {
        value += lambda[i] * market.budgets()[i];
        grad_lambda[i] = market.budgets()[i];
    }
    for seg in market.segments() {
        let margin = seg.rate.ln() - eta[seg.good] - lambda[seg.buyer];
        if margin > 0.0 {
            value += seg.cap * margin;
            grad_eta[seg.good] -= seg.cap;
            grad_lambda[seg.buyer] -= seg.cap;
        }
    }
    Ok((value, grad_p, grad_eta, grad_lambda))
}

struct FisherDuals {
    bound: f64,
}

impl SeparationOracle for FisherDuals {
    fn query(&mut self, x: &[f64]) -> OracleResponse {
        for (k, &v) in x.iter().enumerate() {
            if v > self.bound {
                let mut a = vec![0.0; x.len()];
                a[k] = -1.0;
                return OracleResponse::Separator { a, b: -self.bound };
            }
            if v < -self.bound {
                let mut a = vec![0.0; x.len()];
                a[k] = 1.0;
                return OracleResponse::Separator { a, b: -self.bound };
            }
        }
        OracleResponse::Inside
    }
}

struct FisherPrices {
    lo: f64,
    hi: f64,
}

impl SeparationOracle for FisherPrices {
    fn query(&mut self, x: &[f64]) -> OracleResponse {
        for (k, &v) in x.iter().enumerate() {
            if v < self.lo {
                let mut a = vec![0.0; x.len()];
                a[k] = 1.0;
                return OracleResponse::Separator { a, b: self.lo };
            }
            if v > self.hi {
                let mut a = vec![0.0; x.len()];
                a[k] = -1.0;
                return OracleResponse::Separator { a, b: -self.hi };
            }
        }
        OracleResponse::Inside
    }
}

/// Solve a Fisher market: the minimizing block is `(eta, lambda)`, the
/// maximizing block is the price vector; spending is recovered from the
/// hinge activity pattern with a transportation cleanup.
pub fn solve_fisher(
    market: &FisherMarket,
    eps_eq: f64,
    seed: u64,
    options: &MarketOptions,
) -> Result<EquilibriumReport> {
    let ng = market.goods();
    let nb = market.buyers();
    let budget_total: f64 = market.budgets().iter().sum();
    let p_hi = options.price_bound.unwrap_or(1.1 * budget_total);
    let p_lo = 1e-3
        * market
            .budgets()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
        / ng as f64;
    let dual_bound = options
        .dual_bound
        .unwrap_or_else(|| market.max_rate().ln().abs() + (p_hi / p_lo).ln() + 2.0);

    let cap_total: f64 = market.segments().iter().map(|s| s.cap).sum();
    let grad_eta_bound = p_hi + cap_total;
    let grad_lambda_bound = budget_total + cap_total;
    let grad_p_bound = (1.0 / p_lo).ln().abs().max(p_hi.ln().abs()) + 1.0 + dual_bound;
    let lipschitz = ((ng as f64) * grad_eta_bound * grad_eta_bound
        + (nb as f64) * grad_lambda_bound * grad_lambda_bound
        + (ng as f64) * grad_p_bound * grad_p_bound)
        .sqrt();

    let radius = p_hi.max(dual_bound);
    let spec = SaddleSpec {
        dim_x: ng + nb,
        dim_y: ng,
        radius,
        inner_radius: (0.25 * (p_hi - p_lo)).min(0.1),
        lipschitz,
    };
    let mut cfg = options.cut_plane.clone();
    cfg.seed = seed;
    cfg.audit_every = 0;
    let market2 = market.clone();
    let mut first_order = move |x: &[f64], y: &[f64]| {
        let (eta, lambda) = x.split_at(market2.goods());
        let (value, gp, geta, glambda) =
            fisher_game_oracle(&market2, y, eta, lambda).expect("interior point");
        let mut gx = geta;
        gx.extend(glambda);
        // x is the minimizing block, y the maximizing one: f convex in x,
        // concave in y, gradient pair (grad_x, -grad_y).
        (value, gx, gp)
    };
    let mut x_domain = FisherDuals { bound: dual_bound };
    let mut y_domain = FisherPrices { lo: p_lo, hi: p_hi };
    let saddle = solve_saddle(
        &spec,
        &mut first_order,
        &mut x_domain,
        &mut y_domain,
        (0.5f64).min(eps_eq),
        cfg,
    )?;
    let eta = &saddle.x[..ng];
    let lambda = &saddle.x[ng..];
    let prices = saddle.y.clone();
    let spending = recover_fisher_spending(market, &prices, eta, lambda, options.recovery_slack)?;
    let (clearing, budget, optimality) = verify_equilibrium_fisher(market, &prices, &spending);
    Ok(EquilibriumReport {
        prices,
        allocations: vec![spending],
        clearing_residual: clearing,
        budget_residual: budget,
        optimality_residual: optimality,
    })
}

/// Per-segment spending at fixed prices and duals: segments with clearly
/// positive hinge margin are eligible up to their caps, and a slack-minimized
/// transportation program matches the good and budget marginals.
pub fn recover_fisher_spending(
    market: &FisherMarket,
    prices: &[f64],
    eta: &[f64],
    lambda: &[f64],
    slack: f64,
) -> Result<Vec<f64>> {
    let ng = market.goods();
    let nb = market.buyers();
    let segs = market.segments();
    let tol = slack * (1.0 + market.max_rate().ln().abs());
    let eligible: Vec<usize> = (0..segs.len())
        .filter(|&k| {
            let s = &segs[k];
            s.rate.ln() - eta[s.good] - lambda[s.buyer] >= -tol
        })
        .collect();
    let e = eligible.len();
    // Variables: b_k for eligible segments, cap slack per segment, then
    // slack pairs per good and per buyer.
    let vars = e + e + 2 * ng + 2 * nb;
    let rows = e + ng + nb;
    let mut constraints = Matrix::zeros(rows, vars);
    let mut rhs = vec![0.0; rows];
    for (col, &k) in eligible.iter().enumerate() {
        let s = &segs[k];
        // b_k + cap_slack_k = cap
        constraints[(col, col)] = 1.0;
        constraints[(col, e + col)] = 1.0;
        rhs[col] = s.cap;
        // marginals
        constraints[(e + s.good, col)] = 1.0;
        constraints[(e + ng + s.buyer, col)] = 1.0;
    }
    for j in 0..ng {
        constraints[(e + j, 2 * e + 2 * j)] = 1.0;
        constraints[(e + j, 2 * e + 2 * j + 1)] = -1.0;
        rhs[e + j] = prices[j];
    }
    for i in 0..nb {
        constraints[(e + ng + i, 2 * e + 2 * ng + 2 * i)] = 1.0;
        constraints[(e + ng + i, 2 * e + 2 * ng + 2 * i + 1)] = -1.0;
        rhs[e + ng + i] = market.budgets()[i];
    }
    let mut objective = vec![0.0; vars];
    for s in objective.iter_mut().skip(2 * e) {
        *s = 1.0;
    }
    let sol = solve_lp(&LinearProgram {
        objective,
        constraints,
        rhs,
    })?;
    let mut spending = vec![0.0; segs.len()];
    for (col, &k) in eligible.iter().enumerate() {
        spending[k] = sol.x[col];
    }
    Ok(spending)
}

/// Residuals of a candidate Fisher equilibrium: relative clearing per good,
/// relative budget balance per buyer, and the relative utility shortfall
/// against the greedy best response at the given prices.
pub fn verify_equilibrium_fisher(
    market: &FisherMarket,
    prices: &[f64],
    spending: &[f64],
) -> (f64, f64, f64) {
    let ng = market.goods();
    let nb = market.buyers();
    let segs = market.segments();
    let mut clearing = 0.0f64;
    for j in 0..ng {
        let sold: f64 = segs
            .iter()
            .zip(spending)
            .filter(|(s, _)| s.good == j)
            .map(|(_, b)| b)
            .sum();
        clearing = clearing.max((sold - prices[j]).abs() / prices[j].max(1e-12));
    }
    let mut budget = 0.0f64;
    for i in 0..nb {
        let spent: f64 = segs
            .iter()
            .zip(spending)
            .filter(|(s, _)| s.buyer == i)
            .map(|(_, b)| b)
            .sum();
        budget = budget.max((spent - market.budgets()[i]).abs() / market.budgets()[i]);
    }
    // Greedy best response per buyer.
    let mut optimality = 0.0f64;
    for i in 0..nb {
        let mut order: Vec<usize> = (0..segs.len()).filter(|&k| segs[k].buyer == i).collect();
        order.sort_by(|&a, &b| {
            let ra = segs[a].rate / prices[segs[a].good];
            let rb = segs[b].rate / prices[segs[b].good];
            rb.partial_cmp(&ra).unwrap()
        });
        let mut remaining = market.budgets()[i];
        let mut best_utility = 0.0;
        for &k in &order {
            if remaining <= 0.0 {
                break;
            }
            let amount = segs[k].cap.min(remaining);
            best_utility += amount * segs[k].rate / prices[segs[k].good];
            remaining -= amount;
        }
        let achieved: f64 = segs
            .iter()
            .zip(spending)
            .filter(|(s, _)| s.buyer == i)
            .map(|(s, b)| b * s.rate / prices[s.good])
            .sum();
        if best_utility > 0.0 {
            optimality = optimality.max((best_utility - achieved) / best_utility);
        }
    }
    (clearing, budget, optimality)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_difference_check(
        value_at: &dyn Fn(&[f64]) -> f64,
        grad: &[f64],
        point: &[f64],
        h: f64,
        tol: f64,
    ) {
        for k in 0..point.len() {
            let mut plus = point.to_vec();
            plus[k] += h;
            let mut minus = point.to_vec();
            minus[k] -= h;
            let fd = (value_at(&plus) - value_at(&minus)) / (2.0 * h);
            assert!(
                (fd - grad[k]).abs() <= tol * (1.0 + fd.abs()),
                "coordinate {k}: fd {fd} vs grad {}",
                grad[k]
            );
        }
    }

    #[test]
    fn ad_oracle_matches_finite_differences_single_agent() {
        let market = ExchangeMarket::new(vec![vec![1]]).unwrap();
        let p = [1.7];
        let beta = [0.9];
        let lambda = [0.3];
        let eta = [-0.2];
        let (_, gp, gb, gl, ge) = ad_game_oracle(&market, &p, &beta, &lambda, &eta).unwrap();
        let at = |v: &[f64]| {
            let (val, ..) = ad_game_oracle(&market, &[v[0]], &[v[1]], &[v[2]], &[v[3]]).unwrap();
            val
        };
        let point = [p[0], beta[0], lambda[0], eta[0]];
        let grads = [gp[0], gb[0], gl[0], ge[0]];
        finite_difference_check(&at, &grads, &point, 1e-6, 1e-6);
    }

    #[test]
    fn ad_oracle_lambda_gradient_is_minus_price() {
        let market = ExchangeMarket::new(vec![vec![0, 2], vec![3, 0]]).unwrap();
        let p = [2.0, 3.5];
        let beta = [0.5, 0.4];
        let (_, _, _, gl, _) =
            ad_game_oracle(&market, &p, &beta, &[0.1, 0.2], &[0.0, -0.1]).unwrap();
        assert_eq!(gl, vec![-2.0, -3.5]);
    }

    #[test]
    fn ad_oracle_random_finite_difference_points() {
        let market = ExchangeMarket::new(vec![
            vec![1, 2, 0, 1],
            vec![0, 1, 3, 0],
            vec![2, 0, 1, 1],
            vec![1, 0, 0, 2],
        ])
        .unwrap();
        let mut rng = crate::rng::Rng::from_seed(91);
        for _ in 0..5 {
            let p: Vec<f64> = (0..4).map(|_| 1.2 + rng.next_f64()).collect();
            let beta: Vec<f64> = (0..4).map(|_| 0.2 + 0.1 * rng.next_f64()).collect();
            let lambda: Vec<f64> = (0..4).map(|_| rng.uniform(-0.5, 0.5)).collect();
            let eta: Vec<f64> = (0..4).map(|_| rng.uniform(-0.5, 0.5)).collect();
            let (_, gp, ..) = ad_game_oracle(&market, &p, &beta, &lambda, &eta).unwrap();
            let at = |v: &[f64]| {
                let (val, ..) = ad_game_oracle(&market, v, &beta, &lambda, &eta).unwrap();
                val
            };
            finite_difference_check(&at, &gp, &p, 1e-6, 1e-5);
        }
    }

    #[test]
    fn ad_oracle_rejects_domain_violations() {
        let market = ExchangeMarket::new(vec![vec![1]]).unwrap();
        assert!(ad_game_oracle(&market, &[0.5], &[0.5], &[0.0], &[0.0]).is_err());
        assert!(ad_game_oracle(&market, &[1.5], &[0.0], &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn market_assumptions_are_validated() {
        // Agent 0 values nothing.
        assert!(ExchangeMarket::new(vec![vec![0, 0], vec![1, 1]]).is_err());
        // Good 1 has no buyer.
        assert!(ExchangeMarket::new(vec![vec![1, 0], vec![1, 0]]).is_err());
        // Singleton component without a loop: 0 <-> 0 missing.
        assert!(ExchangeMarket::new(vec![vec![0, 1], vec![0, 1]]).is_err());
        // Two mutually trading agents are fine.
        assert!(ExchangeMarket::new(vec![vec![0, 1], vec![1, 0]]).is_ok());
    }

    #[test]
    fn verifier_flags_constructed_violations() {
        let market = ExchangeMarket::new(vec![vec![0, 1], vec![1, 0]]).unwrap();
        let prices = vec![1.0, 1.0];
        let perfect = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let (c, b, o) = verify_equilibrium_ad(&market, &prices, &perfect);
        assert!(c == 0.0 && b == 0.0 && o == 0.0);
        // Perturbing one price breaks bang-per-buck optimality for somebody.
        let skew = vec![1.1, 1.0];
        let (_, _, o2) = verify_equilibrium_ad(&market, &skew, &perfect);
        assert!(o2 == 0.0); // single edge per agent: still optimal
        let (_, b2, _) = verify_equilibrium_ad(&market, &skew, &perfect);
        assert!(b2 > 0.0); // but budgets no longer balance
                           // Zero allocation leaves goods unsold.
        let empty = vec![vec![0.0; 2]; 2];
        let (c3, ..) = verify_equilibrium_ad(&market, &prices, &empty);
        assert!((c3 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fisher_oracle_matches_finite_differences() {
        let market = FisherMarket::new(
            vec![2.0],
            1,
            vec![FisherSegment {
                buyer: 0,
                good: 0,
                rate: 3.0,
                cap: 5.0,
            }],
        )
        .unwrap();
        let p = [1.4];
        let eta = [0.3];
        let lambda = [0.2];
        let (_, gp, ge, gl) = fisher_game_oracle(&market, &p, &eta, &lambda).unwrap();
        // Away from the hinge kink the objective is smooth.
        let at = |v: &[f64]| {
            let (val, ..) = fisher_game_oracle(&market, &[v[0]], &[v[1]], &[v[2]]).unwrap();
            val
        };
        finite_difference_check(
            &at,
            &[gp[0], ge[0], gl[0]],
            &[p[0], eta[0], lambda[0]],
            1e-6,
            1e-5,
        );
    }

    #[test]
    fn fisher_lambda_gradient_reflects_active_segments() {
        let market = FisherMarket::new(
            vec![4.0],
            2,
            vec![
                FisherSegment {
                    buyer: 0,
                    good: 0,
                    rate: 3.0,
                    cap: 2.5,
                },
                FisherSegment {
                    buyer: 0,
                    good: 1,
                    rate: 1.0,
                    cap: 6.0,
                },
            ],
        )
        .unwrap();
        // With eta = 0 and lambda = 0 both hinges are active (log rates 1.1, 0).
        let (_, _, _, gl) = fisher_game_oracle(&market, &[1.0, 1.0], &[0.0, 0.0], &[-0.5]).unwrap();
        assert!((gl[0] - (4.0 - 2.5 - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn fisher_market_validation() {
        // Caps below the budget.
        assert!(FisherMarket::new(
            vec![10.0],
            1,
            vec![FisherSegment {
                buyer: 0,
                good: 0,
                rate: 1.0,
                cap: 2.0
            }],
        )
        .is_err());
        // Good without a segment.
        assert!(FisherMarket::new(
            vec![1.0],
            2,
            vec![FisherSegment {
                buyer: 0,
                good: 0,
                rate: 1.0,
                cap: 2.0
            }],
        )
        .is_err());
    }

    #[test]
    fn fisher_verifier_on_hand_solution() {
        // One buyer, two identical goods, ample caps: prices B/2 each and
        // spending split evenly is an equilibrium.
        let market = FisherMarket::new(
            vec![2.0],
            2,
            vec![
                FisherSegment {
                    buyer: 0,
                    good: 0,
                    rate: 1.0,
                    cap: 3.0,
                },
                FisherSegment {
                    buyer: 0,
                    good: 1,
                    rate: 1.0,
                    cap: 3.0,
                },
            ],
        )
        .unwrap();
        let (c, b, o) = verify_equilibrium_fisher(&market, &[1.0, 1.0], &[1.0, 1.0]);
        assert!(c < 1e-12 && b < 1e-12 && o < 1e-12);
    }
}
