//! Instance files, run configuration, convergence traces, and the command
//! implementations behind the `cutplane` binary.
//!
//! Instances are JSON with an explicit `schema` tag. Integer quantities such
//! as utilities may be written as decimal strings (the canonical form) or
//! plain numbers. Trace CSV files are append-only and flushed per row.
//! Timing columns are written as zero unless `record_timing` is set in the
//! config, so fixed-seed runs are byte-identical.

use crate::convex::{minimize_convex, BoxDomain, SubgradientOracle};
use crate::cutting_plane::{
    run_feasibility, BallOracle, CutPlaneConfig, EmptySetAdversary, FeasibilityOutcome,
    HalfspaceOracle, SeparationOracle,
};
use crate::error::{Error, Result};
use crate::layered::{LayerParams, LayeredMaintainer};
use crate::market::{
    solve_arrow_debreu, solve_fisher, ExchangeMarket, FisherMarket, FisherSegment, MarketOptions,
};
use crate::mat::{dot, norm2, Matrix};
use crate::ops::{leverage_scores_exact, ConstraintMatrix, WeightVector};
use crate::rng::{derive_seed, Rng};
use crate::saddle::{solve_saddle, SaddleSpec};

use serde::Deserialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

// ---- flexible number parsing (decimal strings or JSON numbers) ----

fn parse_number(v: &serde_json::Value, what: &str) -> Result<f64> {
    match v {
        serde_json::Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| Error::Parse(format!("{what}: bad number"))),
        serde_json::Value::String(s) => s
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("{what}: cannot parse '{s}'"))),
        _ => Err(Error::Parse(format!(
            "{what}: expected number or decimal string"
        ))),
    }
}

fn parse_u64(v: &serde_json::Value, what: &str) -> Result<u64> {
    let f = parse_number(v, what)?;
    if f < 0.0 || f.fract() != 0.0 {
        return Err(Error::Parse(format!(
            "{what}: expected a nonnegative integer"
        )));
    }
    Ok(f as u64)
}

// ---- run configuration ----

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerOverrides {
    pub t_inner: Option<usize>,
    pub t_middle: Option<usize>,
    pub t_outer: Option<usize>,
    pub eps_inner: Option<f64>,
    pub eps_middle: Option<f64>,
    pub eps_outer: Option<f64>,
    pub sketch_dim: Option<usize>,
    pub quad_nodes: Option<usize>,
}

/// Solver parameters loaded from `--config`; every field is optional and
/// falls back to the library default.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: Option<String>,
    pub c1: Option<f64>,
    pub delta: Option<f64>,
    pub c2: Option<f64>,
    pub damping: Option<f64>,
    pub budget_factor: Option<f64>,
    pub row_leverage_cap: Option<f64>,
    pub audit_every: Option<usize>,
    pub layer: Option<LayerOverrides>,
    pub price_bound: Option<f64>,
    pub dual_bound: Option<f64>,
    pub recovery_slack: Option<f64>,
    /// When false (default), timing columns are written as zero so that
    /// fixed-seed outputs are byte-identical.
    pub record_timing: Option<bool>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Io(format!("reading {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Parse(format!("config: {e}")))
            }
        }
    }

    pub fn cut_plane(&self, seed: u64) -> CutPlaneConfig {
        let mut cfg = CutPlaneConfig::default();
        if let Some(v) = self.c1 {
            cfg.c1 = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.c2 {
            cfg.c2 = v;
        }
        if let Some(v) = self.damping {
            cfg.damping = v;
        }
        if let Some(v) = self.budget_factor {
            cfg.budget_factor = v;
        }
        if let Some(v) = self.row_leverage_cap {
            cfg.row_leverage_cap = v;
        }
        if let Some(v) = self.audit_every {
            cfg.audit_every = v;
        }
        cfg.seed = seed;
        cfg
    }

    pub fn layer_params(&self, n: usize, seed: u64) -> LayerParams {
        let mut p = LayerParams::desk(n, seed);
        if let Some(o) = &self.layer {
            if let Some(v) = o.t_inner {
                p.t_inner = v;
            }
            if let Some(v) = o.t_middle {
                p.t_middle = v;
            }
            if let Some(v) = o.t_outer {
                p.t_outer = v;
            }
            if let Some(v) = o.eps_inner {
                p.eps_inner = v;
            }
            if let Some(v) = o.eps_middle {
                p.eps_middle = v;
            }
            if let Some(v) = o.eps_outer {
                p.eps_outer = v;
            }
            if let Some(v) = o.sketch_dim {
                p.sketch_dim = v;
            }
            if let Some(v) = o.quad_nodes {
                p.quad_nodes = v;
            }
        }
        p
    }

    pub fn market_options(&self, seed: u64) -> MarketOptions {
        let mut opts = MarketOptions::default();
        opts.cut_plane = self.cut_plane(seed);
        opts.price_bound = self.price_bound;
        opts.dual_bound = self.dual_bound;
        if let Some(v) = self.recovery_slack {
            opts.recovery_slack = v;
        }
        opts
    }

    fn timing(&self) -> bool {
        self.record_timing.unwrap_or(false)
    }
}

// ---- log verbosity ----

fn log_level() -> u8 {
    std::env::var("CUTPLANE_LOG")
        .ok()
        .and_then(|v| v.parse::<u8>().ok())
        .unwrap_or(0)
}

macro_rules! info {
    ($($arg:tt)*) => {
        if log_level() >= 1 {
            eprintln!($($arg)*);
        }
    };
}

// ---- trace writer ----

/// Append-only CSV trace, flushed per row.
pub struct TraceWriter {
    file: fs::File,
}

pub const TRACE_HEADER: &str = "iteration,oracle_calls,barrier,sigma_err,wall_ms,constraints";

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = fs::File::create(path)
            .map_err(|e| Error::Io(format!("creating {}: {e}", path.display())))?;
        writeln!(file, "{TRACE_HEADER}").map_err(|e| Error::Io(e.to_string()))?;
        file.flush().map_err(|e| Error::Io(e.to_string()))?;
        Ok(TraceWriter { file })
    }

    pub fn row(
        &mut self,
        iteration: usize,
        oracle_calls: usize,
        barrier: f64,
        sigma_err: Option<f64>,
        wall_ms: f64,
        constraints: usize,
    ) -> Result<()> {
        let sig = sigma_err.map(|v| format!("{v:.6e}")).unwrap_or_default();
        writeln!(
            self.file,
            "{iteration},{oracle_calls},{barrier:.9e},{sig},{wall_ms:.3},{constraints}"
        )
        .map_err(|e| Error::Io(e.to_string()))?;
        self.file.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

// ---- command entry points ----

pub struct CommandArgs {
    pub instance: PathBuf,
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

fn read_instance(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("instance: {e}")))
}

fn expect_schema(v: &serde_json::Value, expected: &str) -> Result<()> {
    match v.get("schema").and_then(|s| s.as_str()) {
        Some(s) if s == expected => Ok(()),
        Some(s) => Err(Error::Parse(format!(
            "schema '{s}' but this command expects '{expected}'"
        ))),
        None => Err(Error::Parse("instance is missing the schema field".into())),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::Io(format!("writing {}: {e}", path.display())))
}

fn vec_f64(v: &serde_json::Value, what: &str) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| Error::Parse(format!("{what}: expected an array")))?
        .iter()
        .map(|x| parse_number(x, what))
        .collect()
}

/// Feasibility run: outcome JSON plus a per-iteration trace CSV.
/// Exit code 0 on a found point, 2 on a no-ball certificate.
pub fn cmd_feasibility(args: &CommandArgs) -> Result<i32> {
    let inst = read_instance(&args.instance)?;
    expect_schema(&inst, "cutplane/feasibility/v1")?;
    let cfg_file = RunConfig::load(args.config.as_deref())?;
    let n = parse_u64(
        inst.get("n")
            .ok_or_else(|| Error::Parse("missing n".into()))?,
        "n",
    )? as usize;
    let radius = parse_number(
        inst.get("radius")
            .ok_or_else(|| Error::Parse("missing radius".into()))?,
        "radius",
    )?;
    let eps = parse_number(
        inst.get("eps")
            .ok_or_else(|| Error::Parse("missing eps".into()))?,
        "eps",
    )?;
    let oracle_spec = inst
        .get("oracle")
        .ok_or_else(|| Error::Parse("missing oracle".into()))?;
    let kind = oracle_spec
        .get("type")
        .and_then(|t| t.as_str())
        .ok_or_else(|| Error::Parse("oracle needs a type".into()))?;
    let mut oracle: Box<dyn SeparationOracle> = match kind {
        "ball" => Box::new(BallOracle {
            center: vec_f64(
                oracle_spec
                    .get("center")
                    .ok_or_else(|| Error::Parse("ball needs center".into()))?,
                "center",
            )?,
            radius: parse_number(
                oracle_spec
                    .get("radius")
                    .ok_or_else(|| Error::Parse("ball needs radius".into()))?,
                "ball radius",
            )?,
        }),
        "halfspaces" => {
            let normals = oracle_spec
                .get("normals")
                .ok_or_else(|| Error::Parse("halfspaces need normals".into()))?
                .as_array()
                .ok_or_else(|| Error::Parse("normals must be an array".into()))?
                .iter()
                .map(|row| vec_f64(row, "normal"))
                .collect::<Result<Vec<_>>>()?;
            Box::new(HalfspaceOracle {
                normals: Matrix::from_rows(&normals),
                offsets: vec_f64(
                    oracle_spec
                        .get("offsets")
                        .ok_or_else(|| Error::Parse("halfspaces need offsets".into()))?,
                    "offsets",
                )?,
            })
        }
        "empty_adversary" => Box::new(EmptySetAdversary { counter: 0 }),
        other => return Err(Error::Parse(format!("unknown oracle type '{other}'"))),
    };
    let cfg = cfg_file.cut_plane(args.seed);
    info!("feasibility: n={n} radius={radius} eps={eps}");
    let started = Instant::now();
    let run = run_feasibility(oracle.as_mut(), n, radius, eps, cfg)?;
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;

    let mut trace = TraceWriter::create(&args.out_dir.join("trace.csv"))?;
    let per_row_ms = if cfg_file.timing() && !run.trace.is_empty() {
        elapsed_ms / run.trace.len() as f64
    } else {
        0.0
    };
    for r in &run.trace {
        trace.row(
            r.iteration,
            r.oracle_calls,
            r.barrier,
            r.sigma_error,
            per_row_ms,
            r.constraints,
        )?;
    }
    let (status, payload) = match &run.outcome {
        FeasibilityOutcome::FoundPoint(x) => ("found", serde_json::json!({ "point": x })),
        FeasibilityOutcome::NoBallOfRadius { eps, final_barrier } => (
            "no_ball",
            serde_json::json!({ "eps": eps, "final_barrier": final_barrier }),
        ),
    };
    let outcome = serde_json::json!({
        "schema": "cutplane/feasibility-outcome/v1",
        "status": status,
        "detail": payload,
        "oracle_calls": run.oracle_calls,
        "iterations": run.iterations,
        "seed": args.seed,
    });
    write_json(&args.out_dir.join("outcome.json"), &outcome)?;
    Ok(
        if matches!(run.outcome, FeasibilityOutcome::FoundPoint(_)) {
            0
        } else {
            2
        },
    )
}

/// Convex minimization over a box domain.
pub fn cmd_convex(args: &CommandArgs) -> Result<i32> {
    let inst = read_instance(&args.instance)?;
    expect_schema(&inst, "cutplane/convex/v1")?;
    let cfg_file = RunConfig::load(args.config.as_deref())?;
    let n = parse_u64(
        inst.get("n")
            .ok_or_else(|| Error::Parse("missing n".into()))?,
        "n",
    )? as usize;
    let radius = parse_number(
        inst.get("radius").unwrap_or(&serde_json::json!(1.0)),
        "radius",
    )?;
    let alpha = parse_number(
        inst.get("alpha")
            .ok_or_else(|| Error::Parse("missing alpha".into()))?,
        "alpha",
    )?;
    let objective_spec = inst
        .get("objective")
        .ok_or_else(|| Error::Parse("missing objective".into()))?;
    let kind = objective_spec
        .get("type")
        .and_then(|t| t.as_str())
        .ok_or_else(|| Error::Parse("objective needs a type".into()))?;
    let mut oracle: Box<dyn SubgradientOracle> = match kind {
        "quadratic" => {
            let target = vec_f64(
                objective_spec
                    .get("target")
                    .ok_or_else(|| Error::Parse("quadratic needs target".into()))?,
                "target",
            )?;
            Box::new(move |x: &[f64]| {
                let d: Vec<f64> = x.iter().zip(&target).map(|(a, b)| a - b).collect();
                (dot(&d, &d), d.iter().map(|v| 2.0 * v).collect())
            })
        }
        "linear" => {
            let c = vec_f64(
                objective_spec
                    .get("coefficients")
                    .ok_or_else(|| Error::Parse("linear needs coefficients".into()))?,
                "coefficients",
            )?;
            Box::new(move |x: &[f64]| (dot(&c, x), c.clone()))
        }
        "max_coordinate" => Box::new(|x: &[f64]| {
            let (arg, val) = x
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, v)| (i, *v))
                .unwrap();
            let mut g = vec![0.0; x.len()];
            g[arg] = 1.0;
            (val, g)
        }),
        other => return Err(Error::Parse(format!("unknown objective type '{other}'"))),
    };
    let mut domain = BoxDomain { radius };
    let res = minimize_convex(
        oracle.as_mut(),
        &mut domain,
        n,
        radius,
        alpha,
        2.0 * radius,
        cfg_file.cut_plane(args.seed),
    )?;
    let report = serde_json::json!({
        "schema": "cutplane/convex-report/v1",
        "point": res.point,
        "value": res.value,
        "subgradient_calls": res.subgradient_calls,
        "iterations": res.iterations,
        "seed": args.seed,
    });
    write_json(&args.out_dir.join("report.json"), &report)?;
    Ok(0)
}

/// Saddle-point run on a built-in game family; exit 2 when the certificate
/// misses the requested gap.
pub fn cmd_saddle(args: &CommandArgs) -> Result<i32> {
    let inst = read_instance(&args.instance)?;
    expect_schema(&inst, "cutplane/saddle/v1")?;
    let cfg_file = RunConfig::load(args.config.as_deref())?;
    let game = inst
        .get("game")
        .ok_or_else(|| Error::Parse("missing game".into()))?;
    let kind = game
        .get("type")
        .and_then(|t| t.as_str())
        .ok_or_else(|| Error::Parse("game needs a type".into()))?;
    let eps = parse_number(
        inst.get("eps")
            .ok_or_else(|| Error::Parse("missing eps".into()))?,
        "eps",
    )?;
    let radius = parse_number(
        inst.get("radius").unwrap_or(&serde_json::json!(1.0)),
        "radius",
    )?;
    let (spec, mut first_order): (
        SaddleSpec,
        Box<dyn FnMut(&[f64], &[f64]) -> (f64, Vec<f64>, Vec<f64>)>,
    ) = match kind {
        "scalar_product" => (
            SaddleSpec {
                dim_x: 1,
                dim_y: 1,
                radius,
                inner_radius: radius,
                lipschitz: 1.5 * radius,
            },
            Box::new(|x: &[f64], y: &[f64]| (x[0] * y[0], vec![y[0]], vec![x[0]])),
        ),
        "separable_quadratic" => {
            let dim = parse_u64(game.get("dim").unwrap_or(&serde_json::json!(2)), "dim")? as usize;
            (
                SaddleSpec {
                    dim_x: dim,
                    dim_y: dim,
                    radius,
                    inner_radius: radius,
                    lipschitz: 2.0 * (2.0 * dim as f64).sqrt() * radius,
                },
                Box::new(|x: &[f64], y: &[f64]| {
                    (
                        dot(x, x) - dot(y, y),
                        x.iter().map(|v| 2.0 * v).collect(),
                        y.iter().map(|v| -2.0 * v).collect(),
                    )
                }),
            )
        }
        "bilinear" => {
            let rows = game
                .get("matrix")
                .ok_or_else(|| Error::Parse("bilinear needs matrix".into()))?
                .as_array()
                .ok_or_else(|| Error::Parse("matrix must be an array".into()))?
                .iter()
                .map(|r| vec_f64(r, "matrix row"))
                .collect::<Result<Vec<_>>>()?;
            let c = Matrix::from_rows(&rows);
            let dim_x = c.rows();
            let dim_y = c.cols();
            // Gradient norm over the boxes bounds the Lipschitz constant.
            let lipschitz = radius
                * (0..dim_x)
                    .map(|i| crate::mat::norm1(c.row(i)))
                    .chain((0..dim_y).map(|j| crate::mat::norm1(&c.column(j))))
                    .fold(0.0f64, f64::max)
                * (2.0f64).sqrt()
                * (dim_x.max(dim_y) as f64).sqrt();
            (
                SaddleSpec {
                    dim_x,
                    dim_y,
                    radius,
                    inner_radius: radius,
                    lipschitz,
                },
                Box::new(move |x: &[f64], y: &[f64]| {
                    (dot(x, &c.matvec(y)), c.matvec(y), c.tr_matvec(x))
                }),
            )
        }
        other => return Err(Error::Parse(format!("unknown game type '{other}'"))),
    };
    let mut xd = BoxDomain { radius };
    let mut yd = BoxDomain { radius };
    let target = eps * spec.lipschitz * spec.inner_radius;
    let sol = solve_saddle(
        &spec,
        first_order.as_mut(),
        &mut xd,
        &mut yd,
        eps,
        cfg_file.cut_plane(args.seed),
    )?;
    let report = serde_json::json!({
        "schema": "cutplane/saddle-report/v1",
        "x": sol.x,
        "y": sol.y,
        "gap_certificate": sol.gap_certificate,
        "gap_target": target,
        "feasible_mass": sol.feasible_mass,
        "oracle_calls": sol.oracle_calls,
        "seed": args.seed,
    });
    write_json(&args.out_dir.join("report.json"), &report)?;
    Ok(if sol.gap_certificate <= target { 0 } else { 2 })
}

fn market_report_json(report: &crate::market::EquilibriumReport, seed: u64) -> serde_json::Value {
    serde_json::json!({
        "schema": "cutplane/market-report/v1",
        "prices": report.prices,
        "allocations": report.allocations,
        "clearing_residual": report.clearing_residual,
        "budget_residual": report.budget_residual,
        "optimality_residual": report.optimality_residual,
        "seed": seed,
    })
}

/// Linear exchange market; exit 2 when residuals exceed the instance's
/// tolerance (the report is still written).
pub fn cmd_market_ad(args: &CommandArgs) -> Result<i32> {
    let inst = read_instance(&args.instance)?;
    expect_schema(&inst, "cutplane/market-exchange/v1")?;
    let cfg_file = RunConfig::load(args.config.as_deref())?;
    let utilities = inst
        .get("utilities")
        .ok_or_else(|| Error::Parse("missing utilities".into()))?
        .as_array()
        .ok_or_else(|| Error::Parse("utilities must be an array".into()))?
        .iter()
        .map(|row| {
            row.as_array()
                .ok_or_else(|| Error::Parse("utility row must be an array".into()))?
                .iter()
                .map(|v| parse_u64(v, "utility"))
                .collect::<Result<Vec<u64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let eps_eq = parse_number(
        inst.get("eps_eq").unwrap_or(&serde_json::json!(0.01)),
        "eps_eq",
    )?;
    let market = ExchangeMarket::new(utilities)?;
    let report = solve_arrow_debreu(
        &market,
        eps_eq,
        args.seed,
        &cfg_file.market_options(args.seed),
    )?;
    write_json(
        &args.out_dir.join("report.json"),
        &market_report_json(&report, args.seed),
    )?;
    Ok(if report.max_residual() <= eps_eq {
        0
    } else {
        2
    })
}

/// Fisher market with spending-constraint utilities; exit semantics as above.
pub fn cmd_market_fisher(args: &CommandArgs) -> Result<i32> {
    let inst = read_instance(&args.instance)?;
    expect_schema(&inst, "cutplane/market-fisher/v1")?;
    let cfg_file = RunConfig::load(args.config.as_deref())?;
    let budgets = inst
        .get("budgets")
        .ok_or_else(|| Error::Parse("missing budgets".into()))?
        .as_array()
        .ok_or_else(|| Error::Parse("budgets must be an array".into()))?
        .iter()
        .map(|v| parse_number(v, "budget"))
        .collect::<Result<Vec<f64>>>()?;
    let goods = parse_u64(
        inst.get("goods")
            .ok_or_else(|| Error::Parse("missing goods".into()))?,
        "goods",
    )? as usize;
    let segments = inst
        .get("segments")
        .ok_or_else(|| Error::Parse("missing segments".into()))?
        .as_array()
        .ok_or_else(|| Error::Parse("segments must be an array".into()))?
        .iter()
        .map(|s| {
            Ok(FisherSegment {
                buyer: parse_u64(
                    s.get("buyer")
                        .ok_or_else(|| Error::Parse("segment needs buyer".into()))?,
                    "buyer",
                )? as usize,
                good: parse_u64(
                    s.get("good")
                        .ok_or_else(|| Error::Parse("segment needs good".into()))?,
                    "good",
                )? as usize,
                rate: parse_number(
                    s.get("rate")
                        .ok_or_else(|| Error::Parse("segment needs rate".into()))?,
                    "rate",
                )?,
                cap: parse_number(
                    s.get("cap")
                        .ok_or_else(|| Error::Parse("segment needs cap".into()))?,
                    "cap",
                )?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let eps_eq = parse_number(
        inst.get("eps_eq").unwrap_or(&serde_json::json!(0.01)),
        "eps_eq",
    )?;
    let market = FisherMarket::new(budgets, goods, segments)?;
    let report = solve_fisher(
        &market,
        eps_eq,
        args.seed,
        &cfg_file.market_options(args.seed),
    )?;
    write_json(
        &args.out_dir.join("report.json"),
        &market_report_json(&report, args.seed),
    )?;
    Ok(if report.max_residual() <= eps_eq {
        0
    } else {
        2
    })
}

pub const BENCH_HEADER: &str =
    "step,drift_simple,time_simple_ms,drift_layered,time_layered_ms,time_exact_ms";

/// Benchmark the estimators against exact recomputation on a synthetic
/// random-walk weight stream; one CSV row per step.
pub fn cmd_bench_leverage(args: &CommandArgs) -> Result<i32> {
    let inst = read_instance(&args.instance)?;
    expect_schema(&inst, "cutplane/bench-leverage/v1")?;
    let cfg_file = RunConfig::load(args.config.as_deref())?;
    let n = parse_u64(
        inst.get("n")
            .ok_or_else(|| Error::Parse("missing n".into()))?,
        "n",
    )? as usize;
    let m = parse_u64(
        inst.get("m")
            .ok_or_else(|| Error::Parse("missing m".into()))?,
        "m",
    )? as usize;
    let steps = parse_u64(
        inst.get("steps")
            .ok_or_else(|| Error::Parse("missing steps".into()))?,
        "steps",
    )? as usize;
    let step_size = parse_number(
        inst.get("step_size").unwrap_or(&serde_json::json!(0.01)),
        "step_size",
    )?;
    if m < n {
        return Err(Error::Parse("need m >= n".into()));
    }
    let timing = cfg_file.timing();
    let mut rng = Rng::from_seed(derive_seed(args.seed, &[1]));
    let a = Matrix::from_fn(m, n, |_, _| rng.normal());
    let w0: Vec<f64> = (0..m).map(|_| 0.5 + rng.next_f64()).collect();

    let mut simple = crate::estimator::SimpleEstimator::init(a.clone(), w0.clone(), 1e-3)?;
    let mut layered =
        LayeredMaintainer::init(a.clone(), w0.clone(), cfg_file.layer_params(n, args.seed))?;

    let path = args.out_dir.join("bench.csv");
    let mut file = fs::File::create(&path)
        .map_err(|e| Error::Io(format!("creating {}: {e}", path.display())))?;
    writeln!(file, "{BENCH_HEADER}").map_err(|e| Error::Io(e.to_string()))?;
    file.flush().map_err(|e| Error::Io(e.to_string()))?;

    let mut w = w0;
    for step in 1..=steps {
        let delta: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
        let scale = step_size / norm2(&delta).max(1e-12);
        w = w
            .iter()
            .zip(&delta)
            .map(|(wi, d)| wi * (d * scale).exp())
            .collect();

        let t0 = Instant::now();
        let exact = leverage_scores_exact(
            &ConstraintMatrix::new(a.clone())?,
            &WeightVector::new(w.clone())?,
        )?;
        let exact_ms = ms_or_zero(t0, timing);

        let t0 = Instant::now();
        simple.update(&crate::action::ActionSequence::new(vec![
            crate::action::UpdateAction::WeightUpdate(w.clone()),
        ]))?;
        let simple_ms = ms_or_zero(t0, timing);
        let drift_simple = drift(simple.query(), &exact);

        let t0 = Instant::now();
        layered.update(crate::action::UpdateAction::WeightUpdate(w.clone()))?;
        let layered_ms = ms_or_zero(t0, timing);
        let drift_layered = drift(layered.query(), &exact);

        writeln!(
            file,
            "{step},{drift_simple:.6e},{simple_ms:.3},{drift_layered:.6e},{layered_ms:.3},{exact_ms:.3}"
        )
        .map_err(|e| Error::Io(e.to_string()))?;
        file.flush().map_err(|e| Error::Io(e.to_string()))?;
    }
    Ok(0)
}

fn ms_or_zero(t0: Instant, timing: bool) -> f64 {
    if timing {
        t0.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    }
}

fn drift(estimate: &[f64], exact: &[f64]) -> f64 {
    let diff: Vec<f64> = estimate.iter().zip(exact).map(|(a, b)| a - b).collect();
    norm2(&diff)
}

/// Dispatch a named command; the binary maps this to process exit codes.
pub fn run_command(command: &str, args: &CommandArgs) -> Result<i32> {
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| Error::Io(format!("creating {}: {e}", args.out_dir.display())))?;
    match command {
        "feasibility" => cmd_feasibility(args),
        "convex" => cmd_convex(args),
        "saddle" => cmd_saddle(args),
        "market-ad" => cmd_market_ad(args),
        "market-fisher" => cmd_market_fisher(args),
        "bench-leverage" => cmd_bench_leverage(args),
        other => Err(Error::Parse(format!("unknown command '{other}'"))),
    }
}
