//! Find a point in a small off-center ball inside the unit box using the
//! volumetric-center cutting-plane driver.
//!
//!     cargo run --release --example feasibility_ball

use cutplane::cutting_plane::{
    oracle_budget, run_feasibility, BallOracle, CutPlaneConfig, FeasibilityOutcome,
};

fn main() {
    let n = 8;
    let radius = 1.0;
    let eps = 1e-3;
    let mut center = vec![0.0; n];
    center[0] = 0.45;
    center[5] = -0.3;
    let mut oracle = BallOracle {
        center: center.clone(),
        radius: 0.15,
    };

    let cfg = CutPlaneConfig::default();
    let budget = oracle_budget(&cfg, n, radius, eps);
    let run = run_feasibility(&mut oracle, n, radius, eps, cfg).expect("driver failed");

    println!("oracle calls: {} (budget {budget})", run.oracle_calls);
    match run.outcome {
        FeasibilityOutcome::FoundPoint(x) => {
            let dist: f64 = x
                .iter()
                .zip(&center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            println!("found point at distance {dist:.4} from the ball center");
            println!("point: {x:?}");
        }
        FeasibilityOutcome::NoBallOfRadius { eps, final_barrier } => {
            println!("no ball of radius {eps} (final barrier {final_barrier:.3})");
        }
    }
    if let Some(last) = run.trace.last() {
        println!(
            "final polytope: {} constraints, barrier {:.4}",
            last.constraints, last.barrier
        );
    }
}
