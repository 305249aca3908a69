//! Minimize a convex quadratic over a box through the subgradient reduction.
//!
//!     cargo run --release --example convex_minimize

use cutplane::convex::{minimize_convex, BoxDomain};
use cutplane::cutting_plane::CutPlaneConfig;
use cutplane::mat::dot;

fn main() {
    let n = 6;
    let alpha = 0.01;
    let target: Vec<f64> = (0..n).map(|i| 0.25 - 0.08 * i as f64).collect();

    let t2 = target.clone();
    let mut objective = move |x: &[f64]| {
        let d: Vec<f64> = x.iter().zip(&t2).map(|(a, b)| a - b).collect();
        (dot(&d, &d), d.iter().map(|v| 2.0 * v).collect())
    };
    let mut domain = BoxDomain { radius: 1.0 };

    let res = minimize_convex(
        &mut objective,
        &mut domain,
        n,
        1.0,
        alpha,
        2.0,
        CutPlaneConfig::default(),
    )
    .expect("minimization failed");

    println!("minimum value found: {:.6e}", res.value);
    println!("subgradient calls:   {}", res.subgradient_calls);
    println!("point: {:?}", res.point);
    let dist: f64 = res
        .point
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    println!("distance to the true minimizer: {dist:.4e}");
}
