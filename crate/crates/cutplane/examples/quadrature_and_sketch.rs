//! The two numerical primitives under the randomized estimator: Gauss
//! quadrature on [0,1] and seeded Gaussian sketches for inner products.
//!
//!     cargo run --release --example quadrature_and_sketch

use cutplane::quad::QuadratureRule;
use cutplane::rng::derive_seed;
use cutplane::sketch::make_sketch;

fn main() {
    println!("gauss rules on [0,1], integrating exp(t):");
    let exact = std::f64::consts::E - 1.0;
    for n in 1..=6 {
        let rule = QuadratureRule::gauss(n).unwrap();
        let value = rule.integrate(f64::exp).unwrap();
        println!(
            "  {n} nodes: {value:.12} (error {:.2e})",
            (value - exact).abs()
        );
    }

    let rule = QuadratureRule::gauss(5).unwrap();
    let tensor = rule
        .integrate_tensor(3, |p| (p[0] + p[1] + p[2]).exp())
        .unwrap();
    println!(
        "tensor cube of exp(s+s'+t): {tensor:.10} vs {:.10}",
        exact.powi(3)
    );

    println!("\nsketched inner products (r = 16):");
    let m = 32;
    let x: Vec<f64> = (0..m).map(|i| (i as f64 * 0.17).sin()).collect();
    let y: Vec<f64> = (0..m).map(|i| (i as f64 * 0.29).cos()).collect();
    let truth: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let trials = 500;
    let mut mean = 0.0;
    let mut mean_sq = 0.0;
    for t in 0..trials {
        let sketch = make_sketch(16, m, derive_seed(99, &[t]));
        let est = sketch.sketched_inner(&x, &y).unwrap();
        mean += est;
        mean_sq += est * est;
    }
    mean /= trials as f64;
    let var = mean_sq / trials as f64 - mean * mean;
    println!("  true inner product: {truth:.6}");
    println!("  mean of {trials} sketched estimates: {mean:.6}");
    println!(
        "  empirical variance {var:.4e} (bound 3/r * |x|^2 |y|^2 = {:.4e})",
        3.0 / 16.0 * x.iter().map(|v| v * v).sum::<f64>() * y.iter().map(|v| v * v).sum::<f64>()
    );
}
