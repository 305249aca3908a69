//! Track leverage scores along a random-walk weight stream with the
//! three-layer maintainer and compare against exact recomputation.
//!
//!     cargo run --release --example leverage_maintenance

use cutplane::action::UpdateAction;
use cutplane::layered::{LayerParams, LayeredMaintainer};
use cutplane::mat::{norm2, Matrix};
use cutplane::ops::{leverage_scores_exact, ConstraintMatrix, WeightVector};
use cutplane::rng::Rng;

fn main() {
    let (m, n) = (64, 32);
    let steps = 64;
    let mut rng = Rng::from_seed(2024);
    let a = Matrix::from_fn(m, n, |_, _| rng.normal());
    let mut w: Vec<f64> = (0..m).map(|_| 0.5 + rng.next_f64()).collect();

    let mut maintainer =
        LayeredMaintainer::init(a.clone(), w.clone(), LayerParams::desk(n, 7)).expect("init");

    println!("step  drift(l2)   restarts");
    for step in 1..=steps {
        // Log-space step of l2 size 0.01, the per-action cap.
        let dir: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
        let scale = 0.01 / norm2(&dir).max(1e-12);
        w = w
            .iter()
            .zip(&dir)
            .map(|(wi, d)| wi * (d * scale).exp())
            .collect();
        maintainer
            .update(UpdateAction::WeightUpdate(w.clone()))
            .expect("update");

        if step % 8 == 0 {
            let exact = leverage_scores_exact(
                &ConstraintMatrix::new(a.clone()).unwrap(),
                &WeightVector::new(w.clone()).unwrap(),
            )
            .unwrap();
            let drift: f64 = norm2(
                &maintainer
                    .query()
                    .iter()
                    .zip(&exact)
                    .map(|(est, ex)| est - ex)
                    .collect::<Vec<_>>(),
            );
            println!("{step:>4}  {drift:.3e}   {}", maintainer.restart_count());
        }
    }
}
