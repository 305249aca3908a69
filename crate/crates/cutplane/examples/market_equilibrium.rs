//! Compute equilibria for a linear exchange market and a Fisher market with
//! spending-constraint utilities, and verify the equilibrium conditions
//! independently.
//!
//!     cargo run --release --example market_equilibrium

use cutplane::market::{
    solve_arrow_debreu, solve_fisher, ExchangeMarket, FisherMarket, FisherSegment, MarketOptions,
};

fn main() {
    // Two agents who each own one good and want the other's.
    let market = ExchangeMarket::new(vec![vec![0, 1], vec![1, 0]]).expect("valid market");
    let report = solve_arrow_debreu(&market, 1e-3, 42, &MarketOptions::default())
        .expect("exchange solve failed");
    println!("exchange market:");
    println!("  prices: {:?}", report.prices);
    println!(
        "  residuals: clearing {:.2e}, budget {:.2e}, bang-per-buck {:.2e}",
        report.clearing_residual, report.budget_residual, report.optimality_residual
    );

    // One buyer with budget 2 over two identical goods: prices settle at 1, 1.
    let fisher = FisherMarket::new(
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
    .expect("valid market");
    let report =
        solve_fisher(&fisher, 1e-2, 42, &MarketOptions::default()).expect("fisher solve failed");
    println!("fisher market:");
    println!("  prices: {:?}", report.prices);
    println!("  spending per segment: {:?}", report.allocations[0]);
    println!(
        "  residuals: clearing {:.2e}, budget {:.2e}, optimality {:.2e}",
        report.clearing_residual, report.budget_residual, report.optimality_residual
    );
}
