//! Replicating the knockout claim `H 1{D <= k}` on a three-period tree.

use insider_hedge::tree::{
    build_atom_table, exact_quantile_hedge, node_label, replicate_knockout, Scalar, TreeMarket,
};
use insider_hedge::Target;
use num_rational::BigRational;

fn main() -> insider_hedge::Result<()> {
    let r = BigRational::ratio;
    // The signal is the parity of the number of up moves after four periods.
    let m = TreeMarket::with_call(4, 3, r(3, 2), r(2, 3), r(11, 20), r(1, 1), r(1, 1), |ups| (ups % 2) as u32)?;
    let table = build_atom_table(&m)?;
    for &g in &table.signal_values {
        let hedge = exact_quantile_hedge(&table, g, Target::Epsilon(r(1, 5)))?;
        let strategy = replicate_knockout(&table, g, &hedge.k)?;
        strategy.check(&m)?;
        println!(
            "G={g}: k={} alpha={} success={} V_0={}",
            hedge.k,
            hedge.alpha,
            hedge.success_prob,
            strategy.initial_capital()
        );
        for (t, row) in strategy.holdings.iter().enumerate() {
            for (node, xi) in row.iter().enumerate() {
                println!("  t={t} {:<4} xi={xi}", node_label(node, t));
            }
        }
    }
    Ok(())
}
