//! Insider who knows `S_{T+δ} = 110`: capital needed for a 95% success probability.

use insider_hedge::{build_batch, make_hedge_plan, ConditioningMode, ModelParams, SignalSpec, Target};

fn main() -> insider_hedge::Result<()> {
    let p = ModelParams::baseline();
    let signal = SignalSpec::point_at_price(110.0, &p)?;
    for mode in [ConditioningMode::BridgeExact, ConditioningMode::PaperShift] {
        let batch = build_batch(signal, mode, 1_000_000, &p, 11)?;
        println!("{mode}\n{}", make_hedge_plan(&batch, Target::Epsilon(0.05))?);
    }

    // The dual problem: best success probability for a quarter of the hedge cost.
    let batch = build_batch(signal, ConditioningMode::BridgeExact, 1_000_000, &p, 11)?;
    println!("{}", make_hedge_plan(&batch, Target::Alpha(0.25))?);
    Ok(())
}
