//! Insider who knows whether `S_{T+δ}` ends in `[109, 111]`, for both outcomes.

use insider_hedge::{build_batch, make_hedge_plan, ConditioningMode, Interval, ModelParams, SignalSpec, Target};

fn main() -> insider_hedge::Result<()> {
    let p = ModelParams::baseline();
    let interval = Interval::from_prices(109.0, 111.0, &p)?;
    for observed in [true, false] {
        let signal = SignalSpec::indicator(interval, observed, &p)?;
        println!("P(G = {}) = {:.4}", observed as u8, signal.prior_probability(&p));
        let batch = build_batch(signal, ConditioningMode::BridgeExact, 500_000, &p, 5)?;
        for eps in [0.01, 0.1] {
            let plan = make_hedge_plan(&batch, Target::Epsilon(eps))?;
            println!("  eps {eps:<4} alpha {:.4} (se {:.4})", plan.alpha, plan.alpha_stderr);
        }
    }
    Ok(())
}
