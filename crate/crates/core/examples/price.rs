//! Closed-form call price next to a Monte Carlo estimate under the physical measure.

use insider_hedge::model::{price_from_brownian, rn_density, sample_brownian_pairs};
use insider_hedge::{bs_call_price, ModelParams};

fn main() {
    let p = ModelParams::baseline();
    let n = 1_000_000;
    let v: Vec<f64> = sample_brownian_pairs(n, &p, 7)
        .iter()
        .map(|b| (price_from_brownian(b.w_expiry, p.t_expiry, &p) - p.strike).max(0.0) * rn_density(b.w_expiry, &p))
        .collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    println!("closed form   {:.6}", bs_call_price(&p));
    println!("E_P[H Z_T]    {:.6} (se {:.6})", mean, (var / n as f64).sqrt());
}
