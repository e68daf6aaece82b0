//! The insider's signal `G` and the conditional-density process `p_t^g`.
//!
//! Two signals are supported: the value of `W_{T+δ}` itself, and the
//! indicator of `W_{T+δ}` lying in an interval. Everything here lives in
//! Brownian units; callers holding stock-price levels convert through
//! [`brownian_from_price`] at the signal time.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{brownian_from_price, normal_mass, BrownianPair, ModelParams};
use crate::rng::{par_accept, par_draws, Purpose};

/// Smallest acceptance rate tolerated by the rejection sampler.
pub const DEFAULT_ACCEPT_FLOOR: f64 = 1e-4;

/// Closed interval `[lo, hi]` in Brownian units. Endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::InvalidSignal(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    /// Converts a price band for `S_{T+δ}` into Brownian units.
    pub fn from_prices(lo: f64, hi: f64, p: &ModelParams) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidSignal(format!("price band [{lo}, {hi}] must satisfy 0 < lo < hi")));
        }
        let t = p.signal_time();
        Interval::new(brownian_from_price(lo, t, p), brownian_from_price(hi, t, p))
    }

    pub fn contains(&self, w: f64) -> bool {
        self.lo <= w && w <= self.hi
    }

    /// `P(W_{T+δ} ∈ [lo, hi] | W_t = w_t)`.
    pub fn hit_probability(&self, w_t: f64, t: f64, p: &ModelParams) -> f64 {
        let sd = (p.signal_time() - t).sqrt();
        normal_mass((self.lo - w_t) / sd, (self.hi - w_t) / sd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalSpec {
    /// `G = W_{T+δ}`, realized at `g_w`.
    Point { g_w: f64 },
    /// `G = 1{W_{T+δ} ∈ interval}`, realized at `observed`.
    Indicator { interval: Interval, observed: bool },
}

impl SignalSpec {
    pub fn point(g_w: f64) -> Result<Self> {
        if !g_w.is_finite() {
            return Err(Error::InvalidSignal(format!("point value {g_w} is not finite")));
        }
        Ok(SignalSpec::Point { g_w })
    }

    /// Point signal given as a price level of `S_{T+δ}`.
    pub fn point_at_price(level: f64, p: &ModelParams) -> Result<Self> {
        if !(level > 0.0 && level.is_finite()) {
            return Err(Error::InvalidSignal(format!("price level {level} must be positive")));
        }
        SignalSpec::point(brownian_from_price(level, p.signal_time(), p))
    }

    /// Indicator signal; rejects outcomes of zero prior probability.
    pub fn indicator(interval: Interval, observed: bool, p: &ModelParams) -> Result<Self> {
        let spec = SignalSpec::Indicator { interval, observed };
        let prob = spec.prior_probability(p);
        if prob <= 0.0 {
            return Err(Error::InvalidSignal(format!(
                "P(G = {}) = {prob} for interval [{}, {}]",
                observed as u8, interval.lo, interval.hi
            )));
        }
        Ok(spec)
    }

    /// `P(G = observed)`; zero for the point signal, which has a density instead.
    pub fn prior_probability(&self, p: &ModelParams) -> f64 {
        match self {
            SignalSpec::Point { .. } => 0.0,
            SignalSpec::Indicator { interval, observed } => {
                let hit = interval.hit_probability(0.0, 0.0, p);
                if *observed {
                    hit
                } else {
                    1.0 - hit
                }
            }
        }
    }

    /// `p_t^G` along a path that sits at `w_t` at time `t`.
    pub fn density(&self, w_t: f64, t: f64, p: &ModelParams) -> Result<f64> {
        match self {
            SignalSpec::Point { g_w } => density_point(*g_w, w_t, t, p),
            SignalSpec::Indicator { interval, observed } => density_indicator(*observed, w_t, t, interval, p),
        }
    }
}

impl fmt::Display for SignalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalSpec::Point { g_w } => write!(f, "W={g_w}"),
            SignalSpec::Indicator { interval, observed } => {
                write!(f, "1{{W in [{}, {}]}}={}", interval.lo, interval.hi, *observed as u8)
            }
        }
    }
}

/// How draws of `W_T` given a point signal are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    /// Exact Brownian-bridge law `N(gT/(T+δ), Tδ/(T+δ))`.
    BridgeExact,
    /// `W_T = g − N(0, δ)`, a shortcut that ignores the bridge mean and variance.
    PaperShift,
}

impl ConditioningMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConditioningMode::BridgeExact => "bridge_exact",
            ConditioningMode::PaperShift => "paper_shift",
        }
    }
}

impl fmt::Display for ConditioningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditioningMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bridge_exact" | "bridge" => Ok(ConditioningMode::BridgeExact),
            "paper_shift" | "shift" => Ok(ConditioningMode::PaperShift),
            other => Err(Error::Parse {
                context: "mode".into(),
                message: format!("unknown conditioning mode `{other}`"),
            }),
        }
    }
}

fn check_time(t: f64, p: &ModelParams) -> Result<()> {
    let limit = p.signal_time();
    if !(0.0..limit).contains(&t) {
        return Err(Error::TimeOutOfRange { t, limit });
    }
    Ok(())
}

/// `p_t^z = √((T+δ)/(T+δ−t)) exp(−(z − w_t)²/(2(T+δ−t)) + z²/(2(T+δ)))`.
pub fn density_point(z: f64, w_t: f64, t: f64, p: &ModelParams) -> Result<f64> {
    check_time(t, p)?;
    let total = p.signal_time();
    let rest = total - t;
    let dz = z - w_t;
    Ok((total / rest).sqrt() * (-dz * dz / (2.0 * rest) + z * z / (2.0 * total)).exp())
}

/// `p_t^1` or `p_t^0` for the interval indicator.
pub fn density_indicator(observed: bool, w_t: f64, t: f64, interval: &Interval, p: &ModelParams) -> Result<f64> {
    check_time(t, p)?;
    let now = interval.hit_probability(w_t, t, p);
    let prior = interval.hit_probability(0.0, 0.0, p);
    Ok(if observed {
        now / prior
    } else {
        (1.0 - now) / (1.0 - prior)
    })
}

/// Draws of `W_T` under P given `W_{T+δ} = g_w`.
pub fn sample_point_conditional(g_w: f64, n: usize, mode: ConditioningMode, p: &ModelParams, seed: u64) -> Vec<f64> {
    let (t, d) = (p.t_expiry, p.delta);
    match mode {
        ConditioningMode::BridgeExact => {
            let mean = g_w * t / (t + d);
            let sd = (t * d / (t + d)).sqrt();
            par_draws(n, seed, Purpose::PointBridge, |rng| {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            })
        }
        ConditioningMode::PaperShift => {
            let sd = d.sqrt();
            par_draws(n, seed, Purpose::PointShift, |rng| {
                let z: f64 = StandardNormal.sample(rng);
                g_w - sd * z
            })
        }
    }
}

/// Pairs `(W_T, W_{T+δ})` under P given the indicator outcome, by rejection.
pub fn sample_indicator_conditional(
    interval: &Interval,
    observed: bool,
    n: usize,
    p: &ModelParams,
    seed: u64,
) -> Result<Vec<BrownianPair>> {
    sample_indicator_conditional_with_floor(interval, observed, n, p, seed, DEFAULT_ACCEPT_FLOOR)
}

pub fn sample_indicator_conditional_with_floor(
    interval: &Interval,
    observed: bool,
    n: usize,
    p: &ModelParams,
    seed: u64,
    floor: f64,
) -> Result<Vec<BrownianPair>> {
    let sd_t = p.t_expiry.sqrt();
    let sd_d = p.delta.sqrt();
    par_accept(n, seed, floor, |rng| {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        let w_expiry = sd_t * a;
        let w_signal = w_expiry + sd_d * b;
        (interval.contains(w_signal) == observed).then_some(BrownianPair { w_expiry, w_signal })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_brownian_pairs;
    use crate::model::tests::mean_se;
    use approx::assert_abs_diff_eq;

    fn band(lo: f64, hi: f64) -> Interval {
        Interval::from_prices(lo, hi, &ModelParams::baseline()).unwrap()
    }

    #[test]
    fn point_density_examples() {
        let p = ModelParams::baseline();
        for z in [-1.0, 0.0, 0.7] {
            assert_eq!(density_point(z, 0.0, 0.0, &p).unwrap(), 1.0);
        }
        assert_abs_diff_eq!(density_point(0.0, 0.0, 0.25, &p).unwrap(), 3.674235, epsilon = 1e-5);
        assert_abs_diff_eq!(density_point(0.0, 0.0, 0.25, &p).unwrap(), 13.5f64.sqrt(), epsilon = 1e-12);
        assert!(density_point(0.0, 0.0, 0.27, &p).is_err());
        assert!(density_point(0.0, 0.0, -0.1, &p).is_err());
    }

    #[test]
    fn point_density_is_unit_mean_martingale() {
        let p = ModelParams::baseline();
        for (t, seed) in [(0.1, 1), (0.05, 2), (0.15, 3), (0.25, 4)] {
            let w: Vec<f64> = sample_brownian_pairs(1_000_000, &ModelParams { t_expiry: t, ..p }, seed)
                .iter()
                .map(|b| density_point(0.3, b.w_expiry, t, &p).unwrap())
                .collect();
            let (m, se) = mean_se(&w);
            assert!((m - 1.0).abs() < 4.0 * se, "t={t}: {m} ± {se}");
        }
    }

    #[test]
    fn indicator_density_examples() {
        let p = ModelParams::baseline();
        let iv = band(109.0, 111.0);
        assert_eq!(density_indicator(true, 0.0, 0.0, &iv, &p).unwrap(), 1.0);
        assert_eq!(density_indicator(false, 0.0, 0.0, &iv, &p).unwrap(), 1.0);

        let s1 = SignalSpec::indicator(iv, true, &p).unwrap();
        let s0 = SignalSpec::indicator(iv, false, &p).unwrap();
        for (t, w) in [(0.1, 0.2), (0.2, -0.4), (0.25, 1.3)] {
            let total = s1.prior_probability(&p) * s1.density(w, t, &p).unwrap()
                + s0.prior_probability(&p) * s0.density(w, t, &p).unwrap();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }

        // Φ-ratio at T + δ − t = δ, evaluated with the series oracle for Φ.
        use crate::model::tests::phi_series;
        let (a, b) = (iv.lo, iv.hi);
        let num = phi_series(b / 0.02f64.sqrt()) - phi_series(a / 0.02f64.sqrt());
        let den = phi_series(b / 0.27f64.sqrt()) - phi_series(a / 0.27f64.sqrt());
        let v = density_indicator(true, 0.0, 0.25, &iv, &p).unwrap();
        assert!(v > 0.0);
        assert_abs_diff_eq!(v, num / den, epsilon = 1e-10);
    }

    #[test]
    fn indicator_density_is_unit_mean_martingale() {
        let p = ModelParams::baseline();
        let iv = band(109.0, 111.0);
        for (t, seed) in [(0.05, 5), (0.15, 6), (0.25, 7)] {
            let d: Vec<f64> = sample_brownian_pairs(1_000_000, &ModelParams { t_expiry: t, ..p }, seed)
                .iter()
                .map(|b| density_indicator(true, b.w_expiry, t, &iv, &p).unwrap())
                .collect();
            let (m, se) = mean_se(&d);
            assert!((m - 1.0).abs() < 4.0 * se, "t={t}: {m} ± {se}");
        }
    }

    #[test]
    fn rejects_empty_and_impossible_signals() {
        let p = ModelParams::baseline();
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::from_prices(111.0, 109.0, &p).is_err());
        let everything = Interval::new(f64::NEG_INFINITY, f64::INFINITY).unwrap();
        assert!(SignalSpec::indicator(everything, true, &p).is_ok());
        assert!(SignalSpec::indicator(everything, false, &p).is_err());
        assert!(SignalSpec::point(f64::NAN).is_err());
    }

    #[test]
    fn bridge_moments() {
        let p = ModelParams::baseline();
        let g = 0.328591;
        let n = 1_000_000;
        let w = sample_point_conditional(g, n, ConditioningMode::BridgeExact, &p, 1);
        let (m, _) = mean_se(&w);
        let var_exact = 0.25 * 0.02 / 0.27;
        assert!((m - g * 0.25 / 0.27).abs() < 4.0 * (var_exact / n as f64).sqrt(), "{m}");
        assert_abs_diff_eq!(g * 0.25 / 0.27, 0.304251, epsilon = 1e-6);
        let var = w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - var_exact).abs() < 4.0 * var_exact * (2.0 / n as f64).sqrt(), "{var}");
    }

    #[test]
    fn shift_moments() {
        let p = ModelParams::baseline();
        let g = 0.328591;
        let n = 1_000_000;
        let w = sample_point_conditional(g, n, ConditioningMode::PaperShift, &p, 1);
        let (m, _) = mean_se(&w);
        assert!((m - g).abs() < 4.0 * (0.02 / n as f64).sqrt(), "{m}");
        let var = w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 0.02).abs() < 4.0 * 0.02 * (2.0 / n as f64).sqrt(), "{var}");
    }

    #[test]
    fn vanishing_lead_time_pins_both_modes() {
        let p = ModelParams {
            delta: 1e-14,
            ..ModelParams::baseline()
        };
        for mode in [ConditioningMode::BridgeExact, ConditioningMode::PaperShift] {
            for w in sample_point_conditional(0.4, 1000, mode, &p, 2) {
                assert_abs_diff_eq!(w, 0.4, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn sure_event_gives_unconditional_law() {
        let p = ModelParams::baseline();
        let iv = Interval::new(-1e6, 1e6).unwrap();
        let pairs = sample_indicator_conditional(&iv, true, 200_000, &p, 3).unwrap();
        let w: Vec<f64> = pairs.iter().map(|b| b.w_signal).collect();
        let (m, _) = mean_se(&w);
        let var = w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
        assert!((var - 0.27).abs() < 4.0 * 0.27 * (2.0 / w.len() as f64).sqrt(), "{var}");
    }

    #[test]
    fn rejection_support_and_acceptance_rate() {
        let p = ModelParams::baseline();
        let iv = band(109.0, 111.0);
        let n = 50_000;
        let inside = sample_indicator_conditional(&iv, true, n, &p, 4).unwrap();
        assert_eq!(inside.len(), n);
        assert!(inside.iter().all(|b| iv.contains(b.w_signal)));
        let outside = sample_indicator_conditional(&iv, false, n, &p, 4).unwrap();
        assert!(outside.iter().all(|b| !iv.contains(b.w_signal)));

        // Acceptance rate on the unconditional stream against the closed form.
        let m = 2_000_000;
        let hits = sample_brownian_pairs(m, &p, 9).iter().filter(|b| iv.contains(b.w_signal)).count();
        let rate = hits as f64 / m as f64;
        use crate::model::std_normal_cdf;
        let exact = std_normal_cdf(iv.hi / 0.27f64.sqrt()) - std_normal_cdf(iv.lo / 0.27f64.sqrt());
        let se = (exact * (1.0 - exact) / m as f64).sqrt();
        assert!((rate - exact).abs() < 4.0 * se, "{rate} vs {exact}");
    }

    #[test]
    fn mode_round_trips_through_text() {
        for m in [ConditioningMode::BridgeExact, ConditioningMode::PaperShift] {
            assert_eq!(m.to_string().parse::<ConditioningMode>().unwrap(), m);
        }
        assert!("nope".parse::<ConditioningMode>().is_err());
    }
}
