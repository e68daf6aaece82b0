//! Per-draw payoff and Radon-Nikodym densities under the insider's measures.
//!
//! For a draw of `W_T` under P conditioned on the signal:
//!
//! * `dQ_G/dP = Z_T / p_T^G` (the insider's martingale measure),
//! * `D = dQ*/dP = H · (dQ_G/dP) / E_{Q_G}[H]` (the payoff-tilted measure).
//!
//! `E_{Q_G}[H]` equals the ordinary risk-neutral call price, so the closed form
//! is used as normaliser.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{bs_call_price, price_from_brownian, rn_density, ModelParams};
use crate::signal::{sample_indicator_conditional, sample_point_conditional, ConditioningMode, Interval, SignalSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSample {
    pub w_expiry: f64,
    pub s_expiry: f64,
    /// Claim payoff `H`.
    pub h: f64,
    /// `Z_T^F`.
    pub z_f: f64,
    /// `p_T^G`.
    pub p_g: f64,
    /// `dQ_G/dP` restricted to `G_T`.
    pub qg_density: f64,
    /// `D = dQ*/dP` restricted to `G_T`.
    pub d_star: f64,
}

impl ConditionalSample {
    /// Assembles all densities for one draw of `W_T` under the given signal.
    pub fn new(w_expiry: f64, signal: &SignalSpec, e_qg_h: f64, p: &ModelParams) -> Result<Self> {
        let s_expiry = price_from_brownian(w_expiry, p.t_expiry, p);
        let h = payoff_call(s_expiry, p.strike);
        let z_f = rn_density(w_expiry, p);
        let p_g = signal.density(w_expiry, p.t_expiry, p)?;
        let qg_density = z_f / p_g;
        Ok(ConditionalSample {
            w_expiry,
            s_expiry,
            h,
            z_f,
            p_g,
            qg_density,
            d_star: h * qg_density / e_qg_h,
        })
    }
}

/// A Monte Carlo sample of the P-law given one realization of `G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalBatch {
    pub signal: SignalSpec,
    pub mode: ConditioningMode,
    pub samples: Vec<ConditionalSample>,
    /// `E_{Q_G}[H]`, the closed-form call price.
    pub e_qg_h: f64,
    pub seed: u64,
}

impl ConditionalBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn d_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.d_star).collect()
    }
}

pub fn payoff_call(s_expiry: f64, strike: f64) -> f64 {
    (s_expiry - strike).max(0.0)
}

/// Closed form of `dQ_G/dP` for the point signal `W_{T+δ} = g_w`.
pub fn qg_density_point(w_expiry: f64, g_w: f64, p: &ModelParams) -> f64 {
    let (t, d, th) = (p.t_expiry, p.delta, p.theta());
    let inc = g_w - w_expiry;
    (d / (t + d)).sqrt() * (-th * w_expiry - 0.5 * th * th * t + inc * inc / (2.0 * d) - g_w * g_w / (2.0 * (t + d))).exp()
}

/// `dQ_G/dP` for the interval indicator with outcome `observed`.
pub fn qg_density_indicator(w_expiry: f64, interval: &Interval, observed: bool, p: &ModelParams) -> f64 {
    let hit = interval.hit_probability(w_expiry, p.t_expiry, p);
    let prior = interval.hit_probability(0.0, 0.0, p);
    let p_g = if observed {
        hit / prior
    } else {
        (1.0 - hit) / (1.0 - prior)
    };
    rn_density(w_expiry, p) / p_g
}

/// Draws `n` samples under P given `signal` and fills in every density.
///
/// `mode` selects the point-signal sampler and is recorded but otherwise
/// ignored for the indicator, which is always sampled by rejection.
pub fn build_batch(signal: SignalSpec, mode: ConditioningMode, n: usize, p: &ModelParams, seed: u64) -> Result<ConditionalBatch> {
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    p.validate()?;
    let e_qg_h = bs_call_price(p);
    let draws: Vec<f64> = match signal {
        SignalSpec::Point { g_w } => sample_point_conditional(g_w, n, mode, p, seed),
        SignalSpec::Indicator { interval, observed } => sample_indicator_conditional(&interval, observed, n, p, seed)?
            .into_iter()
            .map(|b| b.w_expiry)
            .collect(),
    };
    let samples = draws
        .par_iter()
        .map(|&w| ConditionalSample::new(w, &signal, e_qg_h, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConditionalBatch {
        signal,
        mode,
        samples,
        e_qg_h,
        seed,
    })
}
