//! Black-Scholes primitives with zero interest rate.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{par_draws, Purpose};

/// Market and claim parameters. Times are in years.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: f64,
    pub sigma: f64,
    pub s0: f64,
    pub strike: f64,
    /// Hedge horizon `T`.
    pub t_expiry: f64,
    /// Insider lead time `δ` past the horizon.
    pub delta: f64,
}

impl ModelParams {
    pub fn new(mu: f64, sigma: f64, s0: f64, strike: f64, t_expiry: f64, delta: f64) -> Result<Self> {
        let p = ModelParams {
            mu,
            sigma,
            s0,
            strike,
            t_expiry,
            delta,
        };
        p.validate()?;
        Ok(p)
    }

    /// μ = 0.08, σ = 0.25, S0 = 100, K = 110, T = 0.25, δ = 0.02.
    pub fn baseline() -> Self {
        ModelParams {
            mu: 0.08,
            sigma: 0.25,
            s0: 100.0,
            strike: 110.0,
            t_expiry: 0.25,
            delta: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("sigma", self.sigma)?;
        positive("s0", self.s0)?;
        positive("t_expiry", self.t_expiry)?;
        positive("delta", self.delta)?;
        if !(self.strike.is_finite() && self.strike >= 0.0) {
            return Err(Error::param("strike", format!("must be finite and >= 0, got {}", self.strike)));
        }
        if !self.theta().is_finite() {
            return Err(Error::param("mu", "market price of risk mu/sigma is not finite"));
        }
        Ok(())
    }

    /// Market price of risk μ/σ.
    pub fn theta(&self) -> f64 {
        self.mu / self.sigma
    }

    /// `T + δ`, the time at which the signal is revealed.
    pub fn signal_time(&self) -> f64 {
        self.t_expiry + self.delta
    }
}

/// Brownian values at the hedge horizon and at the signal time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrownianPair {
    pub w_expiry: f64,
    pub w_signal: f64,
}

/// Standard normal distribution function, accurate to about 1e-16 absolute.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `Φ(b) − Φ(a)` for `a ≤ b`, evaluated on whichever tail keeps precision.
pub fn normal_mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        std_normal_cdf(-a) - std_normal_cdf(-b)
    } else {
        std_normal_cdf(b) - std_normal_cdf(a)
    }
}

/// `S_t = S0 exp(σ w + (μ − σ²/2) t)`.
pub fn price_from_brownian(w: f64, t: f64, p: &ModelParams) -> f64 {
    p.s0 * (p.sigma * w + (p.mu - 0.5 * p.sigma * p.sigma) * t).exp()
}

pub fn brownian_from_price(s: f64, t: f64, p: &ModelParams) -> f64 {
    ((s / p.s0).ln() - (p.mu - 0.5 * p.sigma * p.sigma) * t) / p.sigma
}

/// Girsanov factor `exp(−θ w − θ² t / 2)` at an arbitrary time.
pub fn girsanov_density(w: f64, t: f64, theta: f64) -> f64 {
    (-theta * w - 0.5 * theta * theta * t).exp()
}

/// `Z_T = dQ_F/dP` on `F_T`.
pub fn rn_density(w_expiry: f64, p: &ModelParams) -> f64 {
    girsanov_density(w_expiry, p.t_expiry, p.theta())
}

/// Zero-rate Black-Scholes call value. A vanishing `σ√T` gives intrinsic value.
pub fn bs_call(s0: f64, strike: f64, sigma: f64, t: f64) -> f64 {
    if strike <= 0.0 {
        return s0;
    }
    let vol = sigma * t.sqrt();
    if vol <= 0.0 {
        return (s0 - strike).max(0.0);
    }
    let d1 = ((s0 / strike).ln() + 0.5 * vol * vol) / vol;
    let d2 = d1 - vol;
    s0 * std_normal_cdf(d1) - strike * std_normal_cdf(d2)
}

/// Perfect-hedge cost of `(S_T − K)^+`, identical for the insider and the regular trader.
pub fn bs_call_price(p: &ModelParams) -> f64 {
    bs_call(p.s0, p.strike, p.sigma, p.t_expiry)
}

/// `n` independent draws of `(W_T, W_{T+δ})` under P.
pub fn sample_brownian_pairs(n: usize, p: &ModelParams, seed: u64) -> Vec<BrownianPair> {
    let sd_t = p.t_expiry.sqrt();
    let sd_d = p.delta.sqrt();
    par_draws(n, seed, Purpose::Pairs, |rng| {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        let w_expiry = sd_t * a;
        BrownianPair {
            w_expiry,
            w_signal: w_expiry + sd_d * b,
        }
    })
}
