//! Insider quantile hedging.
//!
//! An insider trades in a complete Black-Scholes market (zero interest rate)
//! while knowing, from time zero, a random variable `G` that depends on the
//! future of the Brownian driver. This crate computes the cheapest strategy
//! that succeeds with a prescribed conditional probability, and the most
//! likely successful strategy under a capital budget, for two kinds of
//! signal: the value of `W_{T+δ}` and the indicator `1{W_{T+δ} ∈ [a, b]}`.
//!
//! The Monte Carlo path lives in [`model`], [`signal`], [`measure`] and
//! [`solver`]. [`tree`] is a finite binomial market in which every measure
//! and optimality statement can be checked exactly, and [`report`] drives
//! table runs and the command line front end.

pub mod error;
pub mod measure;
pub mod model;
pub mod report;
pub mod rng;
pub mod signal;
pub mod solver;
pub mod tree;

pub use error::{Error, Result};
pub use measure::{build_batch, ConditionalBatch, ConditionalSample};
pub use model::{bs_call_price, std_normal_cdf, ModelParams};
pub use signal::{ConditioningMode, Interval, SignalSpec};
pub use solver::{make_hedge_plan, EmpiricalLaw, HedgePlan, Target};
