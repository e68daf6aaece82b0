//! Neyman-Pearson thresholds for the two quantile-hedging problems.
//!
//! Both problems reduce to thresholding `D = dQ*/dP` at a level `k`:
//!
//! * minimal capital for success probability `1 − ε`: pick `k` with
//!   `P(D ≤ k | G) = 1 − ε`, then the capital fraction is `α = Q*(D ≤ k | G)`;
//! * maximal success probability for capital fraction `α`: pick `k` with
//!   `Q*(D ≤ k | G) = α`, then the success probability is `P(D ≤ k | G)`.
//!
//! The strategy replicates the knockout claim `H·1{D ≤ k}`. Because
//! `dQ*/dP = 1` on `G_0`, `Q*(D ≤ k | G) = E_P[D·1{D ≤ k} | G]`, which is what
//! the empirical law below estimates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::ConditionalBatch;

/// Problem selector: a shortfall bound `ε` or a budget fraction `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target<T = f64> {
    Epsilon(T),
    Alpha(T),
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdForBudget {
    pub k: f64,
    /// Budget actually used, `(1/n) Σ_{d ≤ k} d`.
    pub attained: f64,
    /// A tie group straddles the budget and had to be dropped whole.
    pub atom_straddles: bool,
}

/// Sorted snapshot of the sampled `D` values with prefix sums.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    sorted: Vec<f64>,
    prefix: Vec<f64>,
    prefix_sq: Vec<f64>,
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::TargetOutOfRange(x))
    }
}

impl EmpiricalLaw {
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidSignal(format!("density value {bad} is not a finite nonnegative number")));
        }
        values.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(values.len() + 1);
        let mut prefix_sq = Vec::with_capacity(values.len() + 1);
        let (mut s, mut q) = (0.0, 0.0);
        prefix.push(0.0);
        prefix_sq.push(0.0);
        for &v in &values {
            s += v;
            q += v * v;
            prefix.push(s);
            prefix_sq.push(q);
        }
        Ok(EmpiricalLaw {
            sorted: values,
            prefix,
            prefix_sq,
        })
    }

    pub fn from_batch(batch: &ConditionalBatch) -> Result<Self> {
        EmpiricalLaw::from_values(batch.d_values())
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn max(&self) -> f64 {
        *self.sorted.last().expect("nonempty by construction")
    }

    pub fn mean(&self) -> Estimate {
        self.partial_moment(self.len())
    }

    /// Number of samples with `d ≤ k`.
    fn count_le(&self, k: f64) -> usize {
        self.sorted.partition_point(|&d| d <= k)
    }

    fn partial_moment(&self, m: usize) -> Estimate {
        let n = self.len() as f64;
        let mean = self.prefix[m] / n;
        let var = if self.len() > 1 {
            ((self.prefix_sq[m] - self.prefix[m] * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate {
            value: mean,
            stderr: (var / n).sqrt(),
        }
    }

    /// Sample rank `⌈(1 − ε) n⌉` of the sorted values; zero when that rank is 0.
    pub fn solve_k_for_epsilon(&self, epsilon: f64) -> Result<f64> {
        check_unit(epsilon)?;
        let rank = required_rank(epsilon, self.len());
        Ok(if rank == 0 { 0.0 } else { self.sorted[rank - 1] })
    }

    /// `(1/n) Σ d·1{d ≤ k}`, clamped to `[0, 1]`.
    pub fn alpha_from_k(&self, k: f64) -> Estimate {
        let mut e = self.partial_moment(self.count_le(k));
        e.value = e.value.clamp(0.0, 1.0);
        e
    }

    /// `(1/n) Σ 1{d ≤ k}`.
    pub fn success_prob_from_k(&self, k: f64) -> Estimate {
        let n = self.len() as f64;
        let p = self.count_le(k) as f64 / n;
        let var = if self.len() > 1 { p * (1.0 - p) * n / (n - 1.0) } else { 0.0 };
        Estimate {
            value: p,
            stderr: (var / n).sqrt(),
        }
    }

    /// Largest order statistic whose prefix budget stays within `alpha`, ties entering together.
    pub fn solve_k_for_alpha(&self, alpha: f64) -> Result<ThresholdForBudget> {
        check_unit(alpha)?;
        let n = self.len();
        let nf = n as f64;
        let mut m = self.prefix.partition_point(|&s| s / nf <= alpha) - 1;
        let mut atom_straddles = false;
        if m > 0 && m < n && self.sorted[m] == self.sorted[m - 1] {
            let v = self.sorted[m];
            m = self.sorted.partition_point(|&d| d < v);
            atom_straddles = true;
        }
        Ok(ThresholdForBudget {
            k: if m == 0 { 0.0 } else { self.sorted[m - 1] },
            attained: self.prefix[m] / nf,
            atom_straddles,
        })
    }

    pub fn hedge_plan(&self, e_qg_h: f64, target: Target) -> Result<HedgePlan> {
        let (k, atom_straddles) = match target {
            Target::Epsilon(eps) => {
                let k = self.solve_k_for_epsilon(eps)?;
                let rank = required_rank(eps, self.len());
                (k, self.count_le(k) > rank)
            }
            Target::Alpha(a) => {
                let t = self.solve_k_for_alpha(a)?;
                (t.k, t.atom_straddles)
            }
        };
        let alpha = self.alpha_from_k(k);
        let success = self.success_prob_from_k(k);
        Ok(HedgePlan {
            target,
            k,
            alpha: alpha.value,
            alpha_stderr: alpha.stderr,
            success_prob: success.value,
            success_stderr: success.stderr,
            initial_capital: alpha.value * e_qg_h,
            e_qg_h,
            n_paths: self.len(),
            atom_straddles,
        })
    }
}

/// `⌈(1 − ε) n⌉`, ignoring floating noise just above an integer.
fn required_rank(epsilon: f64, n: usize) -> usize {
    let x = (1.0 - epsilon) * n as f64;
    let r = x.round();
    let r = if (x - r).abs() <= 1e-9 * x.max(1.0) { r } else { x.ceil() };
    (r as usize).min(n)
}

/// Solution of one quantile-hedging problem on a conditional sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgePlan {
    pub target: Target,
    /// Threshold on `D`.
    pub k: f64,
    /// Capital as a fraction of the perfect-hedge cost.
    pub alpha: f64,
    pub alpha_stderr: f64,
    pub success_prob: f64,
    pub success_stderr: f64,
    /// `alpha · E_{Q_G}[H]`.
    pub initial_capital: f64,
    pub e_qg_h: f64,
    pub n_paths: usize,
    /// The sample law has an atom at the threshold, so the target level is
    /// not hit exactly; the attained levels are the ones reported above.
    pub atom_straddles: bool,
}

impl HedgePlan {
    pub fn epsilon_target(&self) -> Option<f64> {
        match self.target {
            Target::Epsilon(e) => Some(e),
            Target::Alpha(_) => None,
        }
    }

    pub fn alpha_target(&self) -> Option<f64> {
        match self.target {
            Target::Alpha(a) => Some(a),
            Target::Epsilon(_) => None,
        }
    }

    /// The claim that the strategy replicates.
    pub fn knockout_payoff(&self) -> String {
        format!("H*1{{D <= {}}}", self.k)
    }

    /// `alpha` is within two standard errors of zero.
    pub fn below_se_floor(&self) -> bool {
        self.alpha <= 2.0 * self.alpha_stderr
    }
}

impl fmt::Display for HedgePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.target {
            Target::Epsilon(e) => writeln!(f, "target          epsilon = {e}")?,
            Target::Alpha(a) => writeln!(f, "target          alpha = {a}")?,
        }
        writeln!(f, "threshold k     {}", self.k)?;
        writeln!(f, "alpha           {:.6} (se {:.6})", self.alpha, self.alpha_stderr)?;
        writeln!(f, "success prob    {:.6} (se {:.6})", self.success_prob, self.success_stderr)?;
        writeln!(f, "initial capital {:.6} of {:.6}", self.initial_capital, self.e_qg_h)?;
        writeln!(f, "replicates      {}", self.knockout_payoff())?;
        if self.atom_straddles {
            writeln!(f, "warning         atom at the threshold; target not attained exactly")?;
        }
        Ok(())
    }
}

pub fn solve_k_for_epsilon(batch: &ConditionalBatch, epsilon: f64) -> Result<f64> {
    EmpiricalLaw::from_batch(batch)?.solve_k_for_epsilon(epsilon)
}

pub fn alpha_from_k(batch: &ConditionalBatch, k: f64) -> Result<Estimate> {
    Ok(EmpiricalLaw::from_batch(batch)?.alpha_from_k(k))
}

pub fn success_prob_from_k(batch: &ConditionalBatch, k: f64) -> Result<Estimate> {
    Ok(EmpiricalLaw::from_batch(batch)?.success_prob_from_k(k))
}

pub fn solve_k_for_alpha(batch: &ConditionalBatch, alpha: f64) -> Result<ThresholdForBudget> {
    EmpiricalLaw::from_batch(batch)?.solve_k_for_alpha(alpha)
}

pub fn make_hedge_plan(batch: &ConditionalBatch, target: Target) -> Result<HedgePlan> {
    EmpiricalLaw::from_batch(batch)?.hedge_plan(batch.e_qg_h, target)
}
