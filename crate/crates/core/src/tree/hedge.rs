use rayon::prelude::*;

use super::atoms::AtomTable;
use super::market::{node_label, TreeMarket};
use super::scalar::{is_negative, Scalar};
use crate::error::{Error, Result};
use crate::solver::Target;

/// Largest conditional atom count accepted by the subset enumerations.
pub const ENUMERATION_BOUND: usize = 24;

/// Quantile hedge for one signal value, computed from the exact conditional law.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactHedge<S> {
    pub signal: u32,
    pub k: S,
    pub alpha: S,
    pub success_prob: S,
    /// Time-T nodes with `D ≤ k`.
    pub success_set: Vec<usize>,
    /// False when the target falls inside an atom of `D` and the conservative
    /// level was returned instead.
    pub exact: bool,
}

struct Level<S> {
    k: S,
    alpha: S,
    prob: S,
}

fn at_most<S: Scalar>(x: &S, bound: &S) -> bool {
    x <= bound || x.close(bound)
}

fn check_target<S: Scalar>(x: &S) -> Result<()> {
    if is_negative(x) || (x > &S::one() && !x.close(&S::one())) {
        return Err(Error::TargetOutOfRange(x.to_f64()));
    }
    Ok(())
}

/// `(node, P(node | G = g), D)` sorted by `D`.
fn sorted_law<S: Scalar>(table: &AtomTable<S>, g: u32) -> Result<Vec<(usize, S, S)>> {
    let mut law: Vec<_> = table
        .conditional_law(g)?
        .into_iter()
        .map(|(node, prob, d, _)| (node, prob, d))
        .collect();
    law.sort_by(|a, b| a.2.partial_cmp(&b.2).expect("densities are finite"));
    Ok(law)
}

/// Achievable `(k, α, P)` triples: `k = 0`, then every distinct positive value of `D`.
fn levels<S: Scalar>(law: &[(usize, S, S)]) -> Vec<Level<S>> {
    let mut out = vec![Level {
        k: S::zero(),
        alpha: S::zero(),
        prob: S::zero(),
    }];
    for (_, prob, d) in law {
        let last = out.last_mut().unwrap();
        if d.close(&last.k) {
            last.alpha = last.alpha.clone() + prob.clone() * d.clone();
            last.prob = last.prob.clone() + prob.clone();
        } else {
            let next = Level {
                k: d.clone(),
                alpha: last.alpha.clone() + prob.clone() * d.clone(),
                prob: last.prob.clone() + prob.clone(),
            };
            out.push(next);
        }
    }
    out
}

/// Solves either quantile problem on the conditional law of `D` given `G = g`.
///
/// For an `ε` target the smallest level with success probability at least
/// `1 − ε` is returned; for an `α` target the largest level whose cost does
/// not exceed `α`. `exact` records whether the level hits the target.
pub fn exact_quantile_hedge<S: Scalar>(table: &AtomTable<S>, g: u32, target: Target<S>) -> Result<ExactHedge<S>> {
    let law = sorted_law(table, g)?;
    let levels = levels(&law);
    let (level, exact) = match &target {
        Target::Epsilon(eps) => {
            check_target(eps)?;
            let need = S::one() - eps.clone();
            let lv = levels
                .iter()
                .find(|l| l.prob >= need || l.prob.close(&need))
                .unwrap_or_else(|| levels.last().unwrap());
            (lv, lv.prob.close(&need))
        }
        Target::Alpha(alpha) => {
            check_target(alpha)?;
            let lv = levels.iter().rev().find(|l| at_most(&l.alpha, alpha)).unwrap_or(&levels[0]);
            (lv, lv.alpha.close(alpha))
        }
    };
    let mut success_set: Vec<usize> = law
        .iter()
        .filter(|(_, _, d)| at_most(d, &level.k))
        .map(|(node, _, _)| *node)
        .collect();
    success_set.sort_unstable();
    Ok(ExactHedge {
        signal: g,
        k: level.k.clone(),
        alpha: level.alpha.clone(),
        success_prob: level.prob.clone(),
        success_set,
        exact,
    })
}

/// `Q*(A | G = g)` computed through `Q_G` directly, with `A` a set of time-T nodes.
pub fn q_star_conditional<S: Scalar>(table: &AtomTable<S>, g: u32, set: &[usize]) -> Result<S> {
    let gi = table.signal_index(g)?;
    let num = set
        .iter()
        .map(|&n| {
            let a = table.atom(n, gi);
            a.qg_mass() * a.h.clone()
        })
        .fold(S::zero(), |a, b| a + b);
    let qg_g = (0..1usize << table.horizon())
        .map(|n| table.atom(n, gi).qg_mass())
        .fold(S::zero(), |a, b| a + b);
    Ok(num / (table.e_qf_h.clone() * qg_g))
}

fn bounded_law<S: Scalar>(table: &AtomTable<S>, g: u32) -> Result<Vec<(usize, S, S)>> {
    let law = sorted_law(table, g)?;
    if law.len() > ENUMERATION_BOUND {
        return Err(Error::EnumerationBound {
            atoms: law.len(),
            bound: ENUMERATION_BOUND,
        });
    }
    Ok(law)
}

fn subset_sums<S: Scalar>(law: &[(usize, S, S)], mask: u64) -> (S, S) {
    let mut cost = S::zero();
    let mut prob = S::zero();
    for (i, (_, p, d)) in law.iter().enumerate() {
        if mask >> i & 1 == 1 {
            cost = cost + p.clone() * d.clone();
            prob = prob + p.clone();
        }
    }
    (cost, prob)
}

fn pick<S: Scalar>(a: Option<S>, b: Option<S>, better: impl Fn(&S, &S) -> bool) -> Option<S> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if better(&y, &x) { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Largest `P(A | G = g)` over all sets of time-T nodes with `E_P[D 1_A | G = g] ≤ budget`.
pub fn exhaustive_max_success<S: Scalar>(table: &AtomTable<S>, g: u32, budget: &S) -> Result<S> {
    let law = bounded_law(table, g)?;
    let best = (0..1u64 << law.len())
        .into_par_iter()
        .map(|mask| {
            let (cost, prob) = subset_sums(&law, mask);
            at_most(&cost, budget).then_some(prob)
        })
        .reduce(|| None, |a, b| pick(a, b, |y, x| y > x));
    Ok(best.unwrap_or_else(S::zero))
}

/// Smallest `E_P[D 1_A | G = g]` over all sets with `P(A | G = g) ≥ level`.
pub fn exhaustive_min_capital<S: Scalar>(table: &AtomTable<S>, g: u32, level: &S) -> Result<S> {
    let law = bounded_law(table, g)?;
    let best = (0..1u64 << law.len())
        .into_par_iter()
        .map(|mask| {
            let (cost, prob) = subset_sums(&law, mask);
            (prob >= *level || prob.close(level)).then_some(cost)
        })
        .reduce(|| None, |a, b| pick(a, b, |y, x| y < x));
    best.ok_or_else(|| Error::TargetOutOfRange(level.to_f64()))
}

/// True iff no set of nodes within budget `alpha` beats the threshold success set.
///
/// Meaningful for achievable budgets, i.e. values of `α` attained by some `k`.
pub fn exhaustive_optimality_check<S: Scalar>(table: &AtomTable<S>, g: u32, alpha: &S) -> Result<bool> {
    let np = exact_quantile_hedge(table, g, Target::Alpha(alpha.clone()))?;
    let best = exhaustive_max_success(table, g, alpha)?;
    Ok(at_most(&best, &np.success_prob))
}

/// Achievable `(α, P)` levels for signal value `g`, cheapest first.
pub fn achievable_levels<S: Scalar>(table: &AtomTable<S>, g: u32) -> Result<Vec<(S, S)>> {
    Ok(levels(&sorted_law(table, g)?).into_iter().map(|l| (l.alpha, l.prob)).collect())
}

/// Self-financing stock strategy replicating a time-T payoff.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeStrategy<S> {
    /// `V_t` per node, `t = 0..=T`.
    pub values: Vec<Vec<S>>,
    /// Stock holding `ξ_t` per node, `t = 0..T`.
    pub holdings: Vec<Vec<S>>,
}

impl<S: Scalar> TreeStrategy<S> {
    pub fn initial_capital(&self) -> &S {
        &self.values[0][0]
    }

    /// Checks `V_{t+1} − V_t = ξ_t (S_{t+1} − S_t)` on every edge and `V_t ≥ 0`.
    pub fn check(&self, m: &TreeMarket<S>) -> Result<()> {
        for (t, row) in self.values.iter().enumerate() {
            for (node, v) in row.iter().enumerate() {
                if is_negative(v) && !v.close(&S::zero()) {
                    return Err(Error::InvalidTree(format!("negative value {v} at {}", node_label(node, t))));
                }
            }
        }
        for (t, row) in self.holdings.iter().enumerate() {
            for (node, xi) in row.iter().enumerate() {
                for child in [node, node | 1 << t] {
                    let gain = xi.clone() * (m.price(t + 1, child) - m.price(t, node));
                    let change = self.values[t + 1][child].clone() - self.values[t][node].clone();
                    if !gain.close(&change) {
                        return Err(Error::InvalidTree(format!(
                            "not self-financing on edge {} -> {}",
                            node_label(node, t),
                            node_label(child, t + 1)
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Backward induction under the risk-neutral probability.
pub fn replicate_on_tree<S: Scalar>(m: &TreeMarket<S>, target: &[S]) -> Result<TreeStrategy<S>> {
    let horizon = m.hedge_horizon;
    if target.len() != 1 << horizon {
        return Err(Error::InvalidTree(format!(
            "target has {} values, expected {}",
            target.len(),
            1usize << horizon
        )));
    }
    if let Some(i) = target.iter().position(is_negative) {
        return Err(Error::InvalidTree(format!("negative target at {}", node_label(i, horizon))));
    }
    let q = m.risk_neutral_q();
    let mut values = vec![Vec::new(); horizon + 1];
    let mut holdings = vec![Vec::new(); horizon];
    values[horizon] = target.to_vec();
    for t in (0..horizon).rev() {
        let (mut v, mut xi) = (Vec::with_capacity(1 << t), Vec::with_capacity(1 << t));
        for node in 0..1usize << t {
            let up = node | 1 << t;
            let (vu, vd) = (values[t + 1][up].clone(), values[t + 1][node].clone());
            v.push(q.clone() * vu.clone() + (S::one() - q.clone()) * vd.clone());
            xi.push((vu - vd) / (m.price(t + 1, up) - m.price(t + 1, node)));
        }
        values[t] = v;
        holdings[t] = xi;
    }
    Ok(TreeStrategy { values, holdings })
}

/// Replicates the knockout claim `H 1{D ≤ k}` on the branch `G = g`.
pub fn replicate_knockout<S: Scalar>(table: &AtomTable<S>, g: u32, k: &S) -> Result<TreeStrategy<S>> {
    let gi = table.signal_index(g)?;
    let target: Vec<S> = (0..1usize << table.horizon())
        .map(|n| {
            let a = table.atom(n, gi);
            if at_most(&a.d_star, k) {
                a.h.clone()
            } else {
                S::zero()
            }
        })
        .collect();
    replicate_on_tree(&table.market, &target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::atoms::build_atom_table;
    use crate::tree::market::random_market;
    use num_rational::BigRational;
    use num_traits::Zero;

    fn r(n: i64, d: i64) -> BigRational {
        <BigRational as Scalar>::ratio(n, d)
    }

    fn reference() -> AtomTable<BigRational> {
        build_atom_table(&TreeMarket::reference()).unwrap()
    }

    #[test]
    fn reference_half_shortfall() {
        let h = exact_quantile_hedge(&reference(), 1, Target::Epsilon(r(1, 2))).unwrap();
        assert_eq!(h.k, r(0, 1));
        assert_eq!(h.alpha, r(0, 1));
        assert_eq!(h.success_prob, r(1, 2));
        assert_eq!(h.success_set, vec![0]);
        assert!(h.exact);
    }

    #[test]
    fn reference_quarter_shortfall_is_flagged() {
        let h = exact_quantile_hedge(&reference(), 1, Target::Epsilon(r(1, 4))).unwrap();
        assert!(!h.exact);
        assert_eq!(h.success_prob, r(1, 1));
        assert_eq!(h.alpha, r(1, 1));
    }

    #[test]
    fn zero_shortfall_is_perfect_hedge() {
        for seed in 0..20 {
            let t = build_atom_table(&random_market(seed)).unwrap();
            for &g in &t.signal_values {
                let h = exact_quantile_hedge(&t, g, Target::Epsilon(r(0, 1))).unwrap();
                assert_eq!(h.alpha, r(1, 1));
                assert_eq!(h.success_prob, r(1, 1));
                assert_eq!(h.success_set.len(), 1 << t.horizon());
            }
        }
    }

    #[test]
    fn alpha_matches_q_star_route() {
        for seed in 0..50 {
            let t = build_atom_table(&random_market(seed)).unwrap();
            for &g in &t.signal_values {
                for (alpha, _) in achievable_levels(&t, g).unwrap() {
                    let h = exact_quantile_hedge(&t, g, Target::Alpha(alpha.clone())).unwrap();
                    assert!(h.exact);
                    assert_eq!(q_star_conditional(&t, g, &h.success_set).unwrap(), h.alpha);
                }
            }
        }
    }

    #[test]
    fn reference_zero_budget_by_enumeration() {
        let t = reference();
        assert_eq!(exhaustive_max_success(&t, 1, &r(0, 1)).unwrap(), r(1, 2));
        assert!(exhaustive_optimality_check(&t, 1, &r(0, 1)).unwrap());
        assert_eq!(exhaustive_max_success(&t, 1, &r(1, 1)).unwrap(), r(1, 1));
        assert!(exhaustive_optimality_check(&t, 1, &r(1, 1)).unwrap());
    }

    #[test]
    fn random_markets_are_optimal_at_every_level() {
        for seed in 0..100 {
            let t = build_atom_table(&random_market(seed)).unwrap();
            for &g in &t.signal_values {
                for (alpha, prob) in achievable_levels(&t, g).unwrap() {
                    assert!(exhaustive_optimality_check(&t, g, &alpha).unwrap(), "seed {seed} g {g}");
                    assert_eq!(exhaustive_min_capital(&t, g, &prob).unwrap(), alpha, "seed {seed} g {g}");
                    let eps = BigRational::from_integer(1.into()) - prob.clone();
                    let h = exact_quantile_hedge(&t, g, Target::Epsilon(eps)).unwrap();
                    assert!(h.exact);
                    assert_eq!(h.alpha, alpha);
                }
            }
        }
    }

    #[test]
    fn rejects_out_of_range_targets() {
        let t = reference();
        assert!(exact_quantile_hedge(&t, 1, Target::Epsilon(r(5, 4))).is_err());
        assert!(exact_quantile_hedge(&t, 1, Target::Alpha(r(-1, 4))).is_err());
        assert!(exact_quantile_hedge(&t, 9, Target::Alpha(r(1, 4))).is_err());
    }

    #[test]
    fn replicates_claim_at_its_price() {
        let m = TreeMarket::reference();
        let s = replicate_on_tree(&m, &m.payoff).unwrap();
        assert_eq!(*s.initial_capital(), r(1, 3));
        assert_eq!(s.holdings[0][0], r(2, 3));
        s.check(&m).unwrap();
    }

    #[test]
    fn zero_target_has_zero_strategy() {
        let m = random_market(5);
        let s = replicate_on_tree(&m, &vec![BigRational::zero(); 1 << m.hedge_horizon]).unwrap();
        assert!(s.values.iter().flatten().all(Zero::is_zero));
        assert!(s.holdings.iter().flatten().all(Zero::is_zero));
    }

    #[test]
    fn knockout_costs_alpha_times_price() {
        let t = reference();
        let s = replicate_knockout(&t, 1, &r(0, 1)).unwrap();
        assert_eq!(*s.initial_capital(), r(0, 1));
        for seed in 0..100 {
            let t = build_atom_table(&random_market(seed)).unwrap();
            for &g in &t.signal_values {
                for (alpha, _) in achievable_levels(&t, g).unwrap() {
                    let h = exact_quantile_hedge(&t, g, Target::Alpha(alpha.clone())).unwrap();
                    let s = replicate_knockout(&t, g, &h.k).unwrap();
                    s.check(&t.market).unwrap();
                    assert_eq!(*s.initial_capital(), alpha * t.e_qf_h.clone());
                }
            }
        }
    }

    #[test]
    fn rejects_bad_targets() {
        let m = TreeMarket::reference();
        assert!(replicate_on_tree(&m, &[r(1, 1)]).is_err());
        assert!(replicate_on_tree(&m, &[r(1, 1), r(-1, 1)]).is_err());
    }
}
