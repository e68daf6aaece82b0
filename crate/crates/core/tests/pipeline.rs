use insider_hedge::report::{run_table_point, RunConfig};
use insider_hedge::solver::EmpiricalLaw;
use insider_hedge::tree::{achievable_levels, build_atom_table, exact_quantile_hedge, random_market, Scalar, TreeMarket};
use insider_hedge::{build_batch, make_hedge_plan, ConditioningMode, ModelParams, SignalSpec, Target};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive as _};

/// The conditional law of `D` on a tree, expanded into an equally weighted sample.
fn tree_sample(table: &insider_hedge::tree::AtomTable<BigRational>, g: u32) -> Option<Vec<f64>> {
    let law = table.conditional_law(g).unwrap();
    let lcm = law.iter().fold(num_bigint::BigInt::one(), |acc, (_, p, _, _)| acc.lcm(p.denom()));
    let size = lcm.to_usize().filter(|&n| n <= 200_000)?;
    let mut out = Vec::with_capacity(size);
    for (_, p, d, _) in law {
        let copies = (p * BigRational::from_integer(lcm.clone())).to_integer().to_usize().unwrap();
        out.extend(std::iter::repeat_n(Scalar::to_f64(&d), copies));
    }
    Some(out)
}

#[test]
fn sample_solver_agrees_with_exact_tree_solution() {
    let mut compared = 0;
    let mut tables = vec![build_atom_table(&TreeMarket::reference()).unwrap()];
    tables.extend((0..60).map(|s| build_atom_table(&random_market(s)).unwrap()));
    for t in &tables {
        for &g in &t.signal_values {
            let Some(sample) = tree_sample(t, g) else { continue };
            let law = EmpiricalLaw::from_values(sample).unwrap();
            for (alpha, prob) in achievable_levels(t, g).unwrap() {
                let eps = BigRational::one() - prob.clone();
                let exact = exact_quantile_hedge(t, g, Target::Epsilon(eps.clone())).unwrap();
                let k = law.solve_k_for_epsilon(Scalar::to_f64(&eps)).unwrap();
                assert!((k - Scalar::to_f64(&exact.k)).abs() <= 1e-12 * k.max(1.0));
                let a = law.alpha_from_k(k).value;
                // Prefix sums over up to 2e5 terms.
                assert!((a - Scalar::to_f64(&alpha)).abs() <= 1e-10, "{a} vs {alpha} n={}", law.len());
                assert!((law.success_prob_from_k(k).value - Scalar::to_f64(&prob)).abs() <= 1e-12);
                compared += 1;
            }
        }
    }
    assert!(compared > 50, "{compared}");
}

#[test]
fn reference_law_through_the_sample_solver() {
    // D given G = 1 is 0 or 2 with equal weight; given G = 0 it is 0 w.p. 4/13, 13/9 otherwise.
    let g1 = EmpiricalLaw::from_values(vec![0.0, 0.0, 2.0, 2.0]).unwrap();
    let plan = g1.hedge_plan(1.0 / 3.0, Target::Epsilon(0.5)).unwrap();
    assert_eq!((plan.k, plan.alpha, plan.success_prob), (0.0, 0.0, 0.5));
    let mut v = vec![0.0; 4];
    v.extend(std::iter::repeat_n(13.0 / 9.0, 9));
    let g0 = EmpiricalLaw::from_values(v).unwrap();
    assert_eq!(g0.success_prob_from_k(0.0).value, 4.0 / 13.0);
    assert!((g0.mean().value - 1.0).abs() < 1e-15);
}

#[test]
fn alpha_decreases_with_shortfall_and_grows_with_level() {
    let cfg = RunConfig {
        n_paths: 50_000,
        mode: insider_hedge::report::ModeSelection::One(ConditioningMode::BridgeExact),
        ..RunConfig::default()
    };
    let cells = run_table_point(&cfg).unwrap();
    for col in cells.chunks(6) {
        assert!(col.windows(2).all(|w| w[1].alpha <= w[0].alpha));
    }
    let first_row: Vec<f64> = cells.iter().step_by(6).map(|c| c.alpha).collect();
    assert!(first_row.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn capital_is_alpha_times_call_price() {
    let p = ModelParams::baseline();
    let sig = SignalSpec::point_at_price(112.0, &p).unwrap();
    let batch = build_batch(sig, ConditioningMode::BridgeExact, 100_000, &p, 2).unwrap();
    let plan = make_hedge_plan(&batch, Target::Epsilon(0.1)).unwrap();
    assert_eq!(plan.initial_capital, plan.alpha * insider_hedge::bs_call_price(&p));
    let budget = make_hedge_plan(&batch, Target::Alpha(plan.alpha)).unwrap();
    assert_eq!(budget.k, plan.k);
    assert_eq!(budget.success_prob, plan.success_prob);
}
