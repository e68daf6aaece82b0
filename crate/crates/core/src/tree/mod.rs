//! Exact binomial-market laboratory with a finite-valued insider signal.
//!
//! Every measure lives on atoms `(time-T node, signal value)`, so the
//! identities behind the continuous-time engine can be checked by enumeration
//! in exact rational arithmetic.

pub mod atoms;
pub mod hedge;
pub mod market;
pub mod scalar;

pub use atoms::{build_atom_table, verify_theorems, Atom, AtomTable, Identity, TheoremReport, TheoremViolation};
pub use hedge::{
    achievable_levels, exact_quantile_hedge, exhaustive_max_success, exhaustive_min_capital, exhaustive_optimality_check,
    q_star_conditional, replicate_knockout, replicate_on_tree, ExactHedge, TreeStrategy, ENUMERATION_BOUND,
};
pub use market::{node_label, random_market, TreeMarket, MAX_PERIODS};
pub use scalar::{from_f64, Scalar, FLOAT_TOLERANCE};
