//! Two-period reference market: atoms, identities and the exact quantile hedge.

use insider_hedge::tree::{build_atom_table, exact_quantile_hedge, node_label, verify_theorems, Scalar, TreeMarket};
use insider_hedge::Target;
use num_rational::BigRational;

fn main() -> insider_hedge::Result<()> {
    let m = TreeMarket::reference();
    print!("{}", m.to_text());
    let table = build_atom_table(&m)?;
    println!("\nnode G  P          Z_T   p_T^G  Q_G        D");
    for a in &table.atoms {
        println!(
            "{:<4} {}  {:<10} {:<5} {:<6} {:<10} {}",
            node_label(a.node, 1),
            a.signal,
            a.phys_prob,
            a.z_f,
            a.p_g,
            a.qg_mass(),
            a.d_star
        );
    }
    match verify_theorems(&table) {
        Ok(r) => println!("\n{} identities hold exactly", r.total()),
        Err(v) => println!("\n{v}"),
    }
    for eps in [BigRational::ratio(1, 2), BigRational::ratio(1, 4)] {
        let h = exact_quantile_hedge(&table, 1, Target::Epsilon(eps.clone()))?;
        println!(
            "G=1 eps={eps}: k={} alpha={} success={} exact={}",
            h.k, h.alpha, h.success_prob, h.exact
        );
    }
    Ok(())
}
