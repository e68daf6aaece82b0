//! Alpha over price levels 105..=115 for both point-signal samplers.
//!
//! `cargo run --release --example table_point -- 200000` picks the path count.

use insider_hedge::report::{mode_disagreements, render_pivot, run_table_point, RunConfig};

fn main() -> insider_hedge::Result<()> {
    let mut cfg = RunConfig::default();
    if let Some(n) = std::env::args().nth(1) {
        cfg.set("n_paths", &n)?;
    }
    let cells = run_table_point(&cfg)?;
    print!("{}", render_pivot(&cells));
    println!("{} cells differ between samplers", mode_disagreements(&cells).len());
    Ok(())
}
