//! Alpha over price intervals given `G = 1`, written as CSV.

use insider_hedge::report::{render_pivot, run_table_indicator, to_csv, RunConfig, SignalKind};

fn main() -> insider_hedge::Result<()> {
    let mut cfg = RunConfig {
        kind: SignalKind::Interval,
        ..RunConfig::default()
    };
    if let Some(n) = std::env::args().nth(1) {
        cfg.set("n_paths", &n)?;
    }
    let cells = run_table_indicator(&cfg)?;
    eprint!("{}", render_pivot(&cells));
    print!("{}", to_csv(&cells));
    Ok(())
}
