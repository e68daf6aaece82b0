use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use insider_hedge::report::{
    mode_disagreements, render, render_pivot, run_oracle_suite, run_table_indicator, run_table_point, RunConfig,
    SignalKind, CONFIG_ENV,
};
use insider_hedge::{bs_call_price, build_batch, make_hedge_plan, ConditioningMode, Interval, SignalSpec, Target};

#[derive(Parser)]
#[command(name = "insider-hedge", about = "Quantile hedging with insider information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key = value file; defaults to the file named by INSIDER_HEDGE_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set n_paths=100000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    format: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> insider_hedge::Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| insider_hedge::Error::Config(format!("--set expects KEY=VALUE, got '{o}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        let flags = [
            ("n_paths", self.n_paths.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("mode", self.mode.clone()),
            ("output", self.output.clone()),
            ("format", self.format.clone()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form call price E_Q[H].
    Price(ConfigArgs),
    /// Quantile hedge for one realized signal.
    Hedge {
        #[command(flatten)]
        config: ConfigArgs,
        /// Point signal as a price level of S_{T+delta}.
        #[arg(long, conflicts_with = "interval")]
        level: Option<f64>,
        /// Indicator signal as lo:hi in price units.
        #[arg(long)]
        interval: Option<String>,
        /// The indicator was observed as 0.
        #[arg(long, requires = "interval")]
        outside: bool,
        #[arg(long, conflicts_with = "alpha")]
        epsilon: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Alpha over point-signal levels and epsilons.
    TablePoint(ConfigArgs),
    /// Alpha over interval indicators and epsilons.
    TableIndicator(ConfigArgs),
    /// Exact checks on binomial markets.
    Oracle {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Perturb one atom per table; every instance should then fail.
        #[arg(long)]
        mutate: bool,
    },
    Version,
}

fn emit(cfg: &RunConfig, text: &str) -> insider_hedge::Result<()> {
    match &cfg.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| insider_hedge::Error::Config(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> insider_hedge::Result<ExitCode> {
    match cli.command {
        Command::Price(args) => {
            let cfg = args.load()?;
            cfg.model.validate()?;
            println!("{}", insider_hedge::report::fmt_g(bs_call_price(&cfg.model)));
        }
        Command::Hedge {
            config,
            level,
            interval,
            outside,
            epsilon,
            alpha,
            json,
        } => {
            let cfg = config.load()?;
            cfg.validate()?;
            let p = &cfg.model;
            let signal = match (level, interval) {
                (Some(s), None) => SignalSpec::point_at_price(s, p)?,
                (None, Some(iv)) => {
                    let (a, b) = iv
                        .split_once(':')
                        .and_then(|(a, b)| Some((a.parse::<f64>().ok()?, b.parse::<f64>().ok()?)))
                        .ok_or_else(|| insider_hedge::Error::Config(format!("--interval expects lo:hi, got '{iv}'")))?;
                    SignalSpec::indicator(Interval::from_prices(a, b, p)?, !outside, p)?
                }
                _ => return Err(insider_hedge::Error::Config("give exactly one of --level or --interval".into())),
            };
            let target = match (epsilon, alpha) {
                (Some(e), None) => Target::Epsilon(e),
                (None, Some(a)) => Target::Alpha(a),
                _ => return Err(insider_hedge::Error::Config("give exactly one of --epsilon or --alpha".into())),
            };
            let mode = match cfg.mode.modes().as_slice() {
                [m] => *m,
                _ => ConditioningMode::BridgeExact,
            };
            let batch = build_batch(signal, mode, cfg.n_paths, p, cfg.seed)?;
            let plan = make_hedge_plan(&batch, target)?;
            let text = if json {
                serde_json::to_string_pretty(&plan).expect("plain values") + "\n"
            } else {
                format!("signal          {signal} ({mode})\n{plan}")
            };
            emit(&cfg, &text)?;
        }
        Command::TablePoint(args) => {
            let mut cfg = args.load()?;
            cfg.kind = SignalKind::Point;
            let cells = run_table_point(&cfg)?;
            emit(&cfg, &render(&cells, cfg.format))?;
            eprint!("{}", render_pivot(&cells));
            for d in mode_disagreements(&cells) {
                eprintln!("mode disagreement: {d}");
            }
        }
        Command::TableIndicator(args) => {
            let mut cfg = args.load()?;
            cfg.kind = SignalKind::Interval;
            let cells = run_table_indicator(&cfg)?;
            emit(&cfg, &render(&cells, cfg.format))?;
            eprint!("{}", render_pivot(&cells));
        }
        Command::Oracle { seed, count, mutate } => {
            let report = run_oracle_suite(seed, count, mutate)?;
            print!("{report}");
            if !report.all_passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Version => {
            println!("insider-hedge {}", env!("CARGO_PKG_VERSION"));
            println!("config env    {CONFIG_ENV}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
