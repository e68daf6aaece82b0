//! Batch runs over signal and `ε` grids, configuration files and result output.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::measure::build_batch;
use crate::model::ModelParams;
use crate::signal::{ConditioningMode, Interval, SignalSpec};
use crate::solver::{EmpiricalLaw, Target};
use crate::tree::{
    achievable_levels, build_atom_table, exact_quantile_hedge, exhaustive_min_capital, exhaustive_optimality_check,
    random_market, replicate_knockout, verify_theorems, AtomTable, Scalar, TreeMarket,
};

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "INSIDER_HEDGE_CONFIG";
pub const DEFAULT_N_PATHS: usize = 1_000_000;
pub const MIN_N_PATHS: usize = 1_000;
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Point-signal price levels of the default grid.
pub const TABLE_LEVELS: [f64; 11] = [105.0, 106.0, 107.0, 108.0, 109.0, 110.0, 111.0, 112.0, 113.0, 114.0, 115.0];
pub const TABLE_INTERVALS: [(f64, f64); 5] = [(109.0, 111.0), (108.0, 112.0), (107.0, 113.0), (112.0, 114.0), (106.0, 108.0)];
pub const TABLE_EPSILONS: [f64; 6] = [0.01, 0.05, 0.10, 0.15, 0.20, 0.25];

pub const CSV_HEADER: &str = "signal,epsilon,alpha,alpha_stderr,success_prob,k,n_paths,mode,flags";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    Point,
    Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSelection {
    One(ConditioningMode),
    Both,
}

impl ModeSelection {
    pub fn modes(&self) -> Vec<ConditioningMode> {
        match self {
            ModeSelection::One(m) => vec![*m],
            ModeSelection::Both => vec![ConditioningMode::BridgeExact, ConditioningMode::PaperShift],
        }
    }
}

impl FromStr for ModeSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "both" {
            return Ok(ModeSelection::Both);
        }
        Ok(ModeSelection::One(s.parse()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown format '{other}', expected csv or json"))),
        }
    }
}

/// One column of a table: a price level or a price interval of `S_{T+δ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridSignal {
    Level(f64),
    Interval(f64, f64),
}

impl GridSignal {
    pub fn to_spec(&self, p: &ModelParams) -> Result<SignalSpec> {
        match *self {
            GridSignal::Level(s) => SignalSpec::point_at_price(s, p),
            GridSignal::Interval(a, b) => SignalSpec::indicator(Interval::from_prices(a, b, p)?, true, p),
        }
    }
}

impl fmt::Display for GridSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridSignal::Level(s) => write!(f, "{}", fmt_g(*s)),
            GridSignal::Interval(a, b) => write!(f, "[{};{}]", fmt_g(*a), fmt_g(*b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelParams,
    pub kind: SignalKind,
    pub levels: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    pub epsilons: Vec<f64>,
    pub mode: ModeSelection,
    pub n_paths: usize,
    pub seed: u64,
    /// Standard output when absent.
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelParams::baseline(),
            kind: SignalKind::Point,
            levels: TABLE_LEVELS.to_vec(),
            intervals: TABLE_INTERVALS.to_vec(),
            epsilons: TABLE_EPSILONS.to_vec(),
            mode: ModeSelection::Both,
            n_paths: DEFAULT_N_PATHS,
            seed: DEFAULT_SEED,
            output: None,
            format: OutputFormat::Csv,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_num(key, s)).collect()
}

impl RunConfig {
    /// Defaults overridden by `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                context: format!("config line {}", i + 1),
                message: format!("expected key = value, got '{line}'"),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                context: format!("config line {}", i + 1),
                message: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    /// Reads `path`, else the file named by [`CONFIG_ENV`], else the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let path = match path {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(CONFIG_ENV).map(PathBuf::from),
        };
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                RunConfig::parse(&text)
            }
            None => Ok(RunConfig::default()),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        match key {
            "mu" => m.mu = parse_num(key, value)?,
            "sigma" => m.sigma = parse_num(key, value)?,
            "s0" => m.s0 = parse_num(key, value)?,
            "strike" => m.strike = parse_num(key, value)?,
            "t_expiry" => m.t_expiry = parse_num(key, value)?,
            "delta" => m.delta = parse_num(key, value)?,
            "signal.kind" => {
                self.kind = match value {
                    "point" => SignalKind::Point,
                    "interval" | "indicator" => SignalKind::Interval,
                    other => return Err(Error::Config(format!("unknown signal kind '{other}'"))),
                }
            }
            "signal.levels" => self.levels = parse_list(key, value)?,
            "signal.intervals" => {
                self.intervals = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|pair| {
                        let (a, b) = pair
                            .split_once(':')
                            .ok_or_else(|| Error::Config(format!("{key}: expected lo:hi, got '{pair}'")))?;
                        Ok((parse_num(key, a)?, parse_num(key, b)?))
                    })
                    .collect::<Result<_>>()?
            }
            "epsilons" => self.epsilons = parse_list(key, value)?,
            "mode" => self.mode = value.parse()?,
            "n_paths" => self.n_paths = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "output" => self.output = (!value.is_empty() && value != "-").then(|| PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.n_paths < MIN_N_PATHS {
            return Err(Error::Config(format!("n_paths must be at least {MIN_N_PATHS}, got {}", self.n_paths)));
        }
        if self.epsilons.is_empty() {
            return Err(Error::Config("epsilons is empty".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::Config(format!("epsilon {e} outside [0, 1]")));
        }
        if self.signals().is_empty() {
            return Err(Error::Config("signal grid is empty".into()));
        }
        for s in self.signals() {
            s.to_spec(&self.model)?;
        }
        Ok(())
    }

    pub fn signals(&self) -> Vec<GridSignal> {
        match self.kind {
            SignalKind::Point => self.levels.iter().map(|&s| GridSignal::Level(s)).collect(),
            SignalKind::Interval => self.intervals.iter().map(|&(a, b)| GridSignal::Interval(a, b)).collect(),
        }
    }
}

/// One `(signal, ε, mode)` cell of a table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub signal: String,
    pub epsilon: f64,
    pub alpha: f64,
    pub alpha_stderr: f64,
    pub success_prob: f64,
    pub k: f64,
    pub n_paths: usize,
    pub mode: String,
    /// `;`-separated: `below_se_floor`, `atom_straddles`, `acceptance_floor`.
    pub flags: String,
    #[serde(skip)]
    pub runtime_ms: u128,
}

impl CellResult {
    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.split(';').any(|f| f == flag)
    }

    pub fn below_se_floor(&self) -> bool {
        self.has_flag("below_se_floor")
    }
}

fn cells_for_batch(
    signal: &GridSignal,
    spec: SignalSpec,
    mode: ConditioningMode,
    cfg: &RunConfig,
) -> Result<Vec<CellResult>> {
    let start = Instant::now();
    let cell = |eps: f64, flags: String| CellResult {
        signal: signal.to_string(),
        epsilon: eps,
        alpha: f64::NAN,
        alpha_stderr: f64::NAN,
        success_prob: f64::NAN,
        k: f64::NAN,
        n_paths: 0,
        mode: mode.as_str().into(),
        flags,
        runtime_ms: 0,
    };
    let batch = match build_batch(spec, mode, cfg.n_paths, &cfg.model, cfg.seed) {
        Ok(b) => b,
        Err(Error::AcceptanceFloor { .. }) => {
            return Ok(cfg.epsilons.iter().map(|&e| cell(e, "acceptance_floor".into())).collect());
        }
        Err(e) => return Err(e),
    };
    let law = EmpiricalLaw::from_batch(&batch)?;
    drop(batch);
    let runtime_ms = start.elapsed().as_millis();
    cfg.epsilons
        .iter()
        .map(|&eps| {
            let plan = law.hedge_plan(1.0, Target::Epsilon(eps))?;
            let mut flags = Vec::new();
            if plan.below_se_floor() {
                flags.push("below_se_floor");
            }
            if plan.atom_straddles {
                flags.push("atom_straddles");
            }
            Ok(CellResult {
                alpha: plan.alpha,
                alpha_stderr: plan.alpha_stderr,
                success_prob: plan.success_prob,
                k: plan.k,
                n_paths: plan.n_paths,
                runtime_ms,
                ..cell(eps, flags.join(";"))
            })
        })
        .collect()
}

fn run_grid(cfg: &RunConfig, modes: &[ConditioningMode]) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let jobs: Vec<(GridSignal, ConditioningMode)> = modes
        .iter()
        .flat_map(|&m| cfg.signals().into_iter().map(move |s| (s, m)))
        .collect();
    let parts = jobs
        .par_iter()
        .map(|(s, m)| cells_for_batch(s, s.to_spec(&cfg.model)?, *m, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Point-signal table; every configured mode is run, in mode-major grid order.
pub fn run_table_point(cfg: &RunConfig) -> Result<Vec<CellResult>> {
    if cfg.kind != SignalKind::Point {
        return Err(Error::Config("table-point needs signal.kind = point".into()));
    }
    run_grid(cfg, &cfg.mode.modes())
}

/// Interval-indicator table with `G = 1`, sampled by rejection.
pub fn run_table_indicator(cfg: &RunConfig) -> Result<Vec<CellResult>> {
    if cfg.kind != SignalKind::Interval {
        return Err(Error::Config("table-indicator needs signal.kind = interval".into()));
    }
    run_grid(cfg, &[ConditioningMode::BridgeExact])
}

/// A cell where the two point-signal samplers disagree beyond three combined standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Disagreement {
    pub signal: String,
    pub epsilon: f64,
    pub bridge_exact: f64,
    pub paper_shift: f64,
    pub combined_stderr: f64,
}

impl fmt::Display for Disagreement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "signal {} eps {}: bridge_exact {} vs paper_shift {} (combined se {})",
            self.signal,
            fmt_g(self.epsilon),
            fmt_g(self.bridge_exact),
            fmt_g(self.paper_shift),
            fmt_g(self.combined_stderr)
        )
    }
}

pub fn mode_disagreements(cells: &[CellResult]) -> Vec<Disagreement> {
    let bridge = ConditioningMode::BridgeExact.as_str();
    let shift = ConditioningMode::PaperShift.as_str();
    cells
        .iter()
        .filter(|c| c.mode == bridge)
        .filter_map(|b| {
            let s = cells
                .iter()
                .find(|c| c.mode == shift && c.signal == b.signal && c.epsilon == b.epsilon)?;
            let se = b.alpha_stderr.hypot(s.alpha_stderr);
            ((b.alpha - s.alpha).abs() > 3.0 * se).then(|| Disagreement {
                signal: b.signal.clone(),
                epsilon: b.epsilon,
                bridge_exact: b.alpha,
                paper_shift: s.alpha,
                combined_stderr: se,
            })
        })
        .collect()
}

/// `%g`-style rendering with six significant digits.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-4..6).contains(&exp) {
        trim(&format!("{x:.*}", (5 - exp) as usize))
    } else {
        format!("{}e{}{:02}", trim(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn g_value(x: f64) -> Value {
    if x.is_finite() {
        json!(fmt_g(x).parse::<f64>().unwrap())
    } else {
        Value::Null
    }
}

pub fn to_csv(cells: &[CellResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            c.signal,
            fmt_g(c.epsilon),
            fmt_g(c.alpha),
            fmt_g(c.alpha_stderr),
            fmt_g(c.success_prob),
            fmt_g(c.k),
            c.n_paths,
            c.mode,
            c.flags
        );
    }
    out
}

pub fn to_json(cells: &[CellResult]) -> String {
    let rows: Vec<Value> = cells
        .iter()
        .map(|c| {
            json!({
                "signal": c.signal,
                "epsilon": g_value(c.epsilon),
                "alpha": g_value(c.alpha),
                "alpha_stderr": g_value(c.alpha_stderr),
                "success_prob": g_value(c.success_prob),
                "k": g_value(c.k),
                "n_paths": c.n_paths,
                "mode": c.mode,
                "flags": c.flags,
            })
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&rows).expect("plain values");
    s.push('\n');
    s
}

pub fn render(cells: &[CellResult], format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => to_csv(cells),
        OutputFormat::Json => to_json(cells),
    }
}

/// Human-readable `ε × signal` grid per mode; cells below two standard errors show as `<x`.
pub fn render_pivot(cells: &[CellResult]) -> String {
    let mut out = String::new();
    let mut modes: Vec<&str> = Vec::new();
    for c in cells {
        if !modes.contains(&c.mode.as_str()) {
            modes.push(&c.mode);
        }
    }
    for mode in modes {
        let rows: Vec<&CellResult> = cells.iter().filter(|c| c.mode == mode).collect();
        let mut signals: Vec<&str> = Vec::new();
        let mut epsilons: Vec<f64> = Vec::new();
        for c in &rows {
            if !signals.contains(&c.signal.as_str()) {
                signals.push(&c.signal);
            }
            if !epsilons.contains(&c.epsilon) {
                epsilons.push(c.epsilon);
            }
        }
        let _ = writeln!(out, "alpha ({mode})");
        let _ = write!(out, "{:>6}", "eps");
        for s in &signals {
            let _ = write!(out, " {s:>9}");
        }
        out.push('\n');
        for &e in &epsilons {
            let _ = write!(out, "{:>6}", fmt_g(e));
            for s in &signals {
                let text = match rows.iter().find(|c| c.signal == *s && c.epsilon == e) {
                    Some(c) if c.has_flag("acceptance_floor") => "n/a".to_string(),
                    Some(c) if c.below_se_floor() => format!("<{:.3}", (2.0 * c.alpha_stderr).max(0.001)),
                    Some(c) => format!("{:.3}", c.alpha),
                    None => "-".into(),
                };
                let _ = write!(out, " {text:>9}");
            }
            out.push('\n');
        }
    }
    out
}

/// Outcome of the exact checks on one tree market.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub instances: Vec<InstanceOutcome>,
    /// The suite with one perturbed atom, which must be caught.
    pub negative_control: InstanceOutcome,
}

impl OracleReport {
    pub fn all_passed(&self) -> bool {
        self.instances.iter().all(|i| i.passed) && self.negative_control.passed
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in self.instances.iter().chain(std::iter::once(&self.negative_control)) {
            writeln!(f, "{} {}: {}", if i.passed { "PASS" } else { "FAIL" }, i.name, i.detail)?;
        }
        let passed = self.instances.iter().filter(|i| i.passed).count();
        writeln!(f, "{passed}/{} instances passed", self.instances.len())
    }
}

fn perturb(table: &mut AtomTable<BigRational>) {
    table.atoms[0].qg_density = table.atoms[0].qg_density.clone() + BigRational::ratio(1, 1_000_000);
}

/// Theorem identities, exhaustive optimality at every achievable level and
/// knockout replication for one market.
pub fn check_instance(m: &TreeMarket<BigRational>, mutate: bool) -> Result<String> {
    let mut table = build_atom_table(m)?;
    if mutate {
        perturb(&mut table);
    }
    let report = verify_theorems(&table).map_err(|v| Error::InvalidTree(v.to_string()))?;
    let mut levels = 0;
    for &g in &table.signal_values {
        for (alpha, prob) in achievable_levels(&table, g)? {
            if !exhaustive_optimality_check(&table, g, &alpha)? {
                return Err(Error::InvalidTree(format!("G={g}: a set within budget {alpha} beats the threshold set")));
            }
            let min = exhaustive_min_capital(&table, g, &prob)?;
            if min != alpha {
                return Err(Error::InvalidTree(format!("G={g}: level {prob} costs {min}, threshold set costs {alpha}")));
            }
            let hedge = exact_quantile_hedge(&table, g, Target::Epsilon(BigRational::ratio(1, 1) - prob.clone()))?;
            if !hedge.exact || hedge.alpha != alpha {
                return Err(Error::InvalidTree(format!("G={g}: shortfall solver missed level {prob}")));
            }
            let strategy = replicate_knockout(&table, g, &hedge.k)?;
            strategy.check(&table.market)?;
            if *strategy.initial_capital() != alpha.clone() * table.e_qf_h.clone() {
                return Err(Error::InvalidTree(format!("G={g}: knockout capital differs from alpha times price")));
            }
            levels += 1;
        }
    }
    Ok(format!("{} identities, {levels} hedge levels", report.total()))
}

/// Reference market plus `count` seeded random markets, checked in parallel.
///
/// With `mutate` every table gets one perturbed atom, so every instance fails.
pub fn run_oracle_suite(seed: u64, count: usize, mutate: bool) -> Result<OracleReport> {
    if count == 0 {
        return Err(Error::param("count", "need at least one random instance"));
    }
    let mut markets = vec![("reference".to_string(), TreeMarket::reference())];
    markets.extend((0..count as u64).map(|i| (format!("random-{}", seed + i), random_market(seed + i))));
    let instances = markets
        .par_iter()
        .map(|(name, m)| {
            let res = check_instance(m, mutate);
            InstanceOutcome {
                name: name.clone(),
                passed: res.is_ok(),
                detail: res.unwrap_or_else(|e| e.to_string()),
            }
        })
        .collect();

    let mut table = build_atom_table(&TreeMarket::reference())?;
    perturb(&mut table);
    let negative_control = match verify_theorems(&table) {
        Ok(_) => InstanceOutcome {
            name: "negative-control".into(),
            passed: false,
            detail: "perturbed atom went unnoticed".into(),
        },
        Err(v) => InstanceOutcome {
            name: "negative-control".into(),
            passed: true,
            detail: format!("perturbation caught by {}", v.identity),
        },
    };
    Ok(OracleReport {
        instances,
        negative_control,
    })
}
