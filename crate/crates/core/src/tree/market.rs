use std::collections::BTreeSet;
use std::fmt::Write as _;

use num_rational::BigRational;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::scalar::{is_negative, Scalar};
use crate::error::{Error, Result};

/// Longest tree the constructor accepts; paths are enumerated explicitly.
pub const MAX_PERIODS: usize = 20;

/// A recombining-price binomial market observed path by path.
///
/// Paths are bit strings: bit `i` is set when the price moves up at step
/// `i + 1`. A time-`t` node is a path prefix of length `t`, so the natural
/// filtration of the price is represented exactly. The claim pays
/// `payoff[node]` at the hedge horizon `T` and the insider observes
/// `signal[path]`, a function of the full path up to time `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeMarket<S> {
    pub periods: usize,
    pub hedge_horizon: usize,
    pub up: S,
    pub down: S,
    pub p_up: S,
    pub s0: S,
    pub payoff: Vec<S>,
    pub signal: Vec<u32>,
}

pub fn node_label(node: usize, t: usize) -> String {
    if t == 0 {
        return "root".into();
    }
    (0..t).map(|i| if node >> i & 1 == 1 { 'u' } else { 'd' }).collect()
}

fn parse_label(label: &str) -> Option<(usize, usize)> {
    let mut node = 0usize;
    for (i, c) in label.chars().enumerate() {
        match c {
            'u' => node |= 1 << i,
            'd' => {}
            _ => return None,
        }
    }
    Some((node, label.chars().count()))
}

impl<S: Scalar> TreeMarket<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        periods: usize,
        hedge_horizon: usize,
        up: S,
        down: S,
        p_up: S,
        s0: S,
        payoff: Vec<S>,
        signal: Vec<u32>,
    ) -> Result<Self> {
        let m = TreeMarket {
            periods,
            hedge_horizon,
            up,
            down,
            p_up,
            s0,
            payoff,
            signal,
        };
        m.validate()?;
        Ok(m)
    }

    /// Market whose claim is a call on `S_T` and whose signal is a function of
    /// the number of up moves by time `N`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_call(
        periods: usize,
        hedge_horizon: usize,
        up: S,
        down: S,
        p_up: S,
        s0: S,
        strike: S,
        signal_of_ups: impl Fn(usize) -> u32,
    ) -> Result<Self> {
        if hedge_horizon > periods || periods > MAX_PERIODS {
            return Err(Error::InvalidTree(format!("horizon {hedge_horizon} / periods {periods} out of range")));
        }
        let mut m = TreeMarket {
            periods,
            hedge_horizon,
            up,
            down,
            p_up,
            s0,
            payoff: Vec::new(),
            signal: (0..1usize << periods).map(|path| signal_of_ups(path.count_ones() as usize)).collect(),
        };
        m.payoff = (0..1usize << hedge_horizon)
            .map(|node| {
                let s = m.price(hedge_horizon, node);
                if s > strike {
                    s - strike.clone()
                } else {
                    S::zero()
                }
            })
            .collect();
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTree(msg));
        if self.periods == 0 || self.periods > MAX_PERIODS {
            return bad(format!("periods must be in 1..={MAX_PERIODS}, got {}", self.periods));
        }
        if self.hedge_horizon == 0 || self.hedge_horizon > self.periods {
            return bad(format!("hedge horizon {} must be in 1..={}", self.hedge_horizon, self.periods));
        }
        let (zero, one) = (S::zero(), S::one());
        if !(self.down > zero && self.down < one && self.up > one) {
            return bad(format!("need 0 < d < 1 < u, got d = {}, u = {}", self.down, self.up));
        }
        if !(self.p_up > zero && self.p_up < one) {
            return bad(format!("p_up = {} must lie in (0, 1)", self.p_up));
        }
        if self.s0 <= zero {
            return bad(format!("s0 = {} must be positive", self.s0));
        }
        if self.payoff.len() != 1 << self.hedge_horizon {
            return bad(format!("payoff has {} entries, expected {}", self.payoff.len(), 1 << self.hedge_horizon));
        }
        if let Some((i, v)) = self.payoff.iter().enumerate().find(|(_, v)| is_negative(*v)) {
            return bad(format!("payoff at {} is negative ({v})", node_label(i, self.hedge_horizon)));
        }
        if self.signal.len() != 1 << self.periods {
            return bad(format!("signal has {} entries, expected {}", self.signal.len(), 1 << self.periods));
        }
        self.check_equivalence()
    }

    /// Every signal value keeps positive conditional probability at every node up to `T`.
    fn check_equivalence(&self) -> Result<()> {
        let values = self.signal_values();
        let cond = self.conditional_signal_probs();
        #[allow(clippy::needless_range_loop)]
        for t in 0..=self.hedge_horizon {
            for (node, row) in cond[t].iter().enumerate() {
                if let Some(gi) = row.iter().position(|p| *p <= S::zero()) {
                    return Err(Error::EquivalenceViolated {
                        node: node_label(node, t),
                        time: t,
                        signal: values[gi],
                    });
                }
            }
        }
        Ok(())
    }

    /// Risk-neutral up probability `(1 − d)/(u − d)`.
    pub fn risk_neutral_q(&self) -> S {
        (S::one() - self.down.clone()) / (self.up.clone() - self.down.clone())
    }

    pub fn price(&self, t: usize, node: usize) -> S {
        let ups = (node & ((1 << t) - 1)).count_ones() as usize;
        self.s0.clone() * self.up.power(ups) * self.down.power(t - ups)
    }

    /// Physical probability of a time-`t` node.
    pub fn node_prob(&self, t: usize, node: usize) -> S {
        let ups = node.count_ones() as usize;
        self.p_up.power(ups) * (S::one() - self.p_up.clone()).power(t - ups)
    }

    /// Risk-neutral probability of a time-`t` node.
    pub fn node_qprob(&self, t: usize, node: usize) -> S {
        let q = self.risk_neutral_q();
        let ups = node.count_ones() as usize;
        q.power(ups) * (S::one() - q).power(t - ups)
    }

    /// Distinct signal values in increasing order.
    pub fn signal_values(&self) -> Vec<u32> {
        self.signal.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// `P(G = g | node)` for every time `t ≤ N`, node and signal value, by backward aggregation.
    pub fn conditional_signal_probs(&self) -> Vec<Vec<Vec<S>>> {
        let values = self.signal_values();
        let n = self.periods;
        let mut out: Vec<Vec<Vec<S>>> = vec![Vec::new(); n + 1];
        out[n] = self
            .signal
            .iter()
            .map(|g| values.iter().map(|v| if v == g { S::one() } else { S::zero() }).collect())
            .collect();
        let p = self.p_up.clone();
        let q = S::one() - p.clone();
        for t in (0..n).rev() {
            out[t] = (0..1usize << t)
                .map(|node| {
                    let up = &out[t + 1][node | 1 << t];
                    let down = &out[t + 1][node];
                    up.iter()
                        .zip(down)
                        .map(|(a, b)| p.clone() * a.clone() + q.clone() * b.clone())
                        .collect()
                })
                .collect();
        }
        out
    }

    /// One line per parameter, one line per payoff atom and per signal atom.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# binomial market with insider signal\n");
        let _ = writeln!(s, "periods {}", self.periods);
        let _ = writeln!(s, "hedge_horizon {}", self.hedge_horizon);
        let _ = writeln!(s, "up {}", self.up);
        let _ = writeln!(s, "down {}", self.down);
        let _ = writeln!(s, "p_up {}", self.p_up);
        let _ = writeln!(s, "s0 {}", self.s0);
        for (node, v) in self.payoff.iter().enumerate() {
            let _ = writeln!(s, "payoff {} {v}", node_label(node, self.hedge_horizon));
        }
        for (path, g) in self.signal.iter().enumerate() {
            let _ = writeln!(s, "signal {} {g}", node_label(path, self.periods));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::Parse {
            context: format!("tree market line {}", line + 1),
            message: msg.to_string(),
        };
        let mut scalars: [Option<S>; 4] = [None, None, None, None];
        let (mut periods, mut horizon) = (None, None);
        let mut payoff_atoms = Vec::new();
        let mut signal_atoms = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let scalar = |v: &str| S::parse(v).ok_or_else(|| err(i, &format!("bad number `{v}`")));
            match parts.as_slice() {
                ["periods", v] => periods = Some(v.parse::<usize>().map_err(|e| err(i, &e.to_string()))?),
                ["hedge_horizon", v] => horizon = Some(v.parse::<usize>().map_err(|e| err(i, &e.to_string()))?),
                ["up", v] => scalars[0] = Some(scalar(v)?),
                ["down", v] => scalars[1] = Some(scalar(v)?),
                ["p_up", v] => scalars[2] = Some(scalar(v)?),
                ["s0", v] => scalars[3] = Some(scalar(v)?),
                ["payoff", node, v] => {
                    let (node, len) = parse_label(node).ok_or_else(|| err(i, "bad node label"))?;
                    payoff_atoms.push((node, len, scalar(v)?, i));
                }
                ["signal", path, g] => {
                    let (path, len) = parse_label(path).ok_or_else(|| err(i, "bad path label"))?;
                    let g = g.parse::<u32>().map_err(|e| err(i, &e.to_string()))?;
                    signal_atoms.push((path, len, g, i));
                }
                _ => return Err(err(i, &format!("unrecognised line `{line}`"))),
            }
        }
        let periods = periods.ok_or_else(|| err(0, "missing `periods`"))?;
        let horizon = horizon.ok_or_else(|| err(0, "missing `hedge_horizon`"))?;
        if periods > MAX_PERIODS || horizon > periods {
            return Err(err(0, "periods or hedge_horizon out of range"));
        }
        let [up, down, p_up, s0] = scalars;
        let missing = |name: &str| err(0, &format!("missing `{name}`"));
        let mut payoff = vec![None; 1 << horizon];
        for (node, len, v, line) in payoff_atoms {
            if len != horizon {
                return Err(err(line, "payoff label length differs from hedge_horizon"));
            }
            payoff[node] = Some(v);
        }
        let mut signal = vec![None; 1 << periods];
        for (path, len, g, line) in signal_atoms {
            if len != periods {
                return Err(err(line, "signal label length differs from periods"));
            }
            signal[path] = Some(g);
        }
        let payoff = payoff.into_iter().collect::<Option<Vec<_>>>().ok_or_else(|| missing("payoff atom"))?;
        let signal = signal.into_iter().collect::<Option<Vec<_>>>().ok_or_else(|| missing("signal atom"))?;
        TreeMarket::new(
            periods,
            horizon,
            up.ok_or_else(|| missing("up"))?,
            down.ok_or_else(|| missing("down"))?,
            p_up.ok_or_else(|| missing("p_up"))?,
            s0.ok_or_else(|| missing("s0"))?,
            payoff,
            signal,
        )
    }
}

impl TreeMarket<BigRational> {
    /// Two periods, hedge at 1, `u = 2`, `d = 1/2`, `p = 3/5`, `S_0 = 1`,
    /// claim `(S_1 − 1)^+`, signal `1{S_2 = 1}`.
    pub fn reference() -> Self {
        let r = <BigRational as Scalar>::ratio;
        TreeMarket::with_call(2, 1, r(2, 1), r(1, 2), r(3, 5), r(1, 1), r(1, 1), |ups| (ups == 1) as u32)
            .expect("reference market is valid")
    }
}

/// A seeded random market with exact rational parameters: `u ∈ (1.1, 3)`,
/// `d = 1/u`, `p_up ∈ (0.2, 0.8)`, `N ∈ {2, 3, 4}`, `T < N`, a call payoff
/// struck at a node price, and a signal `1{S_N ∈ B}` chosen so that every
/// signal value stays possible from every node up to `T`.
pub fn random_market(seed: u64) -> TreeMarket<BigRational> {
    let r = <BigRational as Scalar>::ratio;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let u_tenths: i64 = rng.gen_range(12..=29);
        let up = r(u_tenths, 10);
        let down = r(10, u_tenths);
        let p_up = r(rng.gen_range(21..=79), 100);
        let periods = rng.gen_range(2..=4usize);
        let horizon = rng.gen_range(1..periods);
        let strike_ups = rng.gen_range(0..horizon);
        let s0 = r(1, 1);
        let strike = s0.clone() * up.power(strike_ups) * down.power(horizon - strike_ups);
        let mask: u32 = rng.gen_range(1..(1u32 << (periods + 1)) - 1);
        if let Ok(m) = TreeMarket::with_call(periods, horizon, up, down, p_up, s0, strike, |ups| mask >> ups & 1) {
            return m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        <BigRational as Scalar>::ratio(n, d)
    }

    #[test]
    fn reference_market_shape() {
        let m = TreeMarket::reference();
        assert_eq!(m.risk_neutral_q(), r(1, 3));
        assert_eq!(m.payoff, vec![r(0, 1), r(1, 1)]);
        assert_eq!(m.signal, vec![0, 1, 1, 0]);
        assert_eq!(node_label(1, 2), "ud");
        assert_eq!(m.price(2, 0b01), r(1, 1));
    }

    #[test]
    fn text_round_trip() {
        let m = TreeMarket::reference();
        let text = m.to_text();
        assert!(text.contains("p_up 3/5"));
        assert!(text.contains("signal ud 1"));
        assert_eq!(TreeMarket::<BigRational>::from_text(&text).unwrap(), m);
        for seed in 0..20 {
            let m = random_market(seed);
            assert_eq!(TreeMarket::from_text(&m.to_text()).unwrap(), m);
        }
        let f = TreeMarket::<f64>::from_text(&text).unwrap();
        assert_eq!(f.p_up, 0.6);
    }

    #[test]
    fn text_errors_are_located() {
        let text = TreeMarket::reference().to_text().replace("up 2", "up two");
        let e = TreeMarket::<BigRational>::from_text(&text).unwrap_err();
        assert!(e.to_string().contains("line 4"), "{e}");
        let text = TreeMarket::reference().to_text().replace("signal dd 0\n", "");
        assert!(TreeMarket::<BigRational>::from_text(&text).is_err());
    }

    #[test]
    fn rejects_revealing_signals() {
        // G = 1{first move up} reveals the time-1 node, so P(G = 0 | u) = 0.
        let sig = (0..4usize).map(|p| (p & 1) as u32).collect();
        let e = TreeMarket::new(2, 1, r(2, 1), r(1, 2), r(1, 2), r(1, 1), vec![r(0, 1), r(1, 1)], sig).unwrap_err();
        match e {
            Error::EquivalenceViolated { node, time, .. } => {
                assert_eq!(time, 1);
                assert!(node == "u" || node == "d");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let sig = vec![0, 1, 1, 0];
        let pay = vec![r(0, 1), r(1, 1)];
        assert!(TreeMarket::new(2, 1, r(1, 1), r(1, 2), r(1, 2), r(1, 1), pay.clone(), sig.clone()).is_err());
        assert!(TreeMarket::new(2, 1, r(2, 1), r(1, 2), r(1, 1), r(1, 1), pay.clone(), sig.clone()).is_err());
        assert!(TreeMarket::new(2, 3, r(2, 1), r(1, 2), r(1, 2), r(1, 1), pay.clone(), sig.clone()).is_err());
        assert!(TreeMarket::new(2, 1, r(2, 1), r(1, 2), r(1, 2), r(1, 1), vec![r(-1, 1), r(1, 1)], sig).is_err());
    }

    #[test]
    fn random_markets_respect_generator_ranges() {
        for seed in 0..100 {
            let m = random_market(seed);
            assert!(m.up > r(11, 10) && m.up < r(3, 1));
            assert_eq!(m.down.clone() * m.up.clone(), r(1, 1));
            assert!((2..=4).contains(&m.periods) && m.hedge_horizon < m.periods);
            assert!(m.payoff.iter().any(|h| *h > r(0, 1)));
            assert_eq!(m.signal_values(), vec![0, 1]);
        }
    }
}
