use std::fmt;

use super::market::{node_label, TreeMarket};
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// One `(time-T node, signal value)` cell of the enlarged filtration.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom<S> {
    pub node: usize,
    pub signal: u32,
    /// `P(node, G = g)`.
    pub phys_prob: S,
    pub z_f: S,
    pub p_g: S,
    /// `dQ_G/dP` on the atom.
    pub qg_density: S,
    pub h: S,
    /// `dQ*/dP` on the atom.
    pub d_star: S,
}

impl<S: Scalar> Atom<S> {
    pub fn qg_mass(&self) -> S {
        self.phys_prob.clone() * self.qg_density.clone()
    }
}

/// Exact measures of a tree market on `G_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomTable<S> {
    pub market: TreeMarket<S>,
    pub signal_values: Vec<u32>,
    /// `P(G = g)` in the order of `signal_values`.
    pub signal_probs: Vec<S>,
    /// `P(G = g | node)` for times `0..=T`.
    pub cond: Vec<Vec<Vec<S>>>,
    /// `E_{Q_F}[H]`, used as the normaliser of `Q*`.
    pub e_qf_h: S,
    /// Row-major in `(node, signal index)`.
    pub atoms: Vec<Atom<S>>,
}

impl<S: Scalar> AtomTable<S> {
    pub fn signal_index(&self, g: u32) -> Result<usize> {
        self.signal_values
            .iter()
            .position(|&v| v == g)
            .ok_or_else(|| Error::InvalidTree(format!("signal value {g} never occurs")))
    }

    pub fn atom(&self, node: usize, gi: usize) -> &Atom<S> {
        &self.atoms[node * self.signal_values.len() + gi]
    }

    pub fn horizon(&self) -> usize {
        self.market.hedge_horizon
    }

    /// `Z_t^F = (q/p)^j ((1 − q)/(1 − p))^(t − j)` on a time-`t` node with `j` ups.
    pub fn z_at(&self, t: usize, node: usize) -> S {
        let m = &self.market;
        let q = m.risk_neutral_q();
        let up = q.clone() / m.p_up.clone();
        let down = (S::one() - q) / (S::one() - m.p_up.clone());
        let j = node.count_ones() as usize;
        up.power(j) * down.power(t - j)
    }

    /// `Z_t^F / p_t^g` on a time-`t` node; taken from the atoms at `t = T`.
    pub fn insider_density(&self, t: usize, node: usize, gi: usize) -> S {
        if t == self.horizon() {
            return self.atom(node, gi).qg_density.clone();
        }
        let p_g = self.cond[t][node][gi].clone() / self.signal_probs[gi].clone();
        self.z_at(t, node) / p_g
    }

    /// Conditional law of `D` given `G = g`: `(node, P(node | G = g), D, H)`.
    pub fn conditional_law(&self, g: u32) -> Result<Vec<(usize, S, S, S)>> {
        let gi = self.signal_index(g)?;
        let pg = self.signal_probs[gi].clone();
        Ok((0..1usize << self.horizon())
            .map(|node| {
                let a = self.atom(node, gi);
                (node, a.phys_prob.clone() / pg.clone(), a.d_star.clone(), a.h.clone())
            })
            .collect())
    }
}

/// Exact `Z_T^F`, `p_T^g`, `dQ_G/dP` and `dQ*/dP` on every atom.
pub fn build_atom_table<S: Scalar>(m: &TreeMarket<S>) -> Result<AtomTable<S>> {
    m.validate()?;
    let horizon = m.hedge_horizon;
    let signal_values = m.signal_values();
    let mut cond = m.conditional_signal_probs();
    let signal_probs = cond[0][0].clone();
    cond.truncate(horizon + 1);

    let e_qf_h = (0..1usize << horizon)
        .map(|node| m.node_qprob(horizon, node) * m.payoff[node].clone())
        .fold(S::zero(), |a, b| a + b);
    if e_qf_h <= S::zero() {
        return Err(Error::InvalidTree("claim has zero price, so Q* is undefined".into()));
    }

    let mut table = AtomTable {
        market: m.clone(),
        signal_values,
        signal_probs,
        cond,
        e_qf_h,
        atoms: Vec::new(),
    };
    let mut atoms = Vec::with_capacity((1 << horizon) * table.signal_values.len());
    for node in 0..1usize << horizon {
        let z_f = table.z_at(horizon, node);
        let prob = m.node_prob(horizon, node);
        for (gi, &g) in table.signal_values.iter().enumerate() {
            let c = table.cond[horizon][node][gi].clone();
            let p_g = c.clone() / table.signal_probs[gi].clone();
            let qg_density = z_f.clone() / p_g.clone();
            let h = m.payoff[node].clone();
            let d_star = h.clone() * qg_density.clone() / table.e_qf_h.clone();
            atoms.push(Atom {
                node,
                signal: g,
                phys_prob: prob.clone() * c,
                z_f: z_f.clone(),
                p_g,
                qg_density,
                h,
                d_star,
            });
        }
    }
    table.atoms = atoms;
    Ok(table)
}

/// The identities checked by [`verify_theorems`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Identity {
    /// `Σ P(atom) = 1`.
    PhysicalMass,
    /// `Q_G(node, g) = Q_G(node) Q_G(g)`.
    Independence,
    /// `Q_G = Q_F` on `F_T`.
    NodeMarginal,
    /// `Q_G = P` on `σ(G)`.
    SignalMarginal,
    /// `Σ Q_G(atom) = 1`.
    InsiderMass,
    /// `Z^F / p^G` is a P-martingale on the enlarged filtration.
    DensityMartingale,
    /// `S` is a `Q_F`-martingale on the price filtration.
    PriceMartingaleRegular,
    /// `S` is a `Q_G`-martingale on the enlarged filtration.
    PriceMartingaleInsider,
    /// `E_P[dQ*/dP | G = g] = 1`.
    UnitMass,
}

impl Identity {
    pub const ALL: [Identity; 9] = [
        Identity::PhysicalMass,
        Identity::Independence,
        Identity::NodeMarginal,
        Identity::SignalMarginal,
        Identity::InsiderMass,
        Identity::DensityMartingale,
        Identity::PriceMartingaleRegular,
        Identity::PriceMartingaleInsider,
        Identity::UnitMass,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Identity::PhysicalMass => "physical_mass",
            Identity::Independence => "qg_independence",
            Identity::NodeMarginal => "qg_equals_qf_on_prices",
            Identity::SignalMarginal => "qg_equals_p_on_signal",
            Identity::InsiderMass => "qg_mass",
            Identity::DensityMartingale => "insider_density_martingale",
            Identity::PriceMartingaleRegular => "price_martingale_qf",
            Identity::PriceMartingaleInsider => "price_martingale_qg",
            Identity::UnitMass => "tilted_unit_mass",
        }
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremViolation {
    pub identity: Identity,
    pub location: String,
    pub expected: f64,
    pub found: f64,
}

impl fmt::Display for TheoremViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} violated at {}: expected {}, found {}",
            self.identity, self.location, self.expected, self.found
        )
    }
}

impl std::error::Error for TheoremViolation {}

/// Number of individual equalities verified per identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TheoremReport {
    pub checked: Vec<(Identity, usize)>,
}

impl TheoremReport {
    pub fn total(&self) -> usize {
        self.checked.iter().map(|(_, n)| n).sum()
    }
}

struct Checker {
    checked: Vec<(Identity, usize)>,
}

impl Checker {
    fn expect<S: Scalar>(&mut self, id: Identity, location: impl FnOnce() -> String, expected: &S, found: &S) -> Result<(), TheoremViolation> {
        if !expected.close(found) {
            return Err(TheoremViolation {
                identity: id,
                location: location(),
                expected: expected.to_f64(),
                found: found.to_f64(),
            });
        }
        match self.checked.last_mut() {
            Some((last, n)) if *last == id => *n += 1,
            _ => self.checked.push((id, 1)),
        }
        Ok(())
    }
}

fn sum<S: Scalar>(it: impl Iterator<Item = S>) -> S {
    it.fold(S::zero(), |a, b| a + b)
}

/// Verifies the measure identities of the insider market on every atom and node.
///
/// Returns the first violated identity with its location.
pub fn verify_theorems<S: Scalar>(table: &AtomTable<S>) -> Result<TheoremReport, TheoremViolation> {
    let m = &table.market;
    let horizon = m.hedge_horizon;
    let nodes = 1usize << horizon;
    let ng = table.signal_values.len();
    let mut ck = Checker { checked: Vec::new() };
    let one = S::one();
    let atom_label = |node: usize, gi: usize| format!("({}, G={})", node_label(node, horizon), table.signal_values[gi]);

    let total_p = sum(table.atoms.iter().map(|a| a.phys_prob.clone()));
    ck.expect(Identity::PhysicalMass, || "all atoms".into(), &one, &total_p)?;

    let node_mass: Vec<S> = (0..nodes).map(|n| sum((0..ng).map(|g| table.atom(n, g).qg_mass()))).collect();
    let signal_mass: Vec<S> = (0..ng).map(|g| sum((0..nodes).map(|n| table.atom(n, g).qg_mass()))).collect();
    for (n, nm) in node_mass.iter().enumerate() {
        for (g, sm) in signal_mass.iter().enumerate() {
            let joint = table.atom(n, g).qg_mass();
            let product = nm.clone() * sm.clone();
            ck.expect(Identity::Independence, || atom_label(n, g), &product, &joint)?;
        }
    }
    for (n, mass) in node_mass.iter().enumerate() {
        ck.expect(Identity::NodeMarginal, || node_label(n, horizon), &m.node_qprob(horizon, n), mass)?;
    }
    for (g, mass) in signal_mass.iter().enumerate() {
        ck.expect(Identity::SignalMarginal, || format!("G={}", table.signal_values[g]), &table.signal_probs[g], mass)?;
    }
    let total_q = sum(node_mass.iter().cloned());
    ck.expect(Identity::InsiderMass, || "all atoms".into(), &one, &total_q)?;

    // One-step conditional expectations on the enlarged filtration.
    let p = m.p_up.clone();
    let p_down = one.clone() - p.clone();
    for t in 0..horizon {
        for node in 0..1usize << t {
            let up = node | 1 << t;
            for gi in 0..ng {
                let here = table.cond[t][node][gi].clone();
                let trans_up = p.clone() * table.cond[t + 1][up][gi].clone() / here.clone();
                let trans_down = p_down.clone() * table.cond[t + 1][node][gi].clone() / here;
                let zp = table.insider_density(t, node, gi);
                let zp_up = table.insider_density(t + 1, up, gi);
                let zp_down = table.insider_density(t + 1, node, gi);
                let next = trans_up.clone() * zp_up.clone() + trans_down.clone() * zp_down.clone();
                let loc = || format!("({}, G={}) at t={t}", node_label(node, t), table.signal_values[gi]);
                ck.expect(Identity::DensityMartingale, loc, &zp, &next)?;
            }
        }
    }
    let q = m.risk_neutral_q();
    for t in 0..horizon {
        for node in 0..1usize << t {
            let s = m.price(t, node);
            let next = q.clone() * m.price(t + 1, node | 1 << t) + (one.clone() - q.clone()) * m.price(t + 1, node);
            ck.expect(Identity::PriceMartingaleRegular, || format!("{} at t={t}", node_label(node, t)), &s, &next)?;
        }
    }
    for t in 0..horizon {
        for node in 0..1usize << t {
            let up = node | 1 << t;
            for gi in 0..ng {
                let here = table.cond[t][node][gi].clone();
                let zp = table.insider_density(t, node, gi);
                let qg_up = p.clone() * table.cond[t + 1][up][gi].clone() / here.clone() * table.insider_density(t + 1, up, gi)
                    / zp.clone();
                let qg_down =
                    p_down.clone() * table.cond[t + 1][node][gi].clone() / here * table.insider_density(t + 1, node, gi) / zp;
                let s = m.price(t, node);
                let next = qg_up * m.price(t + 1, up) + qg_down * m.price(t + 1, node);
                let loc = || format!("({}, G={}) at t={t}", node_label(node, t), table.signal_values[gi]);
                ck.expect(Identity::PriceMartingaleInsider, loc, &s, &next)?;
            }
        }
    }
    for (gi, pg) in table.signal_probs.iter().enumerate() {
        let mean = sum((0..nodes).map(|n| {
            let a = table.atom(n, gi);
            a.phys_prob.clone() * a.d_star.clone()
        })) / pg.clone();
        ck.expect(Identity::UnitMass, || format!("G={}", table.signal_values[gi]), &one, &mean)?;
    }
    Ok(TheoremReport { checked: ck.checked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::market::random_market;
    use crate::tree::scalar::from_f64;
    use num_rational::BigRational;

    fn r(n: i64, d: i64) -> BigRational {
        <BigRational as Scalar>::ratio(n, d)
    }

    // Hand enumeration of the reference market: P(u) = 3/5, q = 1/3,
    // G = 1 on the paths ud and du, so P(G = 1) = 12/25.
    #[test]
    fn reference_atoms_by_hand() {
        let t = build_atom_table(&TreeMarket::reference()).unwrap();
        assert_eq!(t.signal_values, vec![0, 1]);
        assert_eq!(t.signal_probs, vec![r(13, 25), r(12, 25)]);
        let (d, u) = (0, 1);
        assert_eq!(t.atom(u, 0).z_f, r(5, 9));
        assert_eq!(t.atom(d, 0).z_f, r(5, 3));
        assert_eq!(t.atom(u, 1).p_g, r(5, 6));
        assert_eq!(t.atom(d, 1).p_g, r(5, 4));
        assert_eq!(t.atom(u, 0).p_g, r(15, 13));
        assert_eq!(t.atom(d, 0).p_g, r(10, 13));
        assert_eq!(t.atom(u, 1).qg_mass(), r(4, 25));
        assert_eq!(t.atom(u, 0).qg_mass(), r(13, 75));
        assert_eq!(t.atom(d, 1).qg_mass(), r(8, 25));
        assert_eq!(t.atom(d, 0).qg_mass(), r(26, 75));
        assert!((t.atom(u, 0).qg_mass().to_f64() - 0.17333).abs() < 1e-5);
        assert!((t.atom(d, 0).qg_mass().to_f64() - 0.346667).abs() < 1e-6);
        assert_eq!(t.e_qf_h, r(1, 3));
        assert_eq!(t.atom(u, 1).d_star, r(2, 1));
        assert_eq!(t.atom(u, 0).d_star, r(13, 9));
        assert_eq!(t.atom(d, 0).d_star, r(0, 1));
        for a in &t.atoms {
            let pg = t.signal_probs[t.signal_index(a.signal).unwrap()].clone();
            let node_p = t.market.node_prob(1, a.node);
            assert_eq!(a.p_g, a.phys_prob.clone() / node_p / pg);
        }
    }

    #[test]
    fn reference_passes_all_identities() {
        let t = build_atom_table(&TreeMarket::reference()).unwrap();
        let report = verify_theorems(&t).unwrap();
        let names: Vec<_> = report.checked.iter().map(|(id, _)| *id).collect();
        assert_eq!(names, Identity::ALL.to_vec());
    }

    #[test]
    fn constant_signal_is_no_information() {
        let m = TreeMarket::with_call(1, 1, r(3, 2), r(2, 3), r(1, 2), r(1, 1), r(1, 1), |_| 7).unwrap();
        let t = build_atom_table(&m).unwrap();
        for a in &t.atoms {
            assert_eq!(a.p_g, r(1, 1));
            assert_eq!(a.qg_mass(), m.node_qprob(1, a.node));
        }
        verify_theorems(&t).unwrap();
    }

    #[test]
    fn physical_equal_to_risk_neutral() {
        // u = 2, d = 1/2 gives q = 1/3; use it as the physical law.
        let m = TreeMarket::with_call(3, 2, r(2, 1), r(1, 2), r(1, 3), r(1, 1), r(1, 1), |j| (j % 2) as u32).unwrap();
        let t = build_atom_table(&m).unwrap();
        assert!(t.atoms.iter().all(|a| a.z_f == r(1, 1)));
        verify_theorems(&t).unwrap();
    }

    #[test]
    fn random_markets_pass() {
        for seed in 0..100 {
            let t = build_atom_table(&random_market(seed)).unwrap();
            if let Err(v) = verify_theorems(&t) {
                panic!("seed {seed}: {v}");
            }
        }
    }

    #[test]
    fn float_markets_pass_within_tolerance() {
        let m = TreeMarket::with_call(4, 3, 1.3, 1.0 / 1.3, 0.55, 100.0, 100.0, |j| (j % 2) as u32).unwrap();
        verify_theorems(&build_atom_table(&m).unwrap()).unwrap();
    }

    #[test]
    fn perturbed_atom_is_detected() {
        let mut t = build_atom_table(&TreeMarket::reference()).unwrap();
        t.atoms[0].qg_density = t.atoms[0].qg_density.clone() + from_f64::<BigRational>(1e-6);
        let v = verify_theorems(&t).unwrap_err();
        assert!(matches!(v.identity, Identity::Independence | Identity::NodeMarginal | Identity::SignalMarginal), "{v}");

        let mut f = build_atom_table(&TreeMarket::<f64>::from_text(&TreeMarket::reference().to_text()).unwrap()).unwrap();
        verify_theorems(&f).unwrap();
        f.atoms[3].qg_density += 1e-6;
        let v = verify_theorems(&f).unwrap_err();
        assert!(matches!(v.identity, Identity::Independence | Identity::NodeMarginal | Identity::SignalMarginal), "{v}");
    }

    #[test]
    fn zero_claim_is_rejected() {
        let m = TreeMarket::with_call(2, 1, r(2, 1), r(1, 2), r(3, 5), r(1, 1), r(5, 1), |j| (j == 1) as u32).unwrap();
        assert!(build_atom_table(&m).is_err());
    }
}
