//! Exact enumeration of the coupled SSM/ARWD dynamics on tiny graphs.
//!
//! Branches are keyed by the configuration history together with the parity
//! of the SSM odometer on `B`. Fresh instructions are independent of the past,
//! so each walk is a simple random walk whose joint law of endpoint, parity
//! flips on `B` and woken sleepers comes from an exact absorbing-chain solve.
//! The conditional parity probability of a history is the odd mass over the
//! total mass of its branches.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};

use crate::arwd::{check_comparison_sets, ArwdConfig, Slot};
use crate::error::{Error, Result};
use crate::lattice::{Graph, SiteId, SiteSet};
use crate::ssm::SsmState;

/// Largest graph the probe accepts.
pub const MAX_PROBE_SITES: usize = 6;
/// Slack allowed when comparing a probability to the bound.
pub const PROBE_SLACK: f64 = 1e-12;

/// One reachable history at which a lone active particle on `B` is chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityEntry {
    pub t: usize,
    pub x: SiteId,
    pub history: Vec<ArwdConfig>,
    /// Conditional probability that the odometer at `x` is odd.
    pub pi: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParityReport {
    pub lambda: f64,
    pub bound: f64,
    pub entries: Vec<ParityEntry>,
    pub branches: usize,
    /// Total probability after the last step; 1 up to rounding.
    pub mass: f64,
}

impl ParityReport {
    pub fn all_hold(&self) -> bool {
        self.entries.iter().all(|e| e.holds)
    }

    pub fn min_pi(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.pi).reduce(f64::min)
    }
}

/// Law of one walk: `(end, parity flips on B, woken sleepers) -> probability`.
type WalkLaw = Vec<(SiteId, u32, u32, f64)>;

struct Probe<'g> {
    g: &'g Graph,
    a: SiteSet,
    b: SiteSet,
    /// Bit position of each site of `B`.
    b_bit: Vec<Option<u32>>,
    cache: HashMap<(SiteId, u64, u64), WalkLaw>,
}

impl<'g> Probe<'g> {
    fn mask(set: impl Iterator<Item = SiteId>) -> u64 {
        set.fold(0u64, |m, x| m | 1 << x.0)
    }

    /// The strategy `f'`: off-`A` particles first, then piles on `A`, then
    /// the least active site of `B` once every site of `A` holds at most one.
    fn choose(&self, cfg: &ArwdConfig) -> Option<SiteId> {
        let off_a = self.g.sites().find(|&x| !self.a.contains(x) && cfg.get(x).is_active());
        if off_a.is_some() {
            return off_a;
        }
        let pile = self.a.iter().find(|&x| cfg.get(x) >= Slot::Active(2));
        if pile.is_some() {
            return pile;
        }
        if self.at_most_one_on_a(cfg) {
            return self.b.iter().find(|&x| cfg.get(x).is_active());
        }
        None
    }

    fn at_most_one_on_a(&self, cfg: &ArwdConfig) -> bool {
        self.g.sites().all(|x| cfg.get(x) <= if self.a.contains(x) { Slot::Active(1) } else { Slot::Empty })
    }

    /// `eta <= 1_{A \ B} + s 1_B`.
    fn frozen(&self, cfg: &ArwdConfig) -> bool {
        self.g.sites().all(|x| {
            let cap = if self.b.contains(x) {
                Slot::Sleeping
            } else if self.a.contains(x) {
                Slot::Active(1)
            } else {
                Slot::Empty
            };
            cfg.get(x) <= cap
        })
    }

    /// Exact walk law from `x` to the first hit at time `>= 1` of `targets`,
    /// tracking departures on `B` mod 2 and visits to `sleepers`.
    fn walk_law(&mut self, x: SiteId, targets: u64, sleepers: u64) -> Result<WalkLaw> {
        if let Some(law) = self.cache.get(&(x, targets, sleepers)) {
            return Ok(law.clone());
        }
        let sleeper_list: Vec<SiteId> = self.g.sites().filter(|z| sleepers >> z.0 & 1 == 1).collect();
        let s_bit = |z: SiteId| sleeper_list.iter().position(|&s| s == z).map(|i| 1u32 << i);
        let mut index: HashMap<(SiteId, u32, u32), usize> = HashMap::new();
        let mut states = vec![(x, 0u32, 0u32)];
        index.insert(states[0], 0);
        // Transitions to transient states and to absorbing outcomes.
        let mut trans: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut exits: Vec<Vec<((SiteId, u32, u32), f64)>> = Vec::new();
        let mut i = 0;
        while i < states.len() {
            let (z, flips, seen) = states[i];
            let flips = flips ^ self.b_bit[z.index()].map_or(0, |b| 1 << b);
            let seen = seen | s_bit(z).unwrap_or(0);
            let nb = self.g.neighbors(z)?;
            let p = 1.0 / nb.len() as f64;
            let (mut tr, mut ex) = (Vec::new(), Vec::new());
            for &y in nb {
                if targets >> y.0 & 1 == 1 {
                    ex.push(((y, flips, seen), p));
                } else {
                    let key = (y, flips, seen);
                    let j = *index.entry(key).or_insert_with(|| {
                        states.push(key);
                        states.len() - 1
                    });
                    tr.push((j, p));
                }
            }
            trans.push(tr);
            exits.push(ex);
            i += 1;
        }
        let n = states.len();
        // Expected visits: (I - Q)^T v = e_start.
        let mut m = DMatrix::<f64>::identity(n, n);
        for (i, row) in trans.iter().enumerate() {
            for &(j, p) in row {
                m[(j, i)] -= p;
            }
        }
        let mut rhs = DVector::<f64>::zeros(n);
        rhs[0] = 1.0;
        let visits = m.clone().lu().solve(&rhs).ok_or_else(|| Error::Solve("walk chain is singular".into()))?;
        let residual = (&m * &visits - &rhs).amax();
        if residual > 1e-12 {
            return Err(Error::Solve(format!("walk chain residual {residual:e}")));
        }
        let mut law: BTreeMap<(SiteId, u32, u32), f64> = BTreeMap::new();
        for (i, ex) in exits.iter().enumerate() {
            for &(key, p) in ex {
                *law.entry(key).or_default() += visits[i] * p;
            }
        }
        let out: WalkLaw = law.into_iter().map(|((y, f, s), p)| (y, f, s, p)).collect();
        self.cache.insert((x, targets, sleepers), out.clone());
        Ok(out)
    }
}

/// Enumerates the coupled dynamics from `eta0` for `steps` steps and reports
/// the conditional odometer parity at every reachable choice of a lone
/// active particle on `B`, against `1/(1+Delta^3)`.
pub fn coupled_parity_probe(
    g: &Graph,
    a: &SiteSet,
    b: &SiteSet,
    eta0: &SsmState,
    steps: usize,
    branch_budget: usize,
) -> Result<ParityReport> {
    if g.site_count() > MAX_PROBE_SITES || g.sites().any(|x| g.is_halo(x)) {
        return Err(Error::Precondition(format!("probe needs at most {MAX_PROBE_SITES} sites and no halo")));
    }
    check_comparison_sets(g, a, b)?;
    if eta0.total() != a.len() as u64 {
        return Err(Error::ParticleCount { expected: a.len() as u64, found: eta0.total() });
    }
    let lambda = (g.max_degree() as f64).powi(3);
    let bound = 1.0 / (1.0 + lambda);
    let mut b_bit = vec![None; g.site_count()];
    for (i, x) in b.iter().enumerate() {
        b_bit[x.index()] = Some(i as u32);
    }
    let mut probe = Probe { g, a: a.clone(), b: b.clone(), b_bit, cache: HashMap::new() };

    let start = ArwdConfig::from_ssm(eta0).put_to_sleep(a);
    let mut branches: BTreeMap<Vec<ArwdConfig>, BTreeMap<u32, f64>> = BTreeMap::new();
    branches.insert(vec![start], BTreeMap::from([(0, 1.0)]));
    let mut entries = Vec::new();
    let mut explored = 1usize;

    for t in 0..steps {
        let mut next: BTreeMap<Vec<ArwdConfig>, BTreeMap<u32, f64>> = BTreeMap::new();
        let mut emit = |history: &[ArwdConfig], cfg: ArwdConfig, parity: u32, w: f64| {
            if w > 0.0 {
                let mut h = history.to_vec();
                h.push(cfg);
                *next.entry(h).or_default().entry(parity).or_default() += w;
            }
        };
        for (history, parities) in &branches {
            let cfg = history.last().expect("histories are non-empty");
            let choice = if probe.frozen(cfg) { None } else { probe.choose(cfg) };
            let Some(x) = choice else {
                for (&p, &w) in parities {
                    emit(history, cfg.clone(), p, w);
                }
                continue;
            };
            let decides = b.contains(x) && cfg.get(x) == Slot::Active(1);
            let walk_given_odd = if decides {
                let bit = 1u32 << probe.b_bit[x.index()].expect("x lies in B");
                let total: f64 = parities.values().sum();
                let odd: f64 = parities.iter().filter(|(&p, _)| p & bit != 0).map(|(_, &w)| w).sum();
                let pi = odd / total;
                entries.push(ParityEntry { t, x, history: history.clone(), pi, holds: pi >= bound - PROBE_SLACK });
                if pi > 0.0 {
                    (1.0 / ((1.0 + lambda) * pi)).min(1.0)
                } else {
                    0.0
                }
            } else {
                1.0
            };
            let stage_three = probe.at_most_one_on_a(cfg);
            let mut after = cfg.clone();
            after.set(x, cfg.get(x).remove_one());
            let targets = Probe::mask(a.iter().filter(|&z| after.get(z) == Slot::Empty));
            if targets == 0 {
                return Err(Error::NoSettlingSite);
            }
            let sleepers =
                if stage_three { Probe::mask(g.sites().filter(|&z| cfg.get(z) == Slot::Sleeping)) } else { 0 };
            let law = probe.walk_law(x, targets, sleepers)?;
            let sleeper_list: Vec<SiteId> = g.sites().filter(|&z| sleepers >> z.0 & 1 == 1).collect();
            for (&p, &w) in parities {
                let walk_weight = if decides {
                    let odd = p & (1 << probe.b_bit[x.index()].expect("x lies in B")) != 0;
                    if odd {
                        w * walk_given_odd
                    } else {
                        0.0
                    }
                } else {
                    w
                };
                if decides {
                    emit(history, cfg.put_to_sleep(&SiteSet::from_sites(g.site_count(), [x])), p, w - walk_weight);
                }
                for &(y, flips, seen, q) in &law {
                    let mut out = after.clone();
                    for (i, &z) in sleeper_list.iter().enumerate() {
                        if seen >> i & 1 == 1 {
                            out.set(z, Slot::Active(1));
                        }
                    }
                    out.set(y, Slot::Sleeping);
                    emit(history, out, p ^ flips, walk_weight * q);
                }
            }
        }
        explored += next.values().map(|m| m.len()).sum::<usize>();
        if explored > branch_budget {
            return Err(Error::BranchBudget { budget: branch_budget, explored });
        }
        branches = next;
    }
    let mass = branches.values().flat_map(|m| m.values()).sum();
    Ok(ParityReport { lambda, bound, entries, branches: explored, mass })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(g: &Graph, sites: &[u32]) -> SiteSet {
        SiteSet::from_sites(g.site_count(), sites.iter().map(|&i| SiteId(i)))
    }

    #[test]
    fn cycle3_bound_holds() {
        let g = Graph::cycle(3).unwrap();
        let eta = SsmState::from_counts(&g, &[2, 1, 0]).unwrap();
        let r = coupled_parity_probe(&g, &g.interior(), &set(&g, &[0]), &eta, 4, 10_000_000).unwrap();
        assert_eq!(r.lambda, 8.0);
        assert!(!r.entries.is_empty());
        assert!(r.all_hold(), "{:?}", r.min_pi());
        assert!((r.mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn first_pi_matches_hand_computation() {
        // eta0 = (2, s, 0): the pile at 0 walks to the empty site 2. Each
        // excursion from 0 ends with probability 3/4, so the number of
        // departures from 0 is geometric and odd with probability 4/5.
        let g = Graph::cycle(3).unwrap();
        let eta = SsmState::from_counts(&g, &[2, 1, 0]).unwrap();
        let r = coupled_parity_probe(&g, &g.interior(), &set(&g, &[0]), &eta, 2, 1_000_000).unwrap();
        let first = &r.entries[0];
        assert_eq!((first.t, first.x), (1, SiteId(0)));
        assert!((first.pi - 0.8).abs() < 1e-12, "{}", first.pi);
    }

    #[test]
    fn adjacent_b_is_rejected() {
        let g = Graph::cycle(3).unwrap();
        let eta = SsmState::from_counts(&g, &[2, 1, 0]).unwrap();
        assert!(matches!(
            coupled_parity_probe(&g, &g.interior(), &set(&g, &[0, 1]), &eta, 2, 1000),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn settled_particle_never_revisited_has_no_entry() {
        // Already frozen: nothing is ever chosen.
        let g = Graph::cycle(3).unwrap();
        let eta = SsmState::from_counts(&g, &[1, 1, 1]).unwrap();
        let r = coupled_parity_probe(&g, &g.interior(), &set(&g, &[0]), &eta, 4, 1000).unwrap();
        assert!(r.entries.is_empty());
    }

    #[test]
    fn budget_is_enforced() {
        let g = Graph::cycle(3).unwrap();
        let eta = SsmState::from_counts(&g, &[2, 1, 0]).unwrap();
        assert!(matches!(
            coupled_parity_probe(&g, &g.interior(), &set(&g, &[0]), &eta, 6, 3),
            Err(Error::BranchBudget { .. })
        ));
    }
}
