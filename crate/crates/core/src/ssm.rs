//! The stochastic sandpile: configurations, half-topplings, the four
//! stability notions, and stabilisation drivers.
//!
//! Odometers are stored doubled (`h2 = 2h`), so one half-toppling adds 1 and
//! `h` is an integer exactly when `h2` is even.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Graph, Metric, SiteId, SiteSet};
use crate::randomness::{derive_seed, InstructionSource, RandomStream};

/// Particle counts and doubled odometers, indexed by site id (halo included).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SsmState {
    pub eta: Vec<u32>,
    pub h2: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct StateDump {
    sites: usize,
    eta: Vec<u32>,
    h2: Vec<u64>,
}

impl SsmState {
    pub fn empty(g: &Graph) -> Self {
        SsmState { eta: vec![0; g.site_count()], h2: vec![0; g.site_count()] }
    }

    /// Counts for the first `counts.len()` sites; the rest start empty.
    pub fn from_counts(g: &Graph, counts: &[u32]) -> Result<Self> {
        if counts.len() > g.site_count() {
            return Err(Error::InvalidParameter(format!(
                "{} counts for {} sites",
                counts.len(),
                g.site_count()
            )));
        }
        let mut s = Self::empty(g);
        s.eta[..counts.len()].copy_from_slice(counts);
        Ok(s)
    }

    #[inline]
    pub fn eta(&self, x: SiteId) -> u32 {
        self.eta[x.index()]
    }

    #[inline]
    pub fn h2(&self, x: SiteId) -> u64 {
        self.h2[x.index()]
    }

    pub fn total(&self) -> u64 {
        self.eta.iter().map(|&k| k as u64).sum()
    }

    pub fn total_on(&self, set: &SiteSet) -> u64 {
        set.iter().map(|x| self.eta(x) as u64).sum()
    }

    pub fn to_json(&self) -> String {
        let dump = StateDump { sites: self.eta.len(), eta: self.eta.clone(), h2: self.h2.clone() };
        serde_json::to_string(&dump).expect("state dump serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: StateDump = serde_json::from_str(text).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        if d.eta.len() != d.sites || d.h2.len() != d.sites {
            return Err(Error::InvalidParameter("state dump lengths disagree".into()));
        }
        Ok(SsmState { eta: d.eta, h2: d.h2 })
    }
}

/// Which sites count as unstable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StabilityMode {
    /// `eta >= 2`.
    Full,
    /// `eta >= 2`, or `eta = 1` with `h` not an integer.
    Half,
    /// The half rule on the settling set; any particle off it is unstable.
    AStab(SiteSet),
    /// Full stability with the weak side condition around the centre.
    Weak(SiteId),
}

impl StabilityMode {
    pub fn name(&self) -> &'static str {
        match self {
            StabilityMode::Full => "full",
            StabilityMode::Half => "half",
            StabilityMode::AStab(_) => "a_stab",
            StabilityMode::Weak(_) => "weak",
        }
    }

    /// Full and weak modes act by full topplings; the others by half-topplings.
    fn step_size(&self) -> u64 {
        match self {
            StabilityMode::Full | StabilityMode::Weak(_) => 2,
            _ => 1,
        }
    }
}

/// Order in which the driver picks among unstable sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionPolicy {
    Lexicographic,
    Random { seed: u64 },
    Stack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Stable,
    Capped,
}

/// Number of particle jumps from each site.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Odometer {
    pub m: Vec<u64>,
}

impl Odometer {
    #[inline]
    pub fn get(&self, x: SiteId) -> u64 {
        self.m[x.index()]
    }

    pub fn norm(&self) -> u64 {
        self.m.iter().sum()
    }

    pub fn support(&self) -> impl Iterator<Item = SiteId> + '_ {
        self.m.iter().enumerate().filter(|(_, &v)| v > 0).map(|(i, _)| SiteId::from(i))
    }
}

/// Result of a stabilisation run.
#[derive(Debug, Clone)]
pub struct Stabilization {
    pub state: SsmState,
    pub odometer: Odometer,
    pub status: Status,
    /// Weak mode only: whether the centre's neighbourhood ever held a particle.
    pub centre_visited: bool,
}

/// Moves one particle from `x` along its next instruction and returns the
/// receiving site.
pub fn half_topple(g: &Graph, s: &mut SsmState, x: SiteId, field: &impl InstructionSource) -> Result<SiteId> {
    if g.is_halo(x) {
        return Err(Error::AbsorbingSite(x));
    }
    if s.eta(x) == 0 {
        return Err(Error::InadmissibleHalfToppling(x));
    }
    let y = field.instruction(g, x, s.h2(x) + 1)?;
    let before = s.eta(x) as u64 + s.eta(y) as u64;
    s.eta[x.index()] -= 1;
    s.eta[y.index()] += 1;
    s.h2[x.index()] += 1;
    debug_assert_eq!(before, s.eta(x) as u64 + s.eta(y) as u64);
    Ok(y)
}

/// The full toppling: two half-topplings. Requires `eta(x) >= 2`.
pub fn topple(g: &Graph, s: &mut SsmState, x: SiteId, field: &impl InstructionSource) -> Result<[SiteId; 2]> {
    if s.eta(x) < 2 {
        return Err(Error::InadmissibleHalfToppling(x));
    }
    Ok([half_topple(g, s, x, field)?, half_topple(g, s, x, field)?])
}

/// Local instability for the modes decidable from `x` alone. Weak mode
/// answers with the plain full rule; the driver adds the side condition.
pub fn is_unstable(s: &SsmState, x: SiteId, mode: &StabilityMode) -> bool {
    let (k, odd) = (s.eta(x), s.h2(x) % 2 == 1);
    match mode {
        StabilityMode::Full | StabilityMode::Weak(_) => k >= 2,
        StabilityMode::Half => k >= 2 || (k == 1 && odd),
        StabilityMode::AStab(a) if a.contains(x) => k >= 2 || (k == 1 && odd),
        StabilityMode::AStab(_) => k >= 1,
    }
}

/// Pre-computed context for a driver run.
struct Ctx<'a> {
    vp: &'a SiteSet,
    mode: &'a StabilityMode,
    centre: Option<SiteSet>,
}

impl<'a> Ctx<'a> {
    fn new(g: &Graph, vp: &'a SiteSet, mode: &'a StabilityMode) -> Result<Self> {
        if let Some(x) = vp.iter().find(|&x| g.is_halo(x)) {
            return Err(Error::AbsorbingSite(x));
        }
        let centre = match mode {
            StabilityMode::Weak(x0) => {
                if !vp.contains(*x0) {
                    return Err(Error::Precondition("weak centre must lie in the stabilised set".into()));
                }
                Some(g.ball(*x0, 1, Metric::Graph)?)
            }
            _ => None,
        };
        Ok(Ctx { vp, mode, centre })
    }

    /// Whether `x` may legally act now.
    fn toppleable(&self, s: &SsmState, x: SiteId) -> bool {
        if !self.vp.contains(x) || !is_unstable(s, x, self.mode) {
            return false;
        }
        match &self.centre {
            Some(i) if i.contains(x) && s.eta(x) == 2 => i.iter().any(|z| z != x && s.eta(z) >= 1),
            _ => true,
        }
    }

    fn centre_occupied(&self, s: &SsmState) -> bool {
        self.centre.as_ref().is_some_and(|i| i.iter().any(|z| s.eta(z) >= 1))
    }

    /// Performs one legal action at `x`; returns the receiving sites.
    fn act(&self, g: &Graph, s: &mut SsmState, x: SiteId, field: &impl InstructionSource) -> Result<Vec<SiteId>> {
        if self.mode.step_size() == 2 {
            Ok(topple(g, s, x, field)?.to_vec())
        } else {
            Ok(vec![half_topple(g, s, x, field)?])
        }
    }
}

enum Worklist {
    Heap(BinaryHeap<Reverse<SiteId>>),
    Random(Vec<SiteId>, RandomStream),
    Stack(Vec<SiteId>),
}

impl Worklist {
    fn new(policy: SelectionPolicy) -> Self {
        match policy {
            SelectionPolicy::Lexicographic => Worklist::Heap(BinaryHeap::new()),
            SelectionPolicy::Random { seed } => Worklist::Random(Vec::new(), RandomStream::new(seed)),
            SelectionPolicy::Stack => Worklist::Stack(Vec::new()),
        }
    }

    fn push(&mut self, x: SiteId) {
        match self {
            Worklist::Heap(h) => h.push(Reverse(x)),
            Worklist::Random(v, _) | Worklist::Stack(v) => v.push(x),
        }
    }

    fn pop(&mut self) -> Option<SiteId> {
        match self {
            Worklist::Heap(h) => h.pop().map(|Reverse(x)| x),
            Worklist::Stack(v) => v.pop(),
            Worklist::Random(v, rng) => {
                if v.is_empty() {
                    None
                } else {
                    let i = rng.below(v.len());
                    Some(v.swap_remove(i))
                }
            }
        }
    }
}

/// Stabilises `s` inside `vp` for `mode`, performing at most `cap`
/// half-topplings.
pub fn stabilize(
    g: &Graph,
    s: &SsmState,
    vp: &SiteSet,
    mode: &StabilityMode,
    field: &impl InstructionSource,
    policy: SelectionPolicy,
    cap: u64,
) -> Result<Stabilization> {
    if cap == 0 {
        return Err(Error::InvalidParameter("cap must be positive".into()));
    }
    let ctx = Ctx::new(g, vp, mode)?;
    let mut st = s.clone();
    let total = st.total();
    let mut queued = vec![false; g.site_count()];
    let mut work = Worklist::new(policy);
    let push = |work: &mut Worklist, queued: &mut [bool], x: SiteId| {
        if !queued[x.index()] && vp.contains(x) {
            queued[x.index()] = true;
            work.push(x);
        }
    };
    for x in vp.iter() {
        push(&mut work, &mut queued, x);
    }
    let mut centre_visited = ctx.centre_occupied(&st);
    let mut done = 0u64;
    let mut status = Status::Stable;
    while let Some(x) = work.pop() {
        queued[x.index()] = false;
        if !ctx.toppleable(&st, x) {
            continue;
        }
        if done + mode.step_size() > cap {
            status = Status::Capped;
            break;
        }
        let receivers = ctx.act(g, &mut st, x, field)?;
        done += mode.step_size();
        push(&mut work, &mut queued, x);
        for &y in &receivers {
            push(&mut work, &mut queued, y);
        }
        if let Some(i) = &ctx.centre {
            if receivers.iter().any(|&y| i.contains(y)) {
                centre_visited = true;
                // Arrivals can lift the side condition at other sites of I.
                for z in i.iter().filter(|&z| st.eta(z) >= 2) {
                    push(&mut work, &mut queued, z);
                }
            }
        }
    }
    debug_assert_eq!(total, st.total());
    debug_assert!(status == Status::Capped || vp.iter().all(|x| !ctx.toppleable(&st, x)));
    let m = st.h2.iter().zip(&s.h2).map(|(a, b)| a - b).collect();
    Ok(Stabilization { state: st, odometer: Odometer { m }, status, centre_visited })
}

/// Outcome of an order-independence probe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbelianReport {
    pub consistent: bool,
    pub runs: usize,
    pub capped: usize,
}

/// Stabilises with the same field under `trials` random orders plus the
/// lexicographic and stack orders, and compares every `(eta, m)`.
#[allow(clippy::too_many_arguments)]
pub fn abelian_probe(
    g: &Graph,
    s: &SsmState,
    vp: &SiteSet,
    mode: &StabilityMode,
    field: &impl InstructionSource,
    trials: usize,
    seed: u64,
    cap: u64,
) -> Result<AbelianReport> {
    if matches!(mode, StabilityMode::Weak(_)) {
        return Err(Error::UnsupportedMode("weak"));
    }
    let policies = [SelectionPolicy::Lexicographic, SelectionPolicy::Stack]
        .into_iter()
        .chain((0..trials as u64).map(|i| SelectionPolicy::Random { seed: derive_seed(seed, "abelian", i) }));
    let mut reference: Option<(Vec<u32>, Odometer)> = None;
    let mut report = AbelianReport { consistent: true, runs: 0, capped: 0 };
    for policy in policies {
        let out = stabilize(g, s, vp, mode, field, policy, cap)?;
        report.runs += 1;
        if out.status == Status::Capped {
            report.capped += 1;
            continue;
        }
        match &reference {
            None => reference = Some((out.state.eta, out.odometer)),
            Some((eta, m)) => report.consistent &= *eta == out.state.eta && *m == out.odometer,
        }
    }
    Ok(report)
}

/// Every distinct `(eta, m)` reached by any complete legal sequence, found by
/// depth-first search over all choices. `None` if more than `node_budget`
/// nodes would be visited.
pub fn enumerate_outcomes(
    g: &Graph,
    s: &SsmState,
    vp: &SiteSet,
    mode: &StabilityMode,
    field: &impl InstructionSource,
    node_budget: usize,
) -> Result<Option<BTreeSet<(Vec<u32>, Vec<u64>)>>> {
    if matches!(mode, StabilityMode::Weak(_)) {
        return Err(Error::UnsupportedMode("weak"));
    }
    let ctx = Ctx::new(g, vp, mode)?;
    let mut outcomes = BTreeSet::new();
    let mut nodes = 0usize;
    let mut stack = vec![s.clone()];
    while let Some(st) = stack.pop() {
        nodes += 1;
        if nodes > node_budget {
            return Ok(None);
        }
        let movable: Vec<SiteId> = vp.iter().filter(|&x| ctx.toppleable(&st, x)).collect();
        if movable.is_empty() {
            let m = st.h2.iter().zip(&s.h2).map(|(a, b)| a - b).collect();
            outcomes.insert((st.eta, m));
            continue;
        }
        for x in movable {
            let mut child = st.clone();
            ctx.act(g, &mut child, x, field)?;
            stack.push(child);
        }
    }
    Ok(Some(outcomes))
}

/// Independent Poisson(`mu`) counts on non-halo sites, zero odometer.
pub fn poisson_init(g: &Graph, mu: f64, stream: &mut RandomStream) -> Result<SsmState> {
    let mut s = SsmState::empty(g);
    for x in g.interior_sites() {
        s.eta[x.index()] = u32::try_from(stream.poisson(mu)?).map_err(|_| Error::InvalidParameter("count overflow".into()))?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomness::{InstructionField, TruncatedField};

    fn pins(list: &[(u32, u64, u32)]) -> TruncatedField {
        TruncatedField::from_pins(list.iter().map(|&(x, j, y)| (SiteId(x), j, SiteId(y))))
    }

    #[test]
    fn stability_rules() {
        let g = Graph::cycle(3).unwrap();
        let mut s = SsmState::from_counts(&g, &[1, 1, 0]).unwrap();
        s.h2[0] = 1;
        assert!(is_unstable(&s, SiteId(0), &StabilityMode::Half));
        s.h2[0] = 2;
        let a = SiteSet::from_sites(3, [SiteId(0)]);
        assert!(!is_unstable(&s, SiteId(0), &StabilityMode::AStab(a.clone())));
        assert!(is_unstable(&s, SiteId(1), &StabilityMode::AStab(a)));
        assert!(!is_unstable(&s, SiteId(0), &StabilityMode::Full));
    }

    #[test]
    fn half_topple_pinned() {
        let g = Graph::cycle(3).unwrap();
        let f = pins(&[(0, 1, 1), (0, 2, 2)]);
        let mut s = SsmState::from_counts(&g, &[2, 0, 0]).unwrap();
        assert_eq!(half_topple(&g, &mut s, SiteId(0), &f).unwrap(), SiteId(1));
        assert_eq!((s.eta.clone(), s.h2(SiteId(0))), (vec![1, 1, 0], 1));
        half_topple(&g, &mut s, SiteId(0), &f).unwrap();
        assert_eq!((s.eta.clone(), s.h2(SiteId(0))), (vec![0, 1, 1], 2));

        let mut t = SsmState::from_counts(&g, &[2, 0, 0]).unwrap();
        topple(&g, &mut t, SiteId(0), &f).unwrap();
        assert_eq!(s, t);
        assert_eq!(half_topple(&g, &mut t, SiteId(0), &f), Err(Error::InadmissibleHalfToppling(SiteId(0))));
    }

    #[test]
    fn stabilize_single_toppling() {
        let g = Graph::cycle(3).unwrap();
        let f = pins(&[(0, 1, 1), (0, 2, 2)]);
        let s = SsmState::from_counts(&g, &[2, 0, 0]).unwrap();
        let out = stabilize(&g, &s, &g.interior(), &StabilityMode::Full, &f, SelectionPolicy::Lexicographic, 100).unwrap();
        assert_eq!(out.state.eta, vec![0, 1, 1]);
        assert_eq!(out.odometer.norm(), 2);
        assert_eq!(out.status, Status::Stable);
    }

    #[test]
    fn stable_input_is_untouched() {
        let g = Graph::torus(4, 1).unwrap();
        let s = SsmState::from_counts(&g, &[1, 1, 1, 1]).unwrap();
        let out =
            stabilize(&g, &s, &g.interior(), &StabilityMode::Full, &InstructionField::new(1), SelectionPolicy::Stack, 10)
                .unwrap();
        assert_eq!(out.state, s);
        assert_eq!(out.odometer.norm(), 0);
        assert!(stabilize(&g, &s, &g.interior(), &StabilityMode::Full, &InstructionField::new(1), SelectionPolicy::Stack, 0)
            .is_err());
    }

    #[test]
    fn box_stabilisation_always_finishes() {
        let g = Graph::boxed(2, 1).unwrap();
        let o = g.site_at(&[0]).unwrap();
        let mut s = SsmState::from_counts(&g, &[1; 5]).unwrap();
        s.eta[o.index()] = 2;
        let interior = g.interior();
        for t in 0..10_000u64 {
            let out = stabilize(
                &g,
                &s,
                &interior,
                &StabilityMode::Full,
                &InstructionField::new(t),
                SelectionPolicy::Random { seed: t },
                1_000_000,
            )
            .unwrap();
            assert_eq!(out.status, Status::Stable);
            assert!(out.state.total_on(&interior) <= 5);
            assert_eq!(out.state.total(), 6);
        }
    }

    #[test]
    fn cap_is_reported() {
        let g = Graph::cycle(4).unwrap();
        let s = SsmState::from_counts(&g, &[3, 2, 2, 2]).unwrap();
        let out =
            stabilize(&g, &s, &g.interior(), &StabilityMode::Full, &InstructionField::new(1), SelectionPolicy::Stack, 1000)
                .unwrap();
        // Nine particles on four sites can never stabilise.
        assert_eq!(out.status, Status::Capped);
        assert!(out.odometer.norm() <= 1000);
    }

    #[test]
    fn abelian_single_site() {
        let g = Graph::cycle(3).unwrap();
        let s = SsmState::from_counts(&g, &[2, 0, 0]).unwrap();
        let r = abelian_probe(&g, &s, &g.interior(), &StabilityMode::Full, &InstructionField::new(4), 50, 9, 1000).unwrap();
        assert!(r.consistent);
        assert_eq!(r.runs, 52);
        assert_eq!(
            abelian_probe(&g, &s, &g.interior(), &StabilityMode::Weak(SiteId(0)), &InstructionField::new(4), 5, 9, 1000),
            Err(Error::UnsupportedMode("weak"))
        );
    }

    #[test]
    fn weak_side_condition_blocks_lone_pair() {
        let g = Graph::boxed(3, 1).unwrap();
        let o = g.site_at(&[0]).unwrap();
        let mut s = SsmState::empty(&g);
        s.eta[o.index()] = 2;
        let out = stabilize(
            &g,
            &s,
            &g.interior(),
            &StabilityMode::Weak(o),
            &InstructionField::new(3),
            SelectionPolicy::Lexicographic,
            100,
        )
        .unwrap();
        // Weakly stable by clause (ii): nothing moves.
        assert_eq!(out.state, s);
        assert!(out.centre_visited);
    }

    #[test]
    fn exhaustive_enumeration_is_single_valued() {
        let g = Graph::cycle(6).unwrap();
        let s = SsmState::from_counts(&g, &[2, 1, 2, 0, 0, 0]).unwrap();
        let f = InstructionField::new(12);
        for mode in [StabilityMode::Full, StabilityMode::Half] {
            let outs = enumerate_outcomes(&g, &s, &g.interior(), &mode, &f, 100_000).unwrap().unwrap();
            assert_eq!(outs.len(), 1);
        }
    }

    #[test]
    fn json_round_trip() {
        let g = Graph::cycle(3).unwrap();
        let mut s = SsmState::from_counts(&g, &[2, 0, 1]).unwrap();
        s.h2[1] = 3;
        let text = s.to_json();
        assert_eq!(text, r#"{"sites":3,"eta":[2,0,1],"h2":[0,3,0]}"#);
        assert_eq!(SsmState::from_json(&text).unwrap(), s);
    }

    #[test]
    fn poisson_init_mean() {
        let g = Graph::torus(10, 2).unwrap();
        let mut stream = RandomStream::new(5);
        let trials = 10_000;
        let mean = (0..trials).map(|_| poisson_init(&g, 0.8, &mut stream).unwrap().total()).sum::<u64>() as f64
            / trials as f64;
        assert!((mean - 80.0).abs() < 3.0);
        let s = poisson_init(&g, 1e-6, &mut stream).unwrap();
        assert!(s.h2.iter().all(|&h| h == 0));
    }
}
