//! Activated random walks with instantaneous deactivation.
//!
//! A chosen active site either falls asleep (probability `lambda/(1+lambda)`,
//! only for a lone particle on the settling set) or sends one particle on a
//! simple random walk that settles, asleep, on the first empty settling site
//! reached at a time `t >= 1`. Sleepers on the walk's path before that time
//! are woken when the sleep mask allows it.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{Graph, SiteId, SiteSet};
use crate::randomness::{derive_seed, InstructionField, InstructionSource, RandomStream};
use crate::ssm::{stabilize, SelectionPolicy, SsmState, StabilityMode, Status};

/// Per-walk step budget.
pub const WALK_BUDGET: u64 = 100_000_000;

/// A site value in `{0, s, 1, 2, ...}`. The derived order is `0 < s < 1 < 2 < ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Slot {
    #[default]
    Empty,
    Sleeping,
    /// `k >= 1` active particles.
    Active(u32),
}

impl Slot {
    /// Particle count, with a sleeper counting as one.
    #[inline]
    pub fn count(self) -> u32 {
        match self {
            Slot::Empty => 0,
            Slot::Sleeping => 1,
            Slot::Active(k) => k,
        }
    }

    #[inline]
    pub fn is_active(self) -> bool {
        matches!(self, Slot::Active(_))
    }

    pub(crate) fn remove_one(self) -> Slot {
        match self {
            Slot::Active(1) | Slot::Sleeping => Slot::Empty,
            Slot::Active(k) => Slot::Active(k - 1),
            Slot::Empty => unreachable!("removing from an empty site"),
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Empty => write!(f, "0"),
            Slot::Sleeping => write!(f, "s"),
            Slot::Active(k) => write!(f, "{k}"),
        }
    }
}

/// A configuration over `{0, s, 1, 2, ...}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArwdConfig {
    pub slots: Vec<Slot>,
}

impl ArwdConfig {
    pub fn empty(g: &Graph) -> Self {
        ArwdConfig { slots: vec![Slot::Empty; g.site_count()] }
    }

    pub fn from_slots(slots: Vec<Slot>) -> Self {
        debug_assert!(!slots.contains(&Slot::Active(0)));
        ArwdConfig { slots }
    }

    #[inline]
    pub fn get(&self, x: SiteId) -> Slot {
        self.slots[x.index()]
    }

    #[inline]
    pub fn set(&mut self, x: SiteId, v: Slot) {
        debug_assert_ne!(v, Slot::Active(0));
        self.slots[x.index()] = v;
    }

    pub fn total(&self) -> u64 {
        self.slots.iter().map(|s| s.count() as u64).sum()
    }

    pub fn is_stable(&self) -> bool {
        !self.slots.iter().any(|s| s.is_active())
    }

    pub fn active_sites(&self) -> impl Iterator<Item = SiteId> + '_ {
        self.slots.iter().enumerate().filter(|(_, s)| s.is_active()).map(|(i, _)| SiteId::from(i))
    }

    /// Pointwise order.
    pub fn le(&self, other: &ArwdConfig) -> bool {
        self.slots.iter().zip(&other.slots).all(|(a, b)| a <= b)
    }

    /// The configuration restricted to `set`, emptied elsewhere.
    pub fn restrict(&self, set: &SiteSet) -> ArwdConfig {
        let slots = self
            .slots
            .iter()
            .enumerate()
            .map(|(i, &s)| if set.contains(SiteId::from(i)) { s } else { Slot::Empty })
            .collect();
        ArwdConfig { slots }
    }

    /// `eta_U`: lone active particles on `set` fall asleep.
    pub fn put_to_sleep(&self, set: &SiteSet) -> ArwdConfig {
        let mut out = self.clone();
        for x in set.iter() {
            if out.get(x) == Slot::Active(1) {
                out.set(x, Slot::Sleeping);
            }
        }
        out
    }

    /// `eta^U`: sleepers on `set` wake up.
    pub fn wake(&self, set: &SiteSet) -> ArwdConfig {
        let mut out = self.clone();
        for x in set.iter() {
            if out.get(x) == Slot::Sleeping {
                out.set(x, Slot::Active(1));
            }
        }
        out
    }

    /// Every particle of an SSM configuration, active.
    pub fn from_ssm(s: &SsmState) -> ArwdConfig {
        ArwdConfig {
            slots: s.eta.iter().map(|&k| if k == 0 { Slot::Empty } else { Slot::Active(k) }).collect(),
        }
    }
}

impl fmt::Display for ArwdConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, s) in self.slots.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, ")")
    }
}

/// One particle on every site of `a`; active exactly on `u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetConfig {
    pub a: SiteSet,
    pub u: SiteSet,
}

impl SubsetConfig {
    pub fn new(a: SiteSet, u: SiteSet) -> Result<Self> {
        if !u.is_subset(&a) {
            return Err(Error::Precondition("active set must lie in the settling set".into()));
        }
        Ok(SubsetConfig { a, u })
    }

    pub fn to_config(&self) -> ArwdConfig {
        let slots = (0..self.a.universe())
            .map(SiteId::from)
            .map(|x| {
                if self.u.contains(x) {
                    Slot::Active(1)
                } else if self.a.contains(x) {
                    Slot::Sleeping
                } else {
                    Slot::Empty
                }
            })
            .collect();
        ArwdConfig { slots }
    }

    /// Checked inverse of [`SubsetConfig::to_config`].
    pub fn from_config(cfg: &ArwdConfig, a: &SiteSet) -> Result<Self> {
        let mut u = SiteSet::new(a.universe());
        for (i, &s) in cfg.slots.iter().enumerate() {
            let x = SiteId::from(i);
            match (a.contains(x), s) {
                (true, Slot::Active(1)) => {
                    u.insert(x);
                }
                (true, Slot::Sleeping) | (false, Slot::Empty) => {}
                _ => {
                    return Err(Error::Precondition(format!("site {x} holds {s}, not one particle per settling site")))
                }
            }
        }
        Ok(SubsetConfig { a: a.clone(), u })
    }
}

/// A history-dependent choice of the next active site. It is called once per
/// step `t` with the current configuration and the sites whose value changed
/// during the previous step (every site at `t = 0`), and must return an
/// active site or `None`.
pub trait TopplingStrategy {
    fn choose(&mut self, t: u64, cfg: &ArwdConfig, changed: &[SiteId]) -> Option<SiteId>;
}

/// Sites whose sleepers a walk may wake.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Wake {
    All,
    None,
    Sites(Arc<SiteSet>),
}

impl Wake {
    #[inline]
    pub fn allows(&self, x: SiteId) -> bool {
        match self {
            Wake::All => true,
            Wake::None => false,
            Wake::Sites(s) => s.contains(x),
        }
    }
}

/// A history-dependent sleep mask, queried after the strategy chose `x`.
pub trait SleepMask {
    fn mask(&mut self, t: u64, cfg: &ArwdConfig, x: SiteId) -> Wake;
}

/// The trivial mask: every sleeper may be woken.
#[derive(Debug, Clone, Copy, Default)]
pub struct WakeAll;

impl SleepMask for WakeAll {
    fn mask(&mut self, _: u64, _: &ArwdConfig, _: SiteId) -> Wake {
        Wake::All
    }
}

/// Picks the least active site, optionally within a region.
#[derive(Debug, Clone, Default)]
pub struct MinActive {
    pub within: Option<SiteSet>,
}

impl TopplingStrategy for MinActive {
    fn choose(&mut self, _: u64, cfg: &ArwdConfig, _: &[SiteId]) -> Option<SiteId> {
        match &self.within {
            None => cfg.active_sites().next(),
            Some(r) => r.iter().find(|&x| cfg.get(x).is_active()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArwdParams {
    pub lambda: f64,
    pub a: SiteSet,
}

impl ArwdParams {
    pub fn new(lambda: f64, a: SiteSet) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda = {lambda}")));
        }
        Ok(ArwdParams { lambda, a })
    }

    pub fn sleep_probability(&self) -> f64 {
        self.lambda / (1.0 + self.lambda)
    }
}

/// What one step did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepKind {
    Idle,
    Sleep,
    Walk { end: SiteId, length: u64, woken: Vec<SiteId> },
}

/// Source of walk steps: the stream, or a fixed instruction field consumed
/// in order at each site.
#[derive(Clone)]
enum Moves {
    Stream,
    Field { src: Arc<dyn InstructionSource + Send + Sync>, used: Vec<u64> },
}

/// A single-owner ARWD run.
#[derive(Clone)]
pub struct ArwdProcess<'g> {
    g: &'g Graph,
    params: ArwdParams,
    cfg: ArwdConfig,
    stream: RandomStream,
    moves: Moves,
    t: u64,
    hstar: Vec<u64>,
    changed: Vec<SiteId>,
    particles: u64,
}

impl<'g> ArwdProcess<'g> {
    pub fn new(g: &'g Graph, params: ArwdParams, cfg0: ArwdConfig, stream: RandomStream) -> Result<Self> {
        if cfg0.slots.len() != g.site_count() || params.a.universe() != g.site_count() {
            return Err(Error::InvalidParameter("configuration does not match the graph".into()));
        }
        let particles = cfg0.total();
        if particles != params.a.len() as u64 {
            return Err(Error::ParticleCount { expected: params.a.len() as u64, found: particles });
        }
        if g.sites().any(|x| g.is_halo(x)) {
            return Err(Error::Precondition("ARWD runs on graphs without an absorbing halo".into()));
        }
        let changed = g.sites().collect();
        Ok(ArwdProcess {
            g,
            params,
            hstar: vec![0; g.site_count()],
            cfg: cfg0,
            stream,
            moves: Moves::Stream,
            t: 0,
            changed,
            particles,
        })
    }

    /// Drives walks by `src` instead of the stream; sleep decisions still use the stream.
    pub fn with_instructions(mut self, src: Arc<dyn InstructionSource + Send + Sync>) -> Self {
        self.moves = Moves::Field { src, used: vec![0; self.g.site_count()] };
        self
    }

    pub fn config(&self) -> &ArwdConfig {
        &self.cfg
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    /// Steps at which each site was chosen.
    pub fn hstar(&self) -> &[u64] {
        &self.hstar
    }

    /// Sites whose value changed during the last step.
    pub fn changed(&self) -> &[SiteId] {
        &self.changed
    }

    /// Applies the kernel for the choice `x` and reactivation set `wake`.
    pub fn step(&mut self, x: Option<SiteId>, wake: &Wake) -> Result<StepKind> {
        self.changed.clear();
        let Some(x) = x else {
            return Ok(StepKind::Idle);
        };
        let here = self.cfg.get(x);
        if !here.is_active() {
            return Err(Error::StrategyReturnedStable(x));
        }
        self.t += 1;
        self.hstar[x.index()] += 1;
        let p = if self.params.a.contains(x) && here == Slot::Active(1) { self.params.sleep_probability() } else { 0.0 };
        if p > 0.0 && self.stream.uniform01() < p {
            self.cfg.set(x, Slot::Sleeping);
            self.changed.push(x);
            return Ok(StepKind::Sleep);
        }
        self.walk(x, wake)
    }

    /// The walk branch of the kernel for an active site `x`, taken unconditionally.
    pub fn force_walk(&mut self, x: SiteId, wake: &Wake) -> Result<StepKind> {
        self.changed.clear();
        if !self.cfg.get(x).is_active() {
            return Err(Error::StrategyReturnedStable(x));
        }
        self.t += 1;
        self.hstar[x.index()] += 1;
        self.walk(x, wake)
    }

    fn next_position(&mut self, pos: SiteId) -> Result<SiteId> {
        match &mut self.moves {
            Moves::Stream => {
                let nb = self.g.neighbors(pos)?;
                Ok(nb[self.stream.below(nb.len())])
            }
            Moves::Field { src, used } => {
                used[pos.index()] += 1;
                src.instruction(self.g, pos, used[pos.index()])
            }
        }
    }

    fn walk(&mut self, x: SiteId, wake: &Wake) -> Result<StepKind> {
        // Settling targets: empty sites of A once the walker has left x.
        // Waking never empties a site, so the target set is fixed for the walk.
        let after = self.cfg.get(x).remove_one();
        let is_target = |a: &SiteSet, cfg: &ArwdConfig, z: SiteId| {
            a.contains(z) && (if z == x { after } else { cfg.get(z) }) == Slot::Empty
        };
        if !self.params.a.iter().any(|z| is_target(&self.params.a, &self.cfg, z)) {
            return Err(Error::NoSettlingSite);
        }
        let mut woken = Vec::new();
        let mut pos = x;
        let mut length = 0u64;
        loop {
            if self.cfg.get(pos) == Slot::Sleeping && wake.allows(pos) {
                self.cfg.set(pos, Slot::Active(1));
                woken.push(pos);
            }
            pos = self.next_position(pos)?;
            length += 1;
            if is_target(&self.params.a, &self.cfg, pos) {
                break;
            }
            if length >= WALK_BUDGET {
                return Err(Error::WalkBudget(WALK_BUDGET));
            }
        }
        self.cfg.set(x, after);
        debug_assert_eq!(self.cfg.get(pos), Slot::Empty);
        self.cfg.set(pos, Slot::Sleeping);
        self.changed.push(x);
        if pos != x {
            self.changed.push(pos);
        }
        self.changed.extend_from_slice(&woken);
        debug_assert_eq!(self.cfg.total(), self.particles);
        Ok(StepKind::Walk { end: pos, length, woken })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Stabilised,
    Capped,
}

#[derive(Debug, Clone)]
pub struct ArwdRun {
    /// First `t` at which the strategy returned `None`.
    pub t: u64,
    pub hstar: Vec<u64>,
    pub last: ArwdConfig,
    pub status: RunStatus,
}

/// Runs until the strategy halts or `cap` steps have been taken.
pub fn run_arwd(
    g: &Graph,
    params: ArwdParams,
    f: &mut impl TopplingStrategy,
    mask: &mut impl SleepMask,
    cfg0: ArwdConfig,
    stream: RandomStream,
    cap: u64,
) -> Result<ArwdRun> {
    let mut proc = ArwdProcess::new(g, params, cfg0, stream)?;
    loop {
        let t = proc.time();
        let choice = f.choose(t, proc.config(), proc.changed());
        let Some(x) = choice else {
            return Ok(ArwdRun { t, hstar: proc.hstar, last: proc.cfg, status: RunStatus::Stabilised });
        };
        if t >= cap {
            return Ok(ArwdRun { t, hstar: proc.hstar, last: proc.cfg, status: RunStatus::Capped });
        }
        let wake = mask.mask(t, proc.config(), x);
        proc.step(Some(x), &wake)?;
    }
}

/// Checks the standing hypotheses of the SSM/ARWD comparison.
pub fn check_comparison_sets(g: &Graph, a: &SiteSet, b: &SiteSet) -> Result<()> {
    if !b.is_subset(a) {
        return Err(Error::Precondition("B must be a subset of A".into()));
    }
    if g.max_degree() < 2 {
        return Err(Error::Precondition("maximal degree must be at least 2".into()));
    }
    for x in b.iter() {
        if g.degree(x) < 2 {
            return Err(Error::Precondition(format!("site {x} of B has degree below 2")));
        }
        if g.adjacent(x).iter().any(|&y| b.contains(y)) {
            return Err(Error::Precondition(format!("B is not totally disconnected at {x}")));
        }
    }
    Ok(())
}

/// `eta~ = 1_U + s 1_{A \ U}` with `U = {x in A : eta(x) >= 2}`.
pub fn arwd_image(s: &SsmState, a: &SiteSet) -> ArwdConfig {
    let slots = (0..s.eta.len())
        .map(SiteId::from)
        .map(|x| match (a.contains(x), s.eta(x) >= 2) {
            (true, true) => Slot::Active(1),
            (true, false) => Slot::Sleeping,
            _ => Slot::Empty,
        })
        .collect();
    ArwdConfig { slots }
}

/// Paired samples of the SSM A-stabilisation length and the ARWD time on B.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DominationSamples {
    pub ssm: Vec<u64>,
    pub arwd: Vec<u64>,
    /// Trials whose A-stabilisation hit the cap.
    pub excluded: usize,
}

/// Setup for the SSM/ARWD comparison with `lambda = Delta^3`.
#[derive(Debug, Clone)]
pub struct Domination<'g> {
    g: &'g Graph,
    a: SiteSet,
    b: SiteSet,
    eta: SsmState,
    lambda: f64,
    cap: u64,
}

impl<'g> Domination<'g> {
    pub fn new(g: &'g Graph, a: SiteSet, b: SiteSet, eta: SsmState, cap: u64) -> Result<Self> {
        check_comparison_sets(g, &a, &b)?;
        if eta.total() != a.len() as u64 {
            return Err(Error::ParticleCount { expected: a.len() as u64, found: eta.total() });
        }
        let lambda = (g.max_degree() as f64).powi(3);
        Ok(Domination { g, a, b, eta, lambda, cap })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `||m^A_eta||` with a fresh field; `None` if capped.
    pub fn ssm_trial(&self, seed: u64, i: u64) -> Result<Option<u64>> {
        let field = InstructionField::new(derive_seed(seed, "domination-ssm", i));
        let out = stabilize(
            self.g,
            &self.eta,
            &self.g.interior(),
            &StabilityMode::AStab(self.a.clone()),
            &field,
            SelectionPolicy::Lexicographic,
            self.cap,
        )?;
        Ok((out.status == Status::Stable).then(|| out.odometer.norm()))
    }

    /// `T(B, f, eta~ 1_B)` with the least-active-site strategy.
    pub fn arwd_trial(&self, seed: u64, i: u64) -> Result<u64> {
        let cfg0 = arwd_image(&self.eta, &self.a).restrict(&self.b);
        let params = ArwdParams::new(self.lambda, self.b.clone())?;
        let stream = RandomStream::substream(seed, "domination-arwd", i);
        let run = run_arwd(self.g, params, &mut MinActive::default(), &mut WakeAll, cfg0, stream, u64::MAX)?;
        Ok(run.t)
    }

    pub fn run(&self, trials: usize, seed: u64) -> Result<DominationSamples> {
        let mut out = DominationSamples::default();
        for i in 0..trials as u64 {
            match self.ssm_trial(seed, i)? {
                Some(v) => out.ssm.push(v),
                None => out.excluded += 1,
            }
            out.arwd.push(self.arwd_trial(seed, i)?);
        }
        Ok(out)
    }
}
