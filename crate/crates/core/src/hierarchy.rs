//! Dormitory hierarchies on the two-dimensional torus, the ping-pong toppling
//! strategy they induce, and the colour-dependent sleep mask.
//!
//! A cluster keeps its id while it is carried unchanged from one level to the
//! next, so `levels[j]` lists ids and a site's clusters form a short chain.
//! Distances are torus sup-norm distances throughout.

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

use serde::Serialize;

use crate::arwd::{ArwdConfig, SleepMask, TopplingStrategy, Wake};
use crate::error::{Error, Result};
use crate::lattice::{Graph, Metric, SiteId, SiteSet};
use crate::randomness::RandomStream;

pub type ClusterId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub sites: SiteSet,
    /// First level containing this cluster.
    pub level: usize,
    pub distinguished: SiteId,
    /// `(C0, C1)` with `C0` the child holding the distinguished vertex.
    pub children: Option<(ClusterId, ClusterId)>,
    pub parent: Option<ClusterId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    pub a: SiteSet,
    pub v: usize,
    /// Connectivity radius of level-0 clusters; `None` for the trivial hierarchy.
    pub r: Option<usize>,
    /// Merge diameters `D_0, ..., D_{L-1}`.
    pub diameters: Vec<usize>,
    pub clusters: Vec<Cluster>,
    pub levels: Vec<Vec<ClusterId>>,
    /// `cluster_of[j][x]` is `C_j(x)`.
    cluster_of: Vec<Vec<Option<ClusterId>>>,
    side: usize,
}

/// `r = 2 floor(sqrt(2v / mu))`.
pub fn connectivity_radius(v: usize, mu: f64) -> usize {
    2 * (2.0 * v as f64 / mu).sqrt().floor() as usize
}

/// `D_j = 6^j * 12 v r`.
pub fn merge_diameter(j: usize, v: usize, r: usize) -> usize {
    6usize.saturating_pow(j as u32).saturating_mul(12 * v * r)
}

fn torus_side(g: &Graph) -> Result<usize> {
    match g.kind() {
        crate::lattice::GraphKind::Torus { n, d: 2 } => Ok(n),
        other => Err(Error::NotATorus(format!("{other} (hierarchies need a two-dimensional torus)"))),
    }
}

fn cross_diameter(g: &Graph, a: &SiteSet, b: &SiteSet) -> usize {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| (x, y)))
        .map(|(x, y)| g.torus_distance(x, y).expect("torus"))
        .max()
        .unwrap_or(0)
}

impl Hierarchy {
    /// The hierarchy of the two-dimensional construction: level 0 holds the
    /// `r`-components of size at least `v`, and each level merges pairs
    /// greedily by smallest union diameter.
    pub fn build(g: &Graph, a: &SiteSet, v: usize, mu: f64) -> Result<Hierarchy> {
        let n = torus_side(g)?;
        if !(mu > 0.0 && mu < 1.0) || v == 0 {
            return Err(Error::InvalidParameter(format!("hierarchy needs mu in (0,1) and v >= 1, got mu={mu} v={v}")));
        }
        let r = connectivity_radius(v, mu);
        if (a.len() as f64) < mu * (n * n) as f64 {
            return Err(Error::Precondition(format!("|A| = {} is below mu n^2 = {}", a.len(), mu * (n * n) as f64)));
        }
        if n < r + 1 {
            return Err(Error::Precondition(format!("n = {n} is below r + 1 = {}", r + 1)));
        }
        Self::build_with(g, a, v, r)
    }

    /// The same construction with an explicit radius and no density check.
    pub fn build_with(g: &Graph, a: &SiteSet, v: usize, r: usize) -> Result<Hierarchy> {
        let n = torus_side(g)?;
        if r == 0 || v == 0 {
            return Err(Error::InvalidParameter("hierarchy needs r >= 1 and v >= 1".into()));
        }
        if a.is_empty() {
            return Err(Error::EmptySet("settling set"));
        }
        let mut clusters: Vec<Cluster> = g
            .r_components(a, r, Metric::Sup)?
            .into_iter()
            .filter(|c| c.len() >= v)
            .map(|sites| Cluster { distinguished: sites.min().expect("non-empty"), sites, level: 0, children: None, parent: None })
            .collect();
        if clusters.is_empty() {
            return Err(Error::Hierarchy(format!("no r-component of A reaches v = {v} sites")));
        }
        let mut diam: Vec<usize> = clusters.iter().map(|c| g.diameter(&c.sites, Metric::Sup)).collect::<Result<_>>()?;
        let mut levels = vec![(0..clusters.len()).collect::<Vec<_>>()];
        let mut diameters = Vec::new();
        while levels.last().expect("level 0").len() > 1 {
            let j = levels.len() - 1;
            if j >= 64 {
                return Err(Error::Hierarchy("merging did not terminate".into()));
            }
            let dj = merge_diameter(j, v, r);
            let current = levels[j].clone();
            let mut pairs = Vec::new();
            for (i, &c0) in current.iter().enumerate() {
                for &c1 in &current[i + 1..] {
                    let d = diam[c0].max(diam[c1]).max(cross_diameter(g, &clusters[c0].sites, &clusters[c1].sites));
                    if d <= dj {
                        pairs.push((d, c0, c1));
                    }
                }
            }
            pairs.sort_unstable();
            let mut merged = vec![false; clusters.len()];
            let mut next = Vec::new();
            for (d, p, q) in pairs {
                if merged[p] || merged[q] {
                    continue;
                }
                merged[p] = true;
                merged[q] = true;
                let (cp, cq) = (&clusters[p], &clusters[q]);
                // The larger child wins; ties go to the child with the smaller least site.
                let p_wins = (cp.sites.len(), std::cmp::Reverse(cp.sites.min())) >= (cq.sites.len(), std::cmp::Reverse(cq.sites.min()));
                let (c0, c1) = if p_wins { (p, q) } else { (q, p) };
                let id = clusters.len();
                clusters.push(Cluster {
                    sites: clusters[c0].sites.union(&clusters[c1].sites),
                    level: j + 1,
                    distinguished: clusters[c0].distinguished,
                    children: Some((c0, c1)),
                    parent: None,
                });
                clusters[c0].parent = Some(id);
                clusters[c1].parent = Some(id);
                diam.push(d);
                next.push(id);
            }
            let next_level = j + 1;
            let floor = (1usize << (next_level / 2)) * v;
            next.extend(current.iter().copied().filter(|&c| !merged[c] && clusters[c].sites.len() >= floor));
            if next.is_empty() {
                return Err(Error::Hierarchy(format!("every cluster was dropped at level {}", j + 1)));
            }
            next.sort_unstable_by_key(|&c| clusters[c].sites.min());
            diameters.push(dj);
            levels.push(next);
        }
        let h = Self::assemble(a.clone(), v, Some(r), diameters, clusters, levels, n);
        h.validate(g)?;
        Ok(h)
    }

    /// One level with the single cluster `A`.
    pub fn trivial(g: &Graph, a: &SiteSet) -> Result<Hierarchy> {
        let n = torus_side(g)?;
        let xstar = a.min().ok_or(Error::EmptySet("settling set"))?;
        let cluster = Cluster { sites: a.clone(), level: 0, distinguished: xstar, children: None, parent: None };
        Ok(Self::assemble(a.clone(), a.len(), None, Vec::new(), vec![cluster], vec![vec![0]], n))
    }

    fn assemble(
        a: SiteSet,
        v: usize,
        r: Option<usize>,
        diameters: Vec<usize>,
        clusters: Vec<Cluster>,
        levels: Vec<Vec<ClusterId>>,
        side: usize,
    ) -> Hierarchy {
        let cluster_of = levels
            .iter()
            .map(|ids| {
                let mut of = vec![None; a.universe()];
                for &c in ids {
                    for x in clusters[c].sites.iter() {
                        of[x.index()] = Some(c);
                    }
                }
                of
            })
            .collect();
        Hierarchy { a, v, r, diameters, clusters, levels, cluster_of, side }
    }

    /// Index of the top level.
    pub fn top_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn top(&self) -> ClusterId {
        self.levels[self.top_level()][0]
    }

    /// `A_j`.
    pub fn level_set(&self, j: usize) -> SiteSet {
        self.levels[j].iter().fold(SiteSet::new(self.a.universe()), |acc, &c| acc.union(&self.clusters[c].sites))
    }

    /// `C_j(x)`, or `None` when `x` is outside `A_j` or `j > L`.
    pub fn cluster_at(&self, j: usize, x: SiteId) -> Option<ClusterId> {
        self.cluster_of.get(j).and_then(|of| of[x.index()])
    }

    pub fn is_distinguished(&self, j: usize, x: SiteId) -> bool {
        self.cluster_at(j, x).is_some_and(|c| self.clusters[c].distinguished == x)
    }

    /// Distinct clusters containing `x`, from level 0 upward.
    fn chain(&self, x: SiteId) -> Vec<ClusterId> {
        let mut out = Vec::new();
        let mut c = self.cluster_at(0, x);
        while let Some(id) = c {
            out.push(id);
            c = self.clusters[id].parent;
        }
        out
    }

    /// Checks every structural invariant independently of the construction.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        let fail = |msg: String| Err(Error::Hierarchy(msg));
        let mut previous = self.a.clone();
        for (j, ids) in self.levels.iter().enumerate() {
            if ids.is_empty() {
                return fail(format!("level {j} is empty"));
            }
            let mut union = SiteSet::new(self.a.universe());
            for &c in ids {
                let cl = &self.clusters[c];
                if !cl.sites.is_disjoint(&union) {
                    return fail(format!("clusters of level {j} overlap"));
                }
                union = union.union(&cl.sites);
                let floor = (1usize << (j / 2)) * self.v;
                if cl.sites.len() < floor {
                    return fail(format!("(i): cluster {c} at level {j} has {} < {floor} sites", cl.sites.len()));
                }
                if !cl.sites.contains(cl.distinguished) {
                    return fail(format!("cluster {c} does not contain its distinguished vertex"));
                }
                if j > 0 && !self.levels[j - 1].contains(&c) {
                    let Some((c0, c1)) = cl.children else {
                        return fail(format!("(ii): new cluster {c} at level {j} has no children"));
                    };
                    if !self.levels[j - 1].contains(&c0) || !self.levels[j - 1].contains(&c1) {
                        return fail(format!("(ii): children of cluster {c} are not at level {}", j - 1));
                    }
                    let (k0, k1) = (&self.clusters[c0], &self.clusters[c1]);
                    if k0.sites.union(&k1.sites) != cl.sites || !k0.sites.is_disjoint(&k1.sites) {
                        return fail(format!("(ii): cluster {c} is not the union of its children"));
                    }
                    let d = g.diameter(&cl.sites, Metric::Sup)?;
                    if d > self.diameters[j - 1] {
                        return fail(format!("(ii): cluster {c} has diameter {d} > {}", self.diameters[j - 1]));
                    }
                    let bigger = (k0.sites.len(), std::cmp::Reverse(k0.sites.min()))
                        >= (k1.sites.len(), std::cmp::Reverse(k1.sites.min()));
                    if cl.distinguished != k0.distinguished || !bigger {
                        return fail(format!("cluster {c} does not inherit from its larger child"));
                    }
                }
                if j == 0 {
                    if cl.distinguished != cl.sites.min().expect("non-empty") {
                        return fail(format!("level-0 cluster {c} is not led by its least site"));
                    }
                    if let Some(r) = self.r {
                        if g.r_components(&cl.sites, r, Metric::Sup)?.len() != 1 {
                            return fail(format!("level-0 cluster {c} is not {r}-connected"));
                        }
                    }
                }
            }
            if !union.is_subset(&previous) {
                return fail(format!("A_{j} is not contained in the previous level"));
            }
            previous = union;
        }
        if self.levels[self.top_level()].len() != 1 {
            return fail("(iii): the top level has more than one cluster".into());
        }
        if 4 * previous.len() < self.a.len() {
            return fail(format!("|A_L| = {} is below |A|/4 = {}", previous.len(), self.a.len() as f64 / 4.0));
        }
        Ok(())
    }

    /// Tree dump: one node per cluster.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Node {
            level: usize,
            cluster_id: ClusterId,
            sites: Vec<u32>,
            distinguished: u32,
            parent: Option<ClusterId>,
        }
        let nodes: Vec<Node> = self
            .levels
            .iter()
            .flatten()
            .copied()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .map(|c| {
                let cl = &self.clusters[c];
                Node {
                    level: cl.level,
                    cluster_id: c,
                    sites: cl.sites.iter().map(|x| x.0).collect(),
                    distinguished: cl.distinguished.0,
                    parent: cl.parent,
                }
            })
            .collect();
        serde_json::to_string(&nodes).expect("serialisable")
    }
}

/// Settings of the level-0 toppling procedures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcedureParams {
    /// Radius of the sleeper ball, `16 v r` by default.
    pub radius: usize,
    pub beta: f64,
    pub v: usize,
}

impl ProcedureParams {
    pub fn for_hierarchy(h: &Hierarchy, beta: f64) -> ProcedureParams {
        let radius = h.r.map_or(h.side, |r| 16 * h.v * r);
        ProcedureParams { radius, beta, v: h.v }
    }
}

/// Outcome of one toppling-procedure query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProcedureChoice {
    pub site: SiteId,
    /// Whether the sleeper-ball bound was checkable and held; `None` when
    /// the distinguished vertex was chosen or `|U| > beta |C|`.
    pub bound_holds: Option<bool>,
}

/// The level-0 procedure `p_C`: the distinguished vertex when active, else
/// the active site with most sleepers of `C` in its ball (least site on ties).
pub fn toppling_procedure(
    g: &Graph,
    c: &SiteSet,
    xstar: SiteId,
    u: &SiteSet,
    params: &ProcedureParams,
) -> Result<ProcedureChoice> {
    let first = u.min().ok_or(Error::EmptySet("active set of the toppling procedure"))?;
    if u.contains(xstar) {
        return Ok(ProcedureChoice { site: xstar, bound_holds: None });
    }
    let side = g.torus_side().ok_or_else(|| Error::NotATorus(g.kind().to_string()))?;
    let sleepers = c.difference(u);
    let (site, score) = if params.radius >= side / 2 {
        (first, sleepers.len())
    } else {
        let score = |y: SiteId| {
            sleepers.iter().filter(|&z| g.torus_distance(y, z).expect("torus") <= params.radius).count()
        };
        u.iter().map(|y| (y, score(y))).fold((first, 0), |best, (y, s)| if s > best.1 { (y, s) } else { best })
    };
    let checkable = u.len() as f64 <= params.beta * c.len() as f64;
    let bound_holds = checkable.then_some(score as f64 >= (1.0 - params.beta) * params.v as f64);
    Ok(ProcedureChoice { site, bound_holds })
}

/// Per-run bookkeeping shared by the strategy and the mask.
#[derive(Debug)]
struct Tracker {
    chains: Vec<Vec<ClusterId>>,
    active: Vec<bool>,
    count: Vec<usize>,
    last_stable: Vec<Option<u64>>,
    ever_stable: Vec<bool>,
    started: bool,
}

impl Tracker {
    fn new(h: &Hierarchy) -> Self {
        let n = h.a.universe();
        Tracker {
            chains: (0..n).map(|i| h.chain(SiteId::from(i))).collect(),
            active: vec![false; n],
            count: vec![0; h.clusters.len()],
            last_stable: vec![None; h.clusters.len()],
            ever_stable: vec![false; h.clusters.len()],
            started: false,
        }
    }

    fn observe(&mut self, t: u64, cfg: &ArwdConfig, changed: &[SiteId]) {
        let flip = |x: SiteId, tr: &mut Tracker| {
            let now = cfg.get(x).is_active();
            if now != tr.active[x.index()] {
                tr.active[x.index()] = now;
                for &c in &tr.chains[x.index()] {
                    if now {
                        tr.count[c] += 1;
                    } else {
                        tr.count[c] -= 1;
                    }
                }
            }
        };
        if self.started {
            for &x in changed {
                flip(x, self);
            }
        } else {
            self.started = true;
            for i in 0..self.active.len() {
                flip(SiteId::from(i), self);
            }
        }
        for c in 0..self.count.len() {
            if self.count[c] == 0 {
                self.last_stable[c] = Some(t);
                self.ever_stable[c] = true;
            }
        }
    }
}

/// The ping-pong strategy `f` of the top cluster.
pub struct HierarchyStrategy<'h> {
    g: &'h Graph,
    h: &'h Hierarchy,
    params: ProcedureParams,
    tracker: Rc<RefCell<Tracker>>,
    /// Queries where the sleeper-ball bound was checkable and failed.
    pub bound_violations: u64,
    pub bound_checks: u64,
}

impl HierarchyStrategy<'_> {
    fn descend(&mut self, cfg: &ArwdConfig, mut c: ClusterId) -> Option<SiteId> {
        let tr = self.tracker.borrow();
        if tr.count[c] == 0 {
            return None;
        }
        while let Some((c0, c1)) = self.h.clusters[c].children {
            c = if tr.last_stable[c0] <= tr.last_stable[c1] { c0 } else { c1 };
        }
        drop(tr);
        let cl = &self.h.clusters[c];
        let u = SiteSet::from_sites(cfg.slots.len(), cl.sites.iter().filter(|&x| cfg.get(x).is_active()));
        if u.is_empty() {
            return None;
        }
        let choice = toppling_procedure(self.g, &cl.sites, cl.distinguished, &u, &self.params).expect("non-empty");
        if let Some(ok) = choice.bound_holds {
            self.bound_checks += 1;
            self.bound_violations += (!ok) as u64;
        }
        Some(choice.site)
    }
}

impl TopplingStrategy for HierarchyStrategy<'_> {
    fn choose(&mut self, t: u64, cfg: &ArwdConfig, changed: &[SiteId]) -> Option<SiteId> {
        self.tracker.borrow_mut().observe(t, cfg, changed);
        let top = self.h.top();
        let x = self.descend(cfg, top);
        debug_assert!(x.is_none_or(|x| cfg.get(x).is_active()));
        x
    }
}

/// Colours `j_t` with `1 + j_t ~ Geom(1/2)`, drawn lazily or fixed.
#[derive(Debug, Clone)]
pub struct ColorSequence {
    stream: Option<RandomStream>,
    values: Vec<u64>,
}

impl ColorSequence {
    pub fn random(stream: RandomStream) -> Self {
        ColorSequence { stream: Some(stream), values: Vec::new() }
    }

    /// A fixed sequence; times past its end get colour 0.
    pub fn fixed(values: Vec<u64>) -> Self {
        ColorSequence { stream: None, values }
    }

    pub fn get(&mut self, t: u64) -> u64 {
        let t = t as usize;
        if let Some(s) = &mut self.stream {
            while self.values.len() <= t {
                self.values.push(s.geometric(0.5).expect("valid parameter") - 1);
            }
        }
        self.values.get(t).copied().unwrap_or(0)
    }
}

/// Which branch of the mask applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskCase {
    /// Distinguished one level up and its cluster was never stable: no waking.
    FirstRally,
    /// Distinguished at the colour level: the sibling part of the parent.
    Sibling,
    /// Distinguished at level 0 only below the colour: no waking.
    LowRank,
    /// Not distinguished: its own level-0 cluster.
    Local,
}

/// The sleep mask `g^j` for a colour sequence.
pub struct HierarchySleepMask<'h> {
    h: &'h Hierarchy,
    colors: ColorSequence,
    tracker: Rc<RefCell<Tracker>>,
    level0: Vec<Arc<SiteSet>>,
    /// Last case applied, for diagnostics.
    pub last_case: Option<MaskCase>,
}

impl HierarchySleepMask<'_> {
    /// Classifies `(x, j)`; `ever_stable` reports whether `C_j(x)` was ever stable.
    pub fn classify(h: &Hierarchy, x: SiteId, j: usize, ever_stable: impl Fn(ClusterId) -> bool) -> MaskCase {
        let first = h.is_distinguished(j + 1, x) && !h.cluster_at(j, x).is_some_and(&ever_stable);
        let sibling = !first && h.is_distinguished(j, x);
        let low = h.is_distinguished(0, x) && !h.is_distinguished(j, x);
        let local = !h.is_distinguished(0, x);
        let hits = [first, sibling, low, local];
        assert_eq!(hits.iter().filter(|&&b| b).count(), 1, "mask cases overlap or miss at {x} colour {j}");
        match hits.iter().position(|&b| b) {
            Some(0) => MaskCase::FirstRally,
            Some(1) => MaskCase::Sibling,
            Some(2) => MaskCase::LowRank,
            _ => MaskCase::Local,
        }
    }
}

impl SleepMask for HierarchySleepMask<'_> {
    fn mask(&mut self, t: u64, _: &ArwdConfig, x: SiteId) -> Wake {
        let j = self.colors.get(t) as usize;
        let tr = self.tracker.borrow();
        let case = Self::classify(self.h, x, j, |c| tr.ever_stable[c]);
        self.last_case = Some(case);
        match case {
            MaskCase::FirstRally | MaskCase::LowRank => Wake::None,
            MaskCase::Sibling => match (self.h.cluster_at(j + 1, x), self.h.cluster_at(j, x)) {
                (Some(up), Some(here)) if up != here => {
                    Wake::Sites(Arc::new(self.h.clusters[up].sites.difference(&self.h.clusters[here].sites)))
                }
                _ => Wake::None,
            },
            MaskCase::Local => match self.h.cluster_at(0, x) {
                Some(c) => Wake::Sites(self.level0[c].clone()),
                None => Wake::None,
            },
        }
    }
}

/// A strategy and mask pair sharing one tracker, for a single run.
pub fn hierarchy_dynamics<'h>(
    g: &'h Graph,
    h: &'h Hierarchy,
    params: ProcedureParams,
    colors: ColorSequence,
) -> (HierarchyStrategy<'h>, HierarchySleepMask<'h>) {
    let tracker = Rc::new(RefCell::new(Tracker::new(h)));
    let level0 = (0..h.clusters.len()).map(|c| Arc::new(h.clusters[c].sites.clone())).collect();
    (
        HierarchyStrategy { g, h, params, tracker: tracker.clone(), bound_violations: 0, bound_checks: 0 },
        HierarchySleepMask { h, colors, tracker, level0, last_case: None },
    )
}

/// The strategy evaluated straight from its definition on a history of
/// active sets `U_0, ..., U_t`, scanning for the last stable times.
pub fn literal_strategy_choice(
    g: &Graph,
    h: &Hierarchy,
    params: &ProcedureParams,
    history: &[SiteSet],
) -> Result<Option<SiteId>> {
    let ut = history.last().ok_or(Error::EmptySet("history"))?;
    let last_stable = |c: ClusterId| history.iter().rposition(|u| u.is_disjoint(&h.clusters[c].sites));
    let mut c = h.top();
    while let Some((c0, c1)) = h.clusters[c].children {
        c = if last_stable(c0) <= last_stable(c1) { c0 } else { c1 };
    }
    let cl = &h.clusters[c];
    let u = ut.intersection(&cl.sites);
    if u.is_empty() {
        return Ok(None);
    }
    Ok(Some(toppling_procedure(g, &cl.sites, cl.distinguished, &u, params)?.site))
}

/// One level of the parameter pack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelParameters {
    pub j: usize,
    pub alpha: f64,
    pub diameter: f64,
    pub p: f64,
    /// Right side of the bound on `p_j`.
    pub p_bound: f64,
    pub p_ok: bool,
    /// `2^{j/2+2} v`.
    pub growth_lhs: f64,
    /// `p_j^6 Upsilon_2(D_j) exp((alpha_j - alpha_{j+1}) 2^{j/2} v)` with
    /// `Upsilon_2(D) >= K / ln D`.
    pub growth_rhs: f64,
    pub growth_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterPack {
    pub lambda: f64,
    pub mu: f64,
    pub v: usize,
    pub pbar: f64,
    pub k_upsilon: f64,
    pub p: f64,
    pub r: usize,
    pub kappa: f64,
    pub beta: f64,
    pub levels: Vec<LevelParameters>,
}

impl ParameterPack {
    /// Evaluates the parameter formulas and their feasibility conditions for
    /// levels `0..levels`. Nothing is enforced.
    pub fn new(lambda: f64, mu: f64, v: usize, pbar: f64, k_upsilon: f64, levels: usize) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0 && lambda >= 0.0 && pbar > 0.0 && pbar < 1.0 && v >= 1 && k_upsilon > 0.0) {
            return Err(Error::InvalidParameter("parameter pack needs mu in (0,1), lambda >= 0, pbar in (0,1), v >= 1, K > 0".into()));
        }
        let p = pbar.min(mu.sqrt() / 384.0).min(1.0 / (2.0 * (1.0 + lambda)));
        let r = connectivity_radius(v, mu);
        let vf = v as f64;
        let alpha = |j: usize| (1.0 + 2f64.powf(-(j as f64) / 4.0)) / (2.0 * vf.sqrt());
        let d = 2;
        let levels = (0..levels)
            .map(|j| {
                let diameter = 6f64.powi(j as i32) * 12.0 * vf * r as f64;
                let pj = p / (6f64.powi(j as i32) * vf.powf(1.5));
                let p_bound = pbar
                    .min(1.0 / (2f64.powi(j as i32 + 1) * (1.0 + lambda)))
                    .min((32.0 * alpha(j) * (diameter + 1.0).powi(d)).powf(-0.5));
                let growth_lhs = 2f64.powf(j as f64 / 2.0 + 2.0) * vf;
                let upsilon = k_upsilon / diameter.ln();
                let growth_rhs =
                    pj.powi(6) * upsilon * ((alpha(j) - alpha(j + 1)) * 2f64.powf(j as f64 / 2.0) * vf).exp();
                LevelParameters {
                    j,
                    alpha: alpha(j),
                    diameter,
                    p: pj,
                    p_bound,
                    p_ok: pj <= p_bound,
                    growth_lhs,
                    growth_rhs,
                    growth_ok: growth_lhs <= growth_rhs,
                }
            })
            .collect();
        Ok(ParameterPack {
            lambda,
            mu,
            v,
            pbar,
            k_upsilon,
            p,
            r,
            kappa: alpha(0) * mu / 8.0,
            beta: crate::analysis::rho0() / 2.0,
            levels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arwd::{run_arwd, ArwdParams, RunStatus, Slot};

    fn at(g: &Graph, x: i32, y: i32) -> SiteId {
        g.site_at(&[x, y]).unwrap()
    }

    fn set(g: &Graph, pts: &[(i32, i32)]) -> SiteSet {
        SiteSet::from_sites(g.site_count(), pts.iter().map(|&(x, y)| at(g, x, y)))
    }

    #[test]
    fn radius_and_diameter_formulas() {
        assert_eq!(connectivity_radius(2, 0.5), 4);
        assert_eq!(merge_diameter(0, 2, 4), 96);
        assert_eq!(merge_diameter(2, 2, 4), 36 * 96);
    }

    #[test]
    fn one_blob_gives_a_single_level() {
        let g = Graph::torus(8, 2).unwrap();
        let a = set(&g, &[(0, 0), (0, 1), (1, 1)]);
        let h = Hierarchy::build_with(&g, &a, 2, 2).unwrap();
        assert_eq!(h.top_level(), 0);
        assert_eq!(h.clusters[h.top()].sites, a);
        assert_eq!(h.clusters[h.top()].distinguished, a.min().unwrap());
    }

    #[test]
    fn two_far_blobs_merge_once() {
        let g = Graph::torus(24, 2).unwrap();
        let a = set(&g, &[(0, 0), (0, 1), (0, 7), (0, 8), (0, 9)]);
        let h = Hierarchy::build_with(&g, &a, 2, 2).unwrap();
        assert_eq!(h.top_level(), 1);
        let top = &h.clusters[h.top()];
        let (c0, c1) = top.children.unwrap();
        assert_eq!(h.clusters[c0].sites.len(), 3);
        assert_eq!(h.clusters[c1].sites.len(), 2);
        assert_eq!(top.distinguished, at(&g, 0, 7));
        h.validate(&g).unwrap();
    }

    #[test]
    fn validator_rejects_a_tampered_hierarchy() {
        let g = Graph::torus(24, 2).unwrap();
        let a = set(&g, &[(0, 0), (0, 1), (0, 7), (0, 8)]);
        let mut h = Hierarchy::build_with(&g, &a, 2, 2).unwrap();
        let top = h.top();
        h.clusters[top].distinguished = at(&g, 0, 8);
        assert!(matches!(h.validate(&g), Err(Error::Hierarchy(_))));
    }

    #[test]
    fn small_components_are_dropped() {
        let g = Graph::torus(24, 2).unwrap();
        let a = set(&g, &[(0, 0), (0, 1), (0, 2), (10, 10)]);
        let h = Hierarchy::build_with(&g, &a, 2, 2).unwrap();
        assert_eq!(h.level_set(0).len(), 3);
        assert!(Hierarchy::build_with(&g, &set(&g, &[(0, 0)]), 2, 2).is_err());
    }

    #[test]
    fn build_checks_density() {
        let g = Graph::torus(24, 2).unwrap();
        let a = set(&g, &[(0, 0), (0, 1)]);
        assert!(matches!(Hierarchy::build(&g, &a, 2, 0.5), Err(Error::Precondition(_))));
        let full = SiteSet::full(g.site_count());
        let h = Hierarchy::build(&g, &full, 2, 0.5).unwrap();
        assert_eq!(h.top_level(), 0);
    }

    #[test]
    fn trivial_hierarchy() {
        let g = Graph::torus(5, 2).unwrap();
        let a = set(&g, &[(1, 1)]);
        let h = Hierarchy::trivial(&g, &a).unwrap();
        assert_eq!(h.clusters[0].distinguished, at(&g, 1, 1));
        h.validate(&g).unwrap();
        assert!(Hierarchy::trivial(&g, &SiteSet::new(25)).is_err());
    }

    #[test]
    fn procedure_prefers_distinguished_then_sleepers() {
        let g = Graph::torus(20, 2).unwrap();
        let c = set(&g, &[(0, 0), (0, 1), (5, 5), (5, 6), (5, 7), (9, 9)]);
        let params = ProcedureParams { radius: 2, beta: 0.5, v: 2 };
        let xstar = at(&g, 0, 0);
        let u = set(&g, &[(0, 0), (9, 9)]);
        assert_eq!(toppling_procedure(&g, &c, xstar, &u, &params).unwrap().site, xstar);
        // (5, 5) has two sleepers nearby, (0, 1) has one.
        let u = set(&g, &[(0, 1), (5, 5)]);
        let choice = toppling_procedure(&g, &c, xstar, &u, &params).unwrap();
        assert_eq!(choice.site, at(&g, 5, 5));
        assert_eq!(choice.bound_holds, Some(true));
        // No sleepers: every score is zero and the least site wins.
        let u = c.difference(&set(&g, &[(0, 0)]));
        assert_eq!(toppling_procedure(&g, &c, xstar, &u, &params).unwrap().site, at(&g, 0, 1));
        assert!(toppling_procedure(&g, &c, xstar, &SiteSet::new(400), &params).is_err());
    }

    #[test]
    fn strategy_switches_to_the_unstable_child() {
        let g = Graph::torus(24, 2).unwrap();
        let a = set(&g, &[(0, 0), (0, 1), (0, 2), (0, 8), (0, 9)]);
        let h = Hierarchy::build_with(&g, &a, 2, 2).unwrap();
        let params = ProcedureParams::for_hierarchy(&h, 0.1);
        let (c0, c1) = h.clusters[h.top()].children.unwrap();
        let cfg_of = |u: &SiteSet| {
            ArwdConfig::from_slots(
                g.sites()
                    .map(|x| {
                        if u.contains(x) {
                            Slot::Active(1)
                        } else if a.contains(x) {
                            Slot::Sleeping
                        } else {
                            Slot::Empty
                        }
                    })
                    .collect(),
            )
        };
        // Both children active, then C0 becomes stable while C1 is not.
        let history = vec![
            a.clone(),
            set(&g, &[(0, 1), (0, 9)]),
            set(&g, &[(0, 1), (0, 9)]),
            set(&g, &[(0, 9)]),
        ];
        assert_eq!(h.clusters[c0].sites.len(), 3);
        let (mut f, _) = hierarchy_dynamics(&g, &h, params, ColorSequence::fixed(vec![]));
        let all: Vec<SiteId> = g.sites().collect();
        for (t, u) in history.iter().enumerate() {
            let got = f.choose(t as u64, &cfg_of(u), &all);
            let literal = literal_strategy_choice(&g, &h, &params, &history[..=t]).unwrap();
            assert_eq!(got, literal, "t = {t}");
        }
        assert!(h.clusters[c1].sites.contains(literal_strategy_choice(&g, &h, &params, &history).unwrap().unwrap()));
    }

    #[test]
    fn mask_cases() {
        let g = Graph::torus(24, 2).unwrap();
        let a = set(&g, &[(0, 0), (0, 1), (0, 2), (0, 8), (0, 9)]);
        let h = Hierarchy::build_with(&g, &a, 2, 2).unwrap();
        let (c0, c1) = h.clusters[h.top()].children.unwrap();
        let xstar = h.clusters[h.top()].distinguished;
        let never = |_| false;
        let always = |_| true;
        // Not distinguished anywhere.
        assert_eq!(HierarchySleepMask::classify(&h, at(&g, 0, 1), 0, never), MaskCase::Local);
        // Distinguished at level 0 only, colour 1.
        let x1 = h.clusters[c1].distinguished;
        assert_eq!(HierarchySleepMask::classify(&h, x1, 1, never), MaskCase::LowRank);
        // Distinguished at level 1, its level-0 cluster never stable, colour 0.
        assert_eq!(HierarchySleepMask::classify(&h, xstar, 0, never), MaskCase::FirstRally);
        assert_eq!(HierarchySleepMask::classify(&h, xstar, 0, always), MaskCase::Sibling);
        assert_eq!(HierarchySleepMask::classify(&h, xstar, 1, never), MaskCase::Sibling);
        assert_eq!(h.cluster_at(0, xstar), Some(c0));
    }

    #[test]
    fn hierarchy_run_stabilises_and_counts_the_distinguished_vertex() {
        let g = Graph::torus(12, 2).unwrap();
        let a = set(&g, &[(0, 0), (0, 1), (1, 0), (0, 6), (0, 7), (1, 6)]);
        let h = Hierarchy::build_with(&g, &a, 2, 2).unwrap();
        assert_eq!(h.top_level(), 1);
        let params = ProcedureParams::for_hierarchy(&h, 0.1);
        let cfg0 = crate::arwd::SubsetConfig::new(a.clone(), a.clone()).unwrap().to_config();
        let (mut f, mut mask) = hierarchy_dynamics(&g, &h, params, ColorSequence::random(RandomStream::new(5)));
        let run = run_arwd(&g, ArwdParams::new(8.0, a.clone()).unwrap(), &mut f, &mut mask, cfg0, RandomStream::new(6), 1_000_000)
            .unwrap();
        assert_eq!(run.status, RunStatus::Stabilised);
        assert!(run.last.is_stable());
        assert!(run.hstar[h.clusters[h.top()].distinguished.index()] >= 1);
    }

    #[test]
    fn json_dump_lists_every_cluster() {
        let g = Graph::torus(24, 2).unwrap();
        let a = set(&g, &[(0, 0), (0, 1), (0, 8), (0, 9)]);
        let h = Hierarchy::build_with(&g, &a, 2, 2).unwrap();
        let v: serde_json::Value = serde_json::from_str(&h.to_json()).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 3);
        assert!(v[2]["parent"].is_null());
    }

    #[test]
    fn color_sequence_is_geometric() {
        let mut c = ColorSequence::random(RandomStream::new(9));
        let zeros = (0..100_000).filter(|&t| c.get(t) == 0).count();
        assert!((zeros as f64 / 1e5 - 0.5).abs() < 0.01);
        let mut f = ColorSequence::fixed(vec![3]);
        assert_eq!((f.get(0), f.get(7)), (3, 0));
    }

    #[test]
    fn parameter_pack_reports_feasibility() {
        let pack = ParameterPack::new(8.0, 0.5, 2, 0.125, 0.1, 3).unwrap();
        assert_eq!(pack.r, 4);
        assert_eq!(pack.levels[0].diameter, 96.0);
        assert!((pack.p - 0.5f64.sqrt() / 384.0).abs() < 1e-15);
        assert!(pack.levels.iter().all(|l| l.p_ok));
        assert!((pack.levels[0].alpha - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }
}
