//! One function per experiment. Trials run on the rayon pool; each trial
//! derives its own seed from `(seed, subcommand, index)` and results are
//! collected in index order, so output never depends on scheduling.

use anyhow::{anyhow, bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use ssm_core::{
    constants, coupled_parity_probe, derive_seed, dominance_test, fit_exponential_time, ghost_probe, poisson_init,
    stabilize, DominanceVerdict, Domination, ExpFit, GhostReport, Graph, GraphKind, Hierarchy, InstructionField, Metric,
    ParameterPack, ParityReport, RandomStream, SelectionPolicy, SiteId, SiteSet, SsmState, StabilityMode, Status,
};

use crate::config::ExperimentConfig;
use crate::table::Table;

pub const DEFAULT_MU_GRID: [f64; 5] = [0.1, 0.5, 0.9, 1.2, 1.5];

fn par_trials<T: Send>(trials: usize, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    (0..trials as u64).into_par_iter().map(f).collect()
}

fn graph_kind(cfg: &ExperimentConfig, default: &str) -> Result<GraphKind> {
    Ok(cfg.graph.as_deref().unwrap_or(default).parse()?)
}

fn site_set(g: &Graph, ids: &[u32]) -> Result<SiteSet> {
    ids.iter().try_fold(SiteSet::new(g.site_count()), |mut s, &i| {
        g.check(SiteId(i))?;
        s.insert(SiteId(i));
        Ok(s)
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

/// One `(mu, L)` cell of the fixation scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixationCell {
    pub mu: f64,
    pub l: usize,
    pub trials: usize,
    /// Fraction of trials with `m(o) > 0`.
    pub active_fraction: f64,
    /// Fraction of trials with `m(o) >= threshold`.
    pub threshold_fraction: f64,
    pub threshold: u64,
    pub capped: usize,
}

/// Activity of the origin under full stabilisation of `B(L)`. Capped trials
/// count as active in both columns.
pub fn fixation_scan(cfg: &ExperimentConfig) -> Result<Vec<FixationCell>> {
    let GraphKind::Box { l, d } = graph_kind(cfg, "box:L=40,d=1")? else {
        bail!("fixation-scan needs a box graph");
    };
    let mus = cfg.mus.clone().or(cfg.mu.map(|m| vec![m])).unwrap_or_else(|| DEFAULT_MU_GRID.to_vec());
    let ls = cfg.ls.clone().unwrap_or_else(|| vec![l]);
    let trials = cfg.trials.unwrap_or(1000);
    let cap = cfg.cap.unwrap_or(10_000_000);
    let mut cells = Vec::new();
    for (ci, (&mu, &l)) in mus.iter().flat_map(|m| ls.iter().map(move |l| (m, l))).enumerate() {
        let g = Graph::boxed(l, d)?;
        let o = g.site_at(&vec![0; d]).expect("origin");
        let vp = g.interior();
        // Half-topplings: the threshold asks for L full topplings at the origin.
        let threshold = 2 * l as u64;
        let outcomes = par_trials(trials, |i| -> Result<(bool, u64)> {
            let s = derive_seed(cfg.seed, "fixation-scan", (ci as u64) << 32 | i);
            let eta = poisson_init(&g, mu, &mut RandomStream::new(s))?;
            let field = InstructionField::new(derive_seed(s, "field", 0));
            let out = stabilize(&g, &eta, &vp, &StabilityMode::Full, &field, SelectionPolicy::Lexicographic, cap)?;
            Ok((out.status == Status::Capped, out.odometer.get(o)))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let frac = |pred: &dyn Fn(&(bool, u64)) -> bool| {
            outcomes.iter().filter(|o| pred(o)).count() as f64 / trials.max(1) as f64
        };
        cells.push(FixationCell {
            mu,
            l,
            trials,
            active_fraction: frac(&|&(c, m)| c || m > 0),
            threshold_fraction: frac(&|&(c, m)| c || m >= threshold),
            threshold,
            capped: outcomes.iter().filter(|o| o.0).count(),
        });
    }
    Ok(cells)
}

/// Whether both activity columns are non-decreasing in `mu` for every `L`.
pub fn fixation_monotone(cells: &[FixationCell]) -> bool {
    let mut ls: Vec<usize> = cells.iter().map(|c| c.l).collect();
    ls.sort_unstable();
    ls.dedup();
    ls.iter().all(|&l| {
        let mut row: Vec<&FixationCell> = cells.iter().filter(|c| c.l == l).collect();
        row.sort_by(|a, b| a.mu.total_cmp(&b.mu));
        row.windows(2).all(|w| {
            w[0].active_fraction <= w[1].active_fraction && w[0].threshold_fraction <= w[1].threshold_fraction
        })
    })
}

fn fixation_table(cfg: &ExperimentConfig) -> Result<Table> {
    let cells = fixation_scan(cfg)?;
    let mut t = Table::new(&["mu", "L", "seed", "trials", "active_fraction", "threshold_fraction", "threshold", "capped"]);
    for c in &cells {
        t.push(vec![
            c.mu.to_string(),
            c.l.to_string(),
            cfg.seed.to_string(),
            c.trials.to_string(),
            c.active_fraction.to_string(),
            c.threshold_fraction.to_string(),
            c.threshold.to_string(),
            c.capped.to_string(),
        ]);
    }
    t.note(format!("monotone_in_mu={}", fixation_monotone(&cells)));
    Ok(t)
}

/// Half-topplings to stabilise Poisson(mu) on one torus size; `None` marks a
/// trial that cannot stabilise or hit the cap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusTimeRow {
    pub n: usize,
    pub trials: usize,
    pub infinite: usize,
    pub q1: Option<u64>,
    pub median: Option<u64>,
    pub q3: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusTime {
    pub d: usize,
    pub mu: f64,
    pub rows: Vec<TorusTimeRow>,
    pub fit: Option<ExpFit>,
    pub notes: Vec<String>,
}

/// Nearest-rank quantile of a sorted sample with `None` as infinity.
fn quantile(sorted: &[Option<u64>], p: f64) -> Option<u64> {
    let k = sorted.len();
    if k == 0 {
        return None;
    }
    let rank = ((p * k as f64).ceil() as usize).clamp(1, k);
    sorted[rank - 1]
}

pub fn torus_time(cfg: &ExperimentConfig) -> Result<TorusTime> {
    let GraphKind::Torus { d, n: n0 } = graph_kind(cfg, "torus:n=8,d=1")? else {
        bail!("torus-time needs a torus graph");
    };
    let ns = cfg.ns.clone().unwrap_or_else(|| if cfg.graph.is_some() { vec![n0] } else { vec![8, 12, 16, 20] });
    let mu = cfg.mu.unwrap_or(0.95);
    let trials = cfg.trials.unwrap_or(200);
    let cap = cfg.cap.unwrap_or(100_000_000);
    let mut notes = Vec::new();
    if mu >= 1.0 {
        notes.push(format!("warning: mu = {mu} >= 1, most trials cannot stabilise"));
    }
    let mut rows = Vec::new();
    for (ni, &n) in ns.iter().enumerate() {
        let g = Graph::torus(n, d)?;
        let vp = SiteSet::full(g.site_count());
        let mut times = par_trials(trials, |i| -> Result<Option<u64>> {
            let s = derive_seed(cfg.seed, "torus-time", (ni as u64) << 32 | i);
            let eta = poisson_init(&g, mu, &mut RandomStream::new(s))?;
            if eta.total() > g.site_count() as u64 {
                return Ok(None);
            }
            let field = InstructionField::new(derive_seed(s, "field", 0));
            let out = stabilize(&g, &eta, &vp, &StabilityMode::Half, &field, SelectionPolicy::Lexicographic, cap)?;
            Ok((out.status == Status::Stable).then(|| out.odometer.norm()))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        times.sort_by_key(|t| t.unwrap_or(u64::MAX));
        rows.push(TorusTimeRow {
            n,
            trials,
            infinite: times.iter().filter(|t| t.is_none()).count(),
            q1: quantile(&times, 0.25),
            median: quantile(&times, 0.5),
            q3: quantile(&times, 0.75),
        });
    }
    let medians: Option<Vec<f64>> = rows.iter().map(|r| r.median.map(|m| m as f64)).collect();
    let fit = match medians {
        Some(m) if rows.len() >= 3 => {
            let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
            Some(fit_exponential_time(&ns, &m, d as u32)?)
        }
        Some(_) => {
            notes.push("fit skipped: fewer than three sizes".into());
            None
        }
        None => {
            notes.push("fit skipped: an infinite median".into());
            None
        }
    };
    Ok(TorusTime { d, mu, rows, fit, notes })
}

fn torus_time_table(cfg: &ExperimentConfig) -> Result<Table> {
    let res = torus_time(cfg)?;
    let mut t = Table::new(&["n", "seed", "trials", "infinite", "q1", "median", "q3"]);
    let show = |x: Option<u64>| x.map_or_else(|| "inf".to_string(), |v| v.to_string());
    for r in &res.rows {
        t.push(vec![
            r.n.to_string(),
            cfg.seed.to_string(),
            r.trials.to_string(),
            r.infinite.to_string(),
            show(r.q1),
            show(r.median),
            show(r.q3),
        ]);
    }
    for n in &res.notes {
        t.note(n.clone());
    }
    if let Some(f) = &res.fit {
        t.note(format!("fit slope={} slope_se={} intercept={} r2={}", f.slope, f.slope_se, f.intercept, f.r2));
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakProbe {
    pub mu: f64,
    pub l: usize,
    pub trials: usize,
    pub excluded: usize,
    /// Fraction with a particle in the closed neighbourhood of the site.
    pub p_occupied: f64,
    /// Fraction with zero odometer at the site.
    pub p_silent: f64,
    /// Combined standard error of the two fractions.
    pub se: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn weak_probe(cfg: &ExperimentConfig) -> Result<Vec<WeakProbe>> {
    let GraphKind::Box { l, d } = graph_kind(cfg, "box:L=8,d=1")? else {
        bail!("weak-probe needs a box graph");
    };
    let g = Graph::boxed(l, d)?;
    let coords = cfg.site.clone().unwrap_or_else(|| vec![0; d]);
    let x = g.site_at(&coords).ok_or_else(|| anyhow!("site {coords:?} is not in the graph"))?;
    if g.is_halo(x) || g.adjacent(x).iter().any(|&y| g.is_halo(y)) {
        bail!("interior required: site {coords:?} touches the boundary");
    }
    let ix = g.ball(x, 1, Metric::Graph)?;
    let bound = constants(g.degree(x))?.weak_bound;
    let mus = cfg.mus.clone().unwrap_or_else(|| vec![cfg.mu.unwrap_or(0.8)]);
    let trials = cfg.trials.unwrap_or(10_000);
    ensure!(trials > 0, "trials must be positive");
    let cap = cfg.cap.unwrap_or(10_000_000);
    let vp = g.interior();
    let mut out = Vec::new();
    for (mi, &mu) in mus.iter().enumerate() {
        let results = par_trials(trials, |i| -> Result<Option<(bool, bool)>> {
            let s = derive_seed(cfg.seed, "weak-probe", (mi as u64) << 32 | i);
            let eta = poisson_init(&g, mu, &mut RandomStream::new(s))?;
            let field = InstructionField::new(derive_seed(s, "field", 0));
            let st = stabilize(&g, &eta, &vp, &StabilityMode::Full, &field, SelectionPolicy::Lexicographic, cap)?;
            if st.status == Status::Capped {
                return Ok(None);
            }
            let occupied = ix.iter().any(|z| st.state.eta(z) >= 1);
            Ok(Some((occupied, st.odometer.get(x) == 0)))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let kept: Vec<(bool, bool)> = results.iter().flatten().copied().collect();
        ensure!(!kept.is_empty(), "every trial hit the cap");
        let k = kept.len() as f64;
        let pa = kept.iter().filter(|o| o.0).count() as f64 / k;
        let pm = kept.iter().filter(|o| o.1).count() as f64 / k;
        let se = (pa * (1.0 - pa) / k + pm * (1.0 - pm) / k).sqrt();
        out.push(WeakProbe {
            mu,
            l,
            trials,
            excluded: trials - kept.len(),
            p_occupied: pa,
            p_silent: pm,
            se,
            bound,
            holds: pa >= bound - pm - 3.0 * se,
        });
    }
    Ok(out)
}

fn weak_table(cfg: &ExperimentConfig) -> Result<Table> {
    let rows = weak_probe(cfg)?;
    let mut t = Table::new(&["mu", "L", "seed", "trials", "excluded", "p_occupied", "p_silent", "se", "bound", "holds"]);
    for r in &rows {
        t.push(vec![
            r.mu.to_string(),
            r.l.to_string(),
            cfg.seed.to_string(),
            r.trials.to_string(),
            r.excluded.to_string(),
            r.p_occupied.to_string(),
            r.p_silent.to_string(),
            r.se.to_string(),
            r.bound.to_string(),
            r.holds.to_string(),
        ]);
    }
    t.pass = Some(rows.iter().all(|r| r.holds));
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationReport {
    pub trials: usize,
    pub excluded: usize,
    pub lambda: f64,
    pub ssm_mean: f64,
    pub arwd_mean: f64,
    pub verdict: DominanceVerdict,
}

pub fn domination(cfg: &ExperimentConfig) -> Result<DominationReport> {
    let g = Graph::new(graph_kind(cfg, "cycle:n=6")?)?;
    let a = match &cfg.a {
        Some(ids) => site_set(&g, ids)?,
        None => g.interior(),
    };
    let b = site_set(&g, cfg.b.as_deref().unwrap_or(&[0, 2, 4]))?;
    let counts = cfg.eta.clone().unwrap_or_else(|| vec![2, 0, 2, 0, 1, 1]);
    let eta = SsmState::from_counts(&g, &counts)?;
    let dom = Domination::new(&g, a, b, eta, cfg.cap.unwrap_or(10_000_000))?;
    if let Some(l) = cfg.lambda {
        ensure!(l == dom.lambda(), "the comparison fixes lambda = {}, got {l}", dom.lambda());
    }
    let trials = cfg.trials.unwrap_or(10_000);
    let pairs = par_trials(trials, |i| -> Result<(Option<u64>, u64)> {
        Ok((dom.ssm_trial(cfg.seed, i)?, dom.arwd_trial(cfg.seed, i)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let ssm: Vec<u64> = pairs.iter().filter_map(|p| p.0).collect();
    let arwd: Vec<u64> = pairs.iter().map(|p| p.1).collect();
    let verdict = dominance_test(&ssm, &arwd, cfg.alpha.unwrap_or(0.01))?;
    let mean = |v: &[u64]| v.iter().sum::<u64>() as f64 / v.len().max(1) as f64;
    Ok(DominationReport {
        trials,
        excluded: trials - ssm.len(),
        lambda: dom.lambda(),
        ssm_mean: mean(&ssm),
        arwd_mean: mean(&arwd),
        verdict,
    })
}

fn domination_table(cfg: &ExperimentConfig) -> Result<Table> {
    let r = domination(cfg)?;
    let mut t = Table::new(&[
        "trials", "seed", "excluded", "lambda", "ssm_mean", "arwd_mean", "max_violation", "dkw_band", "rejected",
    ]);
    t.push(vec![
        r.trials.to_string(),
        cfg.seed.to_string(),
        r.excluded.to_string(),
        r.lambda.to_string(),
        r.ssm_mean.to_string(),
        r.arwd_mean.to_string(),
        r.verdict.max_violation.to_string(),
        r.verdict.dkw_band.to_string(),
        r.verdict.rejected.to_string(),
    ]);
    t.pass = Some(!r.verdict.rejected);
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfinementReport {
    pub trials: usize,
    pub no_exit: usize,
    pub estimate: f64,
    pub se: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Half-stabilisation of `A` from at most one particle per site of `A` and
/// an empty site in `A`; counts the runs where no particle leaves `A`.
pub fn confinement_probe(cfg: &ExperimentConfig) -> Result<ConfinementReport> {
    let g = Graph::new(graph_kind(cfg, "cycle:n=5")?)?;
    let a = site_set(&g, cfg.a.as_deref().unwrap_or(&[0, 1]))?;
    let n = g.site_count();
    let default_eta = || {
        let mut v = vec![0; n];
        v[0] = 1;
        v
    };
    let default_h2 = || {
        let mut v = vec![0; n];
        v[0] = 1;
        v[1.min(n - 1)] = 1;
        v
    };
    let eta = cfg.eta.clone().unwrap_or_else(default_eta);
    let h2 = cfg.h2.clone().unwrap_or_else(default_h2);
    ensure!(eta.len() == n && h2.len() == n, "eta and h2 need one entry per site");
    let s = SsmState { eta, h2 };
    let trials = cfg.trials.unwrap_or(100_000);
    ensure!(trials > 0, "trials must be positive");
    ensure!(!a.is_empty() && a.len() <= 8, "A must have between 1 and 8 sites");
    ensure!(g.r_components(&a, 1, Metric::Graph)?.len() == 1, "A must be connected");
    ensure!(a.iter().all(|x| s.eta(x) <= 1), "hypothesis violated: more than one particle on a site of A");
    ensure!(g.sites().all(|x| a.contains(x) || s.eta(x) == 0), "hypothesis violated: particles outside A");
    ensure!(a.iter().any(|x| s.eta(x) == 0), "hypothesis violated: no empty site in A");
    let cap = cfg.cap.unwrap_or(10_000_000);
    let before = s.total_on(&a);
    let kept = par_trials(trials, |i| -> Result<bool> {
        let field = InstructionField::new(derive_seed(cfg.seed, "confinement-probe", i));
        let out = stabilize(&g, &s, &a, &StabilityMode::Half, &field, SelectionPolicy::Lexicographic, cap)?;
        Ok(out.status == Status::Stable && out.state.total_on(&a) == before)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let no_exit = kept.iter().filter(|&&k| k).count();
    let estimate = no_exit as f64 / trials as f64;
    let se = (estimate * (1.0 - estimate) / trials as f64).sqrt();
    let bound = (g.max_degree() as f64).powi(-2 * a.len() as i32);
    Ok(ConfinementReport { trials, no_exit, estimate, se, bound, holds: estimate >= bound - 3.0 * se })
}

fn confinement_table(cfg: &ExperimentConfig) -> Result<Table> {
    let r = confinement_probe(cfg)?;
    let mut t = Table::new(&["trials", "seed", "no_exit", "estimate", "se", "bound", "holds"]);
    t.push(vec![
        r.trials.to_string(),
        cfg.seed.to_string(),
        r.no_exit.to_string(),
        r.estimate.to_string(),
        r.se.to_string(),
        r.bound.to_string(),
        r.holds.to_string(),
    ]);
    t.pass = Some(r.holds);
    Ok(t)
}

/// Outcome of one hierarchy construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyInstance {
    pub trial: u64,
    pub seed: u64,
    pub n: usize,
    pub mu: f64,
    pub v: usize,
    pub a_size: usize,
    /// `valid`, `invalid` (built but failing validation) or `failed: ...`.
    pub status: String,
    pub levels: Option<usize>,
    pub top_size: Option<usize>,
}

/// A random settling set with at least `ceil(mu n^2)` sites: independent
/// inclusion at a random density above `mu`, topped up uniformly.
pub fn random_dense_set(n: usize, mu: f64, stream: &mut RandomStream) -> SiteSet {
    let total = n * n;
    let q = mu + (1.0 - mu) * 0.3 * stream.uniform01();
    let mut a = SiteSet::from_sites(total, (0..total).filter(|_| stream.uniform01() < q).map(SiteId::from));
    let target = (mu * total as f64).ceil() as usize;
    while a.len() < target {
        a.insert(SiteId::from(stream.below(total)));
    }
    a
}

pub fn hierarchy_check(cfg: &ExperimentConfig) -> Result<(Vec<HierarchyInstance>, Vec<ParameterPack>)> {
    let ns = cfg.ns.clone().unwrap_or_else(|| vec![24, 32]);
    let mus = cfg.mus.clone().unwrap_or_else(|| vec![0.5, 0.7]);
    let vs = cfg.vs.clone().or(cfg.v.map(|v| vec![v])).unwrap_or_else(|| vec![2, 4]);
    let mut cells = Vec::new();
    for &n in &ns {
        for &m in &mus {
            for &v in &vs {
                cells.push((n, m, v));
            }
        }
    }
    ensure!(!cells.is_empty(), "hierarchy-check needs a non-empty (n, mu, v) grid");
    let trials = cfg.trials.unwrap_or(100);
    let instances = par_trials(trials, |i| -> Result<HierarchyInstance> {
        let (n, mu, v) = cells[i as usize % cells.len()];
        let seed = derive_seed(cfg.seed, "hierarchy-check", i);
        let g = Graph::torus(n, 2)?;
        let a = random_dense_set(n, mu, &mut RandomStream::new(seed));
        let (status, levels, top_size) = match Hierarchy::build(&g, &a, v, mu) {
            Ok(h) => {
                let status = match h.validate(&g) {
                    Ok(()) => "valid".to_string(),
                    Err(e) => format!("invalid: {e}"),
                };
                (status, Some(h.top_level() + 1), Some(h.level_set(h.top_level()).len()))
            }
            Err(e) => (format!("failed: {e}"), None, None),
        };
        Ok(HierarchyInstance { trial: i, seed, n, mu, v, a_size: a.len(), status, levels, top_size })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let lambda = cfg.lambda.unwrap_or(64.0);
    let mut packs = Vec::new();
    for &mu in &mus {
        for &v in &vs {
            packs.push(ParameterPack::new(
                lambda,
                mu,
                v,
                cfg.pbar.unwrap_or(0.5),
                cfg.k_upsilon.unwrap_or(0.5),
                4,
            )?);
        }
    }
    Ok((instances, packs))
}

fn hierarchy_table(cfg: &ExperimentConfig) -> Result<Table> {
    let (rows, packs) = hierarchy_check(cfg)?;
    let mut t = Table::new(&["trial", "seed", "n", "mu", "v", "a_size", "status", "levels", "top_size"]);
    let opt = |x: Option<usize>| x.map_or_else(|| "NA".into(), |v| v.to_string());
    for r in &rows {
        t.push(vec![
            r.trial.to_string(),
            r.seed.to_string(),
            r.n.to_string(),
            r.mu.to_string(),
            r.v.to_string(),
            r.a_size.to_string(),
            r.status.clone(),
            opt(r.levels),
            opt(r.top_size),
        ]);
    }
    let silent = rows.iter().filter(|r| r.status.starts_with("invalid")).count();
    t.note(format!("silent_invalid={silent}"));
    for p in &packs {
        t.note(format!("parameters {}", serde_json::to_string(p)?));
    }
    t.pass = Some(silent == 0);
    Ok(t)
}

/// A small parity-probe instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityInstance {
    pub graph: String,
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub eta: Vec<u32>,
}

pub fn builtin_parity_instances() -> Vec<ParityInstance> {
    let inst = |graph: &str, a: &[u32], b: &[u32], eta: &[u32]| ParityInstance {
        graph: graph.into(),
        a: a.to_vec(),
        b: b.to_vec(),
        eta: eta.to_vec(),
    };
    vec![
        inst("cycle:n=3", &[0, 1, 2], &[0], &[2, 1, 0]),
        inst("path:n=4", &[0, 1, 2, 3], &[1], &[0, 3, 1, 0]),
        inst("path:n=4", &[0, 1, 2], &[1], &[0, 1, 1, 1]),
    ]
}

pub fn parity_probe(cfg: &ExperimentConfig) -> Result<Vec<(ParityInstance, ParityReport)>> {
    let instances = match &cfg.graph {
        Some(graph) => {
            let g = Graph::new(graph.parse()?)?;
            vec![ParityInstance {
                graph: graph.clone(),
                a: cfg.a.clone().unwrap_or_else(|| g.sites().map(|x| x.0).collect()),
                b: cfg.b.clone().context("parity-probe needs b")?,
                eta: cfg.eta.clone().context("parity-probe needs eta")?,
            }]
        }
        None => builtin_parity_instances(),
    };
    let steps = cfg.steps.unwrap_or(4);
    instances
        .into_iter()
        .map(|inst| {
            let g = Graph::new(inst.graph.parse()?)?;
            let a = site_set(&g, &inst.a)?;
            let b = site_set(&g, &inst.b)?;
            let eta = SsmState::from_counts(&g, &inst.eta)?;
            let report = coupled_parity_probe(&g, &a, &b, &eta, steps, 1_000_000)?;
            Ok((inst, report))
        })
        .collect()
}

fn parity_table(cfg: &ExperimentConfig) -> Result<Table> {
    let reports = parity_probe(cfg)?;
    let mut t = Table::new(&["instance", "seed", "t", "x", "pi", "bound", "holds"]);
    for (k, (inst, r)) in reports.iter().enumerate() {
        for e in &r.entries {
            t.push(vec![
                k.to_string(),
                cfg.seed.to_string(),
                e.t.to_string(),
                e.x.to_string(),
                e.pi.to_string(),
                r.bound.to_string(),
                e.holds.to_string(),
            ]);
        }
        t.note(format!("instance {k}: {} A={:?} B={:?} eta={:?} branches={}", inst.graph, inst.a, inst.b, inst.eta, r.branches));
    }
    t.pass = Some(reports.iter().all(|(_, r)| r.all_hold()));
    Ok(t)
}

pub fn ghost(cfg: &ExperimentConfig) -> Result<GhostReport> {
    let g = Graph::new(graph_kind(cfg, "box:L=10,d=1")?)?;
    Ok(ghost_probe(
        &g,
        cfg.mu.unwrap_or(0.5),
        cfg.r.unwrap_or(2),
        cfg.trials.unwrap_or(1000),
        cfg.seed,
        cfg.cap.unwrap_or(10_000_000),
    )?)
}

fn ghost_table(cfg: &ExperimentConfig) -> Result<Table> {
    let r = ghost(cfg)?;
    let mut t = Table::new(&[
        "trials", "seed", "excluded", "mean", "standard_error", "exact", "ghost_mean", "ghost_exact", "interior_ratio",
    ]);
    t.push(vec![
        r.trials.to_string(),
        cfg.seed.to_string(),
        r.excluded.to_string(),
        fmt_opt(r.mean),
        fmt_opt(r.standard_error),
        r.exact.to_string(),
        fmt_opt(r.ghost_mean),
        fmt_opt(r.ghost_exact),
        r.interior_ratio.to_string(),
    ]);
    Ok(t)
}

fn lemma_table(cfg: &ExperimentConfig) -> Result<Table> {
    let checks = crate::checks::lemma_checks(cfg.seed, cfg.trials.unwrap_or(100_000))?;
    let mut t = crate::checks::checks_table(&checks, cfg.seed);
    t.pass = Some(checks.iter().all(|c| c.pass));
    Ok(t)
}

/// Runs the experiment named by `cfg.subcommand`.
pub fn run(cfg: &ExperimentConfig) -> Result<Table> {
    match cfg.subcommand.as_str() {
        "fixation-scan" => fixation_table(cfg),
        "torus-time" => torus_time_table(cfg),
        "weak-probe" => weak_table(cfg),
        "domination" => domination_table(cfg),
        "confinement-probe" => confinement_table(cfg),
        "hierarchy-check" => hierarchy_table(cfg),
        "parity-probe" => parity_table(cfg),
        "ghost-probe" => ghost_table(cfg),
        "lemma-checks" => lemma_table(cfg),
        "selfcheck" => crate::checks::selfcheck_table(cfg),
        other => bail!("unknown subcommand {other:?}"),
    }
}
