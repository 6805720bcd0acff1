//! Invariant checks shared by `selfcheck`, `lemma-checks` and the acceptance
//! suite. Every check is deterministic in its seed.

use anyhow::Result;
use rayon::prelude::*;
use ssm_core::{
    abelian_probe, bernoulli_geometric_domination_check, derive_seed, enumerate_outcomes, exit_times,
    geometric_composition_check, green_function, hierarchy_dynamics, mix64, run_arwd, upsilon_one, ArwdParams,
    ColorSequence, Coupling, Graph, GraphKind, Hierarchy, InstructionField, Metric, ProcedureParams, RandomStream,
    RunStatus, SelectionPolicy, SiteId, SiteSet, SsmState, StabilityMode, Stabilization, Status, SubsetConfig,
};

use crate::config::ExperimentConfig;
use crate::experiments;
use crate::table::Table;

const CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass, detail: detail.into() }
    }
}

pub fn checks_table(checks: &[Check], seed: u64) -> Table {
    let mut t = Table::new(&["check", "seed", "pass", "detail"]);
    for c in checks {
        t.push(vec![c.name.clone(), seed.to_string(), c.pass.to_string(), c.detail.clone()]);
    }
    t
}

/// A small SSM instance: at most 16 sites and 10 particles.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: Graph,
    pub state: SsmState,
    pub field_seed: u64,
}

/// Deterministic corpus of small instances. Tori keep one empty site so that
/// stabilisation is possible.
pub fn corpus(count: usize, seed: u64) -> Vec<Instance> {
    (0..count as u64)
        .map(|i| {
            let mut s = RandomStream::substream(seed, "corpus", i);
            let kind = match s.below(5) {
                0 => GraphKind::Cycle { n: 3 + s.below(6) },
                1 => GraphKind::Torus { n: 3 + s.below(2), d: 2 },
                2 => GraphKind::Path { n: 2 + s.below(7) },
                3 => GraphKind::Box { l: 1 + s.below(3), d: 1 },
                _ => GraphKind::Cycle { n: 3 + s.below(14) },
            };
            let graph = Graph::new(kind).expect("small graph");
            let k = graph.interior_count();
            let room = if graph.is_torus() { k - 1 } else { k };
            let budget = (s.below(11) as u32).min(room as u32);
            let mut counts = vec![0u32; k];
            for _ in 0..budget {
                counts[s.below(k)] += 1;
            }
            let state = SsmState::from_counts(&graph, &counts).expect("valid counts");
            Instance { graph, state, field_seed: s.next_word() }
        })
        .collect()
}

fn odometer_vec(g: &Graph, st: &Stabilization) -> Vec<u64> {
    g.sites().map(|x| st.odometer.get(x)).collect()
}

fn run(inst: &Instance, vp: &SiteSet, mode: &StabilityMode, policy: SelectionPolicy) -> Result<Stabilization> {
    let field = InstructionField::new(inst.field_seed);
    Ok(ssm_core::stabilize(&inst.graph, &inst.state, vp, mode, &field, policy, CAP)?)
}

/// Random legal orders and, where the tree is small, exhaustive enumeration
/// give one outcome per instance in the full, half and A-stable modes.
pub fn abelian(instances: usize, orders: usize, seed: u64, node_budget: usize) -> Result<Check> {
    let corpus = corpus(instances, seed);
    let results = corpus
        .par_iter()
        .enumerate()
        .map(|(i, inst)| -> Result<(usize, usize, usize, Vec<String>)> {
            let g = &inst.graph;
            let vp = g.interior();
            let full = run(inst, &vp, &StabilityMode::Full, SelectionPolicy::Lexicographic)?;
            if full.status != Status::Stable {
                return Ok((0, 0, 1, vec![]));
            }
            let bits = derive_seed(seed, "abelian-a", i as u64);
            let a = SiteSet::from_sites(
                g.site_count(),
                vp.iter().filter(|&x| full.state.eta(x) == 1 || bits >> (x.index() % 64) & 1 == 1),
            );
            let (mut probes, mut enumerated, mut failures) = (0, 0, Vec::new());
            for mode in [StabilityMode::Full, StabilityMode::Half, StabilityMode::AStab(a)] {
                let field = InstructionField::new(inst.field_seed);
                let r = abelian_probe(g, &inst.state, &vp, &mode, &field, orders, derive_seed(seed, "orders", i as u64), CAP)?;
                probes += 1;
                if !r.consistent || (r.capped != 0 && r.capped != r.runs) {
                    failures.push(format!("instance {i} {}: orders disagree", mode.name()));
                }
                if let Some(outs) = enumerate_outcomes(g, &inst.state, &vp, &mode, &field, node_budget)? {
                    enumerated += 1;
                    let lex = run(inst, &vp, &mode, SelectionPolicy::Lexicographic)?;
                    let expected = (lex.state.eta.clone(), odometer_vec(g, &lex));
                    if outs.len() != 1 || !outs.contains(&expected) {
                        failures.push(format!("instance {i} {}: {} enumerated outcomes", mode.name(), outs.len()));
                    }
                }
            }
            Ok((probes, enumerated, 0, failures))
        })
        .collect::<Result<Vec<_>>>()?;
    let probes: usize = results.iter().map(|r| r.0).sum();
    let enumerated: usize = results.iter().map(|r| r.1).sum();
    let skipped: usize = results.iter().map(|r| r.2).sum();
    let failures: Vec<String> = results.into_iter().flat_map(|r| r.3).collect();
    Ok(Check::new(
        "abelian",
        failures.is_empty() && probes > 0,
        format!(
            "{probes} probes x {orders} orders, {enumerated} enumerated, {skipped} capped instances skipped{}",
            failures.first().map(|f| format!("; first failure: {f}")).unwrap_or_default()
        ),
    ))
}

/// Full and half stabilisation agree exactly, and A-stabilisation with `A`
/// the final occupied set reproduces the odometer.
pub fn full_half_and_a_stab(instances: usize, seed: u64) -> Result<Check> {
    let corpus = corpus(instances, seed);
    let mut qualifying = 0;
    let mut failures = Vec::new();
    for (i, inst) in corpus.iter().enumerate() {
        let g = &inst.graph;
        let vp = g.interior();
        let full = run(inst, &vp, &StabilityMode::Full, SelectionPolicy::Random { seed: derive_seed(seed, "fh", i as u64) })?;
        let half = run(inst, &vp, &StabilityMode::Half, SelectionPolicy::Stack)?;
        if full.status != Status::Stable || half.status != Status::Stable {
            continue;
        }
        qualifying += 1;
        if full.state.eta != half.state.eta || full.odometer != half.odometer {
            failures.push(format!("instance {i}: full and half differ"));
        }
        let a = SiteSet::from_sites(g.site_count(), vp.iter().filter(|&x| full.state.eta(x) == 1));
        if vp.iter().any(|x| full.state.eta(x) > 1) {
            failures.push(format!("instance {i}: final state is not an indicator"));
            continue;
        }
        let astab = run(inst, &vp, &StabilityMode::AStab(a), SelectionPolicy::Lexicographic)?;
        if astab.status != Status::Stable || astab.odometer != full.odometer {
            failures.push(format!("instance {i}: A-stabilisation odometer differs"));
        }
    }
    Ok(Check::new(
        "full-half-astab",
        failures.is_empty() && qualifying > 0,
        format!("{qualifying} qualifying instances{}", failures.first().map(|f| format!("; {f}")).unwrap_or_default()),
    ))
}

/// Shrinking the stabilised region can only lower the odometer.
pub fn monotonicity(instances: usize, seed: u64) -> Result<Check> {
    let mut failures = 0;
    for (i, inst) in corpus(instances, seed).iter().enumerate() {
        let g = &inst.graph;
        let big = g.interior();
        let mask = derive_seed(seed, "mono", i as u64);
        let small = SiteSet::from_sites(g.site_count(), big.iter().filter(|x| mask >> (x.index() % 64) & 1 == 1));
        let outer = run(inst, &big, &StabilityMode::Full, SelectionPolicy::Lexicographic)?;
        let inner = run(inst, &small, &StabilityMode::Full, SelectionPolicy::Lexicographic)?;
        if outer.status == Status::Stable && inner.status == Status::Stable {
            failures += g.sites().filter(|&x| inner.odometer.get(x) > outer.odometer.get(x)).count();
        }
    }
    Ok(Check::new("monotonicity", failures == 0, format!("{failures} violating sites")))
}

/// Weak stabilisation ends weakly stable and keeps a particle next to a
/// visited centre.
pub fn weak_lemma(instances: usize, seed: u64) -> Result<Check> {
    let mut failures = 0;
    for i in 0..instances as u64 {
        let mut s = RandomStream::substream(seed, "weak-lemma", i);
        let g = Graph::boxed(2 + s.below(8), 1)?;
        let k = g.interior_count();
        let counts: Vec<u32> = (0..k).map(|_| s.below(3) as u32).collect();
        let st = SsmState::from_counts(&g, &counts)?;
        let x0 = SiteId::from(s.below(k));
        let inst = Instance { graph: g.clone(), state: st, field_seed: s.next_word() };
        let out = run(&inst, &g.interior(), &StabilityMode::Weak(x0), SelectionPolicy::Random { seed: s.next_word() })?;
        let i_x = g.ball(x0, 1, Metric::Graph)?;
        let interior = g.interior();
        let near = i_x.iter().any(|z| out.state.eta(z) >= 1);
        let off = interior.difference(&i_x).iter().all(|x| out.state.eta(x) <= 1);
        let on: Vec<u32> = i_x.iter().filter(|&z| interior.contains(z)).map(|z| out.state.eta(z)).collect();
        let weakly = on.iter().all(|&v| v <= 1) || (on.iter().filter(|&&v| v == 2).count() == 1 && on.iter().all(|&v| v == 0 || v == 2));
        if out.status != Status::Stable || !off || !weakly || (out.centre_visited && !near) {
            failures += 1;
        }
    }
    Ok(Check::new("weak-lemma", failures == 0, format!("{failures} of {instances} instances fail")))
}

/// The escape probability on a path equals `1/(2r)`.
pub fn upsilon_table(max_r: usize) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for r in 1..=max_r {
        for n in [4 * r + 2, 8 * r] {
            worst = worst.max((upsilon_one(r, n)? - 1.0 / (2.0 * r as f64)).abs());
        }
    }
    Ok(Check::new("upsilon-one", worst <= 1e-10, format!("max error {worst:e} over r = 1..{max_r}")))
}

/// Green values on `B(1)` in one dimension, and row sums against exit times
/// on random windows.
pub fn green_identities(windows: usize, seed: u64) -> Result<Check> {
    let g = Graph::boxed(1, 1)?;
    let o = g.site_at(&[0]).expect("origin");
    let one = g.site_at(&[1]).expect("site 1");
    let green = green_function(&g, &g.interior())?;
    let e00 = (green.get(o, o) - 2.0).abs();
    let e10 = (green.get(one, o) - 1.0).abs();
    let mut worst: f64 = 0.0;
    for i in 0..windows as u64 {
        let mut s = RandomStream::substream(seed, "green-window", i);
        let g = match s.below(3) {
            0 => Graph::boxed(2 + s.below(6), 1)?,
            1 => Graph::boxed(1 + s.below(3), 2)?,
            _ => Graph::torus(3 + s.below(4), 2)?,
        };
        let mut z = SiteSet::from_sites(g.site_count(), g.interior_sites().filter(|_| s.uniform01() < 0.75));
        if z.len() == g.interior_count() && g.is_torus() {
            z.remove(SiteId(0));
        }
        if z.is_empty() {
            z.insert(g.interior_sites().next().expect("interior"));
        }
        let green = green_function(&g, &z)?;
        let tau = exit_times(&g, &z)?;
        for x in z.iter() {
            worst = worst.max((green.row_sum(x) - tau[x.index()]).abs() / tau[x.index()].max(1.0));
        }
    }
    let pass = e00 <= 1e-10 && e10 <= 1e-10 && worst <= 1e-9;
    Ok(Check::new(
        "green-identities",
        pass,
        format!("|G(0,0)-2|={e00:e} |G(1,0)-1|={e10:e} row-sum max rel error {worst:e} over {windows} windows"),
    ))
}

pub const COMPOSITION_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

pub fn composition_grid() -> Result<Check> {
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for a in COMPOSITION_GRID {
        for b in COMPOSITION_GRID {
            let r = geometric_composition_check(a, b, 1e-8)?;
            worst = worst.max(r.max_deviation);
            pass &= r.pass;
        }
    }
    Ok(Check::new("geometric-composition", pass, format!("max deviation {worst:e} on the 5x5 grid")))
}

/// Monte Carlo dominance of `1 + S_T` over the geometric target under the
/// independent and the antitone couplings.
pub fn bernoulli_geometric(p: f64, eps: f64, trials: usize, seed: u64) -> Result<Check> {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, coupling) in [("independent", Coupling::Independent), ("antitone", Coupling::Antitone)] {
        let v = bernoulli_geometric_domination_check(p, eps, trials, seed, coupling, 0.01)?;
        pass &= !v.rejected;
        parts.push(format!("{name}: violation {:.5} band {:.5} rejected={}", v.max_violation, v.dkw_band, v.rejected));
    }
    Ok(Check::new("bernoulli-geometric", pass, parts.join("; ")))
}

/// Builds hierarchies on random dense sets and validates each; construction
/// may fail loudly but never return an invalid structure.
pub fn hierarchy_validator(instances: usize, seed: u64) -> Result<Check> {
    let cfg = ExperimentConfig {
        subcommand: "hierarchy-check".into(),
        trials: Some(instances),
        seed,
        ..Default::default()
    };
    let (rows, _) = experiments::hierarchy_check(&cfg)?;
    let invalid = rows.iter().filter(|r| r.status.starts_with("invalid")).count();
    let failed = rows.iter().filter(|r| r.status.starts_with("failed")).count();
    Ok(Check::new(
        "hierarchy-validator",
        invalid == 0,
        format!("{} instances: {} valid, {failed} failed loudly, {invalid} silently invalid", rows.len(), rows.len() - invalid - failed),
    ))
}

/// Runs the hierarchy strategy with random colours to stabilisation on small
/// multi-level hierarchies; the mask asserts that exactly one case applies.
pub fn mask_consistency(runs: usize, seed: u64) -> Result<Check> {
    let mut levels = 0;
    let mut failures = 0;
    for i in 0..runs as u64 {
        let mut s = RandomStream::substream(seed, "mask-run", i);
        let n = 6 + s.below(5);
        let g = Graph::torus(n, 2)?;
        let a = SiteSet::from_sites(n * n, (0..n * n).filter(|_| s.uniform01() < 0.2).map(SiteId::from));
        let Ok(h) = Hierarchy::build_with(&g, &a, 1, 1) else { continue };
        levels = levels.max(h.top_level());
        let params = ProcedureParams::for_hierarchy(&h, 0.1);
        let colors = ColorSequence::random(RandomStream::substream(seed, "colors", i));
        let (mut f, mut mask) = hierarchy_dynamics(&g, &h, params, colors);
        let cfg0 = SubsetConfig::new(a.clone(), a.clone())?.to_config();
        let run = run_arwd(&g, ArwdParams::new(64.0, a.clone())?, &mut f, &mut mask, cfg0, RandomStream::substream(seed, "walks", i), 10_000_000)?;
        let top = h.level_set(h.top_level());
        if run.status != RunStatus::Stabilised || run.last.active_sites().any(|x| top.contains(x)) {
            failures += 1;
        }
    }
    Ok(Check::new("mask-consistency", failures == 0, format!("{runs} runs, deepest level {levels}, {failures} failures")))
}

pub fn parity() -> Result<Check> {
    let cfg = ExperimentConfig { subcommand: "parity-probe".into(), ..Default::default() };
    let reports = experiments::parity_probe(&cfg)?;
    let min = reports.iter().filter_map(|(_, r)| r.min_pi()).fold(f64::INFINITY, f64::min);
    let entries: usize = reports.iter().map(|(_, r)| r.entries.len()).sum();
    let pass = entries > 0 && reports.iter().all(|(_, r)| r.all_hold());
    Ok(Check::new("parity-probe", pass, format!("{entries} entries, min pi {min}, bound {}", reports[0].1.bound)))
}

/// Fingerprint of instruction choices over a fixed grid of arguments.
pub fn instruction_fingerprint() -> u64 {
    let field = InstructionField::new(0x5EED);
    let mut acc = 0u64;
    for x in 0..16u32 {
        for j in 1..=16u64 {
            for degree in [2usize, 4, 6] {
                acc = mix64(acc ^ field.choice(SiteId(x), j, degree) as u64);
            }
        }
    }
    acc
}

pub const INSTRUCTION_FINGERPRINT: u64 = 0x7286_6173_4d23_8e0a;

pub fn instruction_hash() -> Check {
    let got = instruction_fingerprint();
    Check::new("instruction-hash", got == INSTRUCTION_FINGERPRINT, format!("fingerprint {got:#018x}"))
}

/// Checks behind the lemma-checks subcommand.
pub fn lemma_checks(seed: u64, trials: usize) -> Result<Vec<Check>> {
    Ok(vec![
        upsilon_table(10)?,
        green_identities(50, seed)?,
        composition_grid()?,
        bernoulli_geometric(0.05, 1e-5, trials, seed)?,
    ])
}

/// The full invariant suite; `fast` shrinks every sample size.
pub fn selfcheck(seed: u64, fast: bool) -> Result<Vec<Check>> {
    let k = |full: usize, small: usize| if fast { small } else { full };
    Ok(vec![
        instruction_hash(),
        abelian(k(200, 20), k(100, 10), seed, 100_000)?,
        full_half_and_a_stab(k(200, 50), seed)?,
        monotonicity(k(200, 50), seed)?,
        weak_lemma(k(200, 50), seed)?,
        hierarchy_validator(k(100, 8), seed)?,
        mask_consistency(k(20, 4), seed)?,
        upsilon_table(10)?,
        green_identities(k(50, 10), seed)?,
        composition_grid()?,
        bernoulli_geometric(0.05, 1e-5, k(100_000, 20_000), seed)?,
        parity()?,
    ])
}

pub fn selfcheck_table(cfg: &ExperimentConfig) -> Result<Table> {
    let checks = selfcheck(cfg.seed, cfg.fast.unwrap_or(false))?;
    let mut t = checks_table(&checks, cfg.seed);
    t.pass = Some(checks.iter().all(|c| c.pass));
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_respects_the_size_limits() {
        for inst in corpus(100, 1) {
            assert!(inst.graph.site_count() <= 16, "{}", inst.graph.kind());
            assert!(inst.state.total() <= 10);
        }
    }

    #[test]
    fn instruction_fingerprint_is_pinned() {
        assert!(instruction_hash().pass, "{}", instruction_hash().detail);
    }

    #[test]
    fn small_suites_pass() {
        assert!(abelian(10, 5, 3, 10_000).unwrap().pass);
        assert!(full_half_and_a_stab(20, 3).unwrap().pass);
        assert!(upsilon_table(3).unwrap().pass);
        assert!(composition_grid().unwrap().pass);
        assert!(parity().unwrap().pass);
    }
}
