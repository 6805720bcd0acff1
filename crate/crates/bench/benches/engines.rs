use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ssm_core::{
    poisson_init, run_arwd, stabilize, ArwdParams, Graph, InstructionField, InstructionSource, MinActive,
    RandomStream, SelectionPolicy, SiteId, SiteSet, StabilityMode, SubsetConfig, WakeAll,
};

fn instruction_hashing(c: &mut Criterion) {
    let g = Graph::torus(32, 2).unwrap();
    let field = InstructionField::new(1);
    c.bench_function("instruction/torus32", |b| {
        let mut j = 0u64;
        b.iter(|| {
            j += 1;
            field.instruction(&g, SiteId((j % 1024) as u32), j).unwrap()
        })
    });
}

fn stabilisation(c: &mut Criterion) {
    let mut group = c.benchmark_group("stabilize");
    for l in [20usize, 40] {
        let g = Graph::boxed(l, 1).unwrap();
        let eta = poisson_init(&g, 0.9, &mut RandomStream::new(7)).unwrap();
        let vp = g.interior();
        let field = InstructionField::new(3);
        for (name, mode) in [("full", StabilityMode::Full), ("half", StabilityMode::Half)] {
            group.bench_with_input(BenchmarkId::new(name, l), &eta, |b, eta| {
                b.iter(|| stabilize(&g, black_box(eta), &vp, &mode, &field, SelectionPolicy::Lexicographic, u64::MAX).unwrap())
            });
        }
    }
    group.finish();
}

fn arwd(c: &mut Criterion) {
    let g = Graph::cycle(64).unwrap();
    let a = SiteSet::from_sites(64, (0..64).step_by(2).map(SiteId));
    let u = SiteSet::from_sites(64, (0..64).step_by(8).map(SiteId));
    let cfg0 = SubsetConfig::new(a.clone(), u).unwrap().to_config();
    let params = ArwdParams::new(8.0, a).unwrap();
    c.bench_function("arwd/cycle64", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            run_arwd(&g, params.clone(), &mut MinActive::default(), &mut WakeAll, cfg0.clone(), RandomStream::new(seed), u64::MAX)
                .unwrap()
                .t
        })
    });
}

criterion_group!(benches, instruction_hashing, stabilisation, arwd);
criterion_main!(benches);
