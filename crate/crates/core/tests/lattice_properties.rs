use proptest::prelude::*;
use ssm_core::{Graph, GraphKind, Metric, SiteId, SiteSet};

#[test]
fn bfs_ball_equals_distance_filter() {
    for n in 3..=9 {
        for d in 1..=2 {
            let g = Graph::torus(n, d).unwrap();
            for x in g.sites() {
                for r in 0..=n / 2 + 1 {
                    for metric in [Metric::Sup, Metric::Graph] {
                        let ball = g.ball(x, r, metric).unwrap();
                        let direct = SiteSet::from_sites(
                            g.site_count(),
                            g.sites().filter(|&y| g.distance(x, y, metric).unwrap() <= r),
                        );
                        assert_eq!(ball, direct, "n={n} d={d} x={x} r={r} {metric:?}");
                    }
                }
            }
        }
    }
}

#[test]
fn sup_ball_volume() {
    for (n, d, r) in [(5, 2, 1), (7, 2, 3), (9, 3, 2), (11, 1, 5)] {
        let g = Graph::torus(n, d).unwrap();
        assert_eq!(g.ball(SiteId(0), r, Metric::Sup).unwrap().len(), (2 * r + 1).pow(d as u32));
    }
}

#[test]
fn neighbour_relation_is_symmetric() {
    for kind in [
        GraphKind::Torus { n: 5, d: 3 },
        GraphKind::Box { l: 2, d: 2 },
        GraphKind::Cycle { n: 3 },
        GraphKind::Path { n: 6 },
    ] {
        let g = Graph::new(kind).unwrap();
        for x in g.interior_sites() {
            for &y in g.neighbors(x).unwrap() {
                assert!(g.adjacent(y).contains(&x), "{kind}: {x} -> {y}");
            }
        }
    }
}

#[test]
fn torus_degrees() {
    let g = Graph::torus(4, 3).unwrap();
    assert!(g.sites().all(|x| g.degree(x) == 6));
    let c = Graph::cycle(9).unwrap();
    assert!(c.sites().all(|x| c.degree(x) == 2));
}

fn torus_and_triple() -> impl Strategy<Value = (usize, usize, u32, u32, u32)> {
    (3usize..12, 1usize..4).prop_flat_map(|(n, d)| {
        let count = n.pow(d as u32) as u32;
        (Just(n), Just(d), 0..count, 0..count, 0..count)
    })
}

proptest! {
    #[test]
    fn torus_distance_is_a_metric((n, d, a, b, c) in torus_and_triple()) {
        let g = Graph::torus(n, d).unwrap();
        let (x, y, z) = (SiteId(a), SiteId(b), SiteId(c));
        let dxy = g.torus_distance(x, y).unwrap();
        prop_assert_eq!(dxy, g.torus_distance(y, x).unwrap());
        prop_assert_eq!(dxy == 0, x == y);
        prop_assert!(dxy <= n / 2);
        prop_assert!(dxy <= g.torus_distance(x, z).unwrap() + g.torus_distance(z, y).unwrap());
    }

    #[test]
    fn r_components_partition(n in 5usize..10, r in 1usize..4, bits in prop::collection::vec(any::<bool>(), 100)) {
        let g = Graph::torus(n, 2).unwrap();
        let a = SiteSet::from_sites(n * n, g.sites().filter(|x| bits[x.index() % bits.len()] && x.index() % 3 != 0));
        let parts = g.r_components(&a, r, Metric::Sup).unwrap();
        let mut union = SiteSet::new(n * n);
        for p in &parts {
            prop_assert!(p.is_disjoint(&union));
            union = union.union(p);
            // Each part is r-connected: growing from one site reaches all of it.
            let mut reached = SiteSet::from_sites(n * n, p.min());
            let mut frontier = vec![p.min().unwrap()];
            while let Some(x) = frontier.pop() {
                for y in p.iter() {
                    if !reached.contains(y) && g.torus_distance(x, y).unwrap() <= r {
                        reached.insert(y);
                        frontier.push(y);
                    }
                }
            }
            prop_assert_eq!(&reached, p);
        }
        prop_assert_eq!(union, a);
        for (i, p) in parts.iter().enumerate() {
            for q in &parts[i + 1..] {
                for x in p.iter() {
                    for y in q.iter() {
                        prop_assert!(g.torus_distance(x, y).unwrap() > r);
                    }
                }
            }
        }
    }

    #[test]
    fn ball_is_monotone(n in 3usize..10, x in 0u32..9, r in 0usize..5) {
        let g = Graph::torus(n, 2).unwrap();
        let x = SiteId(x % (n * n) as u32);
        let small = g.ball(x, r, Metric::Graph).unwrap();
        prop_assert!(small.contains(x));
        prop_assert!(small.is_subset(&g.ball(x, r + 1, Metric::Graph).unwrap()));
    }
}
