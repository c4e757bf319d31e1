mod common;

use common::*;
use fieldfilter::exact::{ExactEngine, JointPmf};
use fieldfilter::graph::{partition_stats, EnlargedPartition, Partition, SpatialGraph};
use fieldfilter::metrics::bounds::{bias_bound, corollary_bound, variance_bound, BoundParams};
use fieldfilter::metrics::{norm_estimate, tv_distance, NormMode};
use fieldfilter::model::ObsRecord;
use fieldfilter::particle::normalized_weights;
use proptest::prelude::*;

/// Connected graph: a random tree plus random extra edges.
fn connected_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..12).prop_flat_map(|n| {
        let parents: Vec<BoxedStrategy<usize>> = (1..n).map(|v| (0..v).boxed()).collect();
        let extra = prop::collection::vec((0..n, 0..n), 0..n);
        (Just(n), parents, extra).prop_map(|(n, parents, extra)| {
            let mut edges: Vec<(usize, usize)> = parents.iter().enumerate().map(|(i, &p)| (p, i + 1)).collect();
            edges.extend(extra.into_iter().filter(|(a, b)| a != b));
            (n, edges)
        })
    })
}

fn labels(n: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..n.max(1), n)
}

fn graph_and_partition() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<usize>)> {
    connected_graph().prop_flat_map(|(n, e)| (Just(n), Just(e), labels(n)))
}

fn partition_from(labels: &[usize]) -> Partition {
    // compact labels so no block is empty
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    let compact: Vec<usize> = labels.iter().map(|l| seen.binary_search(l).unwrap()).collect();
    Partition::from_labels(&compact).unwrap()
}

proptest! {
    #[test]
    fn distances_match_floyd_warshall((n, edges) in connected_graph()) {
        let g = SpatialGraph::new(n, &edges).unwrap();
        let fw = floyd_warshall(n, &edges);
        for v in 0..n {
            for w in 0..n {
                prop_assert_eq!(g.dist(v, w), fw[v][w]);
                prop_assert_eq!(g.dist(v, w), g.dist(w, v));
            }
        }
        prop_assert_eq!(g.diameter(), fw.iter().flatten().copied().max().unwrap());
    }

    #[test]
    fn neighborhoods_and_boundaries((n, edges) in connected_graph(), r in 0usize..3, mask in any::<u16>()) {
        let g = SpatialGraph::new(n, &edges).unwrap();
        let set: Vec<usize> = (0..n).filter(|v| (mask >> v) & 1 == 1).collect();
        prop_assume!(!set.is_empty());
        for v in 0..n {
            let nb = g.neighborhood(v, r).unwrap();
            prop_assert!(nb.contains(&v));
            prop_assert!(nb.iter().all(|&w| g.dist(v, w) <= r));
        }
        let (boundary, interior) = g.boundary_interior(&set, r).unwrap();
        let mut union = boundary.clone();
        union.extend(&interior);
        union.sort_unstable();
        prop_assert_eq!(&union, &set);
        prop_assert!(boundary.iter().all(|v| !interior.contains(v)));
        for &v in &interior {
            prop_assert!(g.neighborhood(v, r).unwrap().iter().all(|w| set.contains(w)));
        }
        for &v in &boundary {
            prop_assert!(g.neighborhood(v, r).unwrap().iter().any(|w| !set.contains(w)));
        }
    }

    #[test]
    fn enlargement_is_monotone((n, edges, labels) in graph_and_partition(), b in 0usize..4) {
        let g = SpatialGraph::new(n, &edges).unwrap();
        let p = partition_from(&labels);
        let small = EnlargedPartition::new(&g, p.clone(), b).unwrap();
        let big = EnlargedPartition::new(&g, p.clone(), b + 1).unwrap();
        for (k, block) in p.blocks().iter().enumerate() {
            prop_assert!(block.iter().all(|v| small.enlarged_blocks()[k].contains(v)));
            prop_assert!(small.enlarged_blocks()[k].iter().all(|v| big.enlarged_blocks()[k].contains(v)));
            prop_assert!(small.enlarged_blocks()[k].iter().all(|&v| g.distance_to(&[v], block).unwrap() <= Some(b)));
        }
        let full = EnlargedPartition::new(&g, p, g.diameter()).unwrap();
        prop_assert!(full.enlarged_blocks().iter().all(|kb| kb.len() == n));
    }

    #[test]
    fn partition_statistics_are_consistent((n, edges, labels) in graph_and_partition(), b in 0usize..3, r in 0usize..3) {
        let g = SpatialGraph::new(n, &edges).unwrap();
        let p = partition_from(&labels);
        let ep = EnlargedPartition::new(&g, p.clone(), b).unwrap();
        let s = partition_stats(&g, &ep, r).unwrap();
        prop_assert!(s.k_inf <= s.kbar_inf);
        prop_assert!(s.delta_k >= 1 && s.delta_k <= p.len());
        prop_assert!(s.delta_kbar >= s.delta_k && s.delta_kbar <= p.len());
        prop_assert!(s.delta <= n);
        prop_assert_eq!(s.k_inf, p.max_block_size());
    }

    #[test]
    fn tv_is_a_bounded_metric(a in prop::collection::vec(0.0f64..1.0, 1..8), seed in any::<u64>()) {
        let k = a.len();
        let norm = |v: Vec<f64>| { let s: f64 = v.iter().sum::<f64>() + 1e-9; v.iter().map(|x| (x + 1e-9 / k as f64) / s).collect::<Vec<_>>() };
        let p = norm(a);
        let q = random_pmf(k, seed);
        let u = random_pmf(k, seed.wrapping_add(1));
        let pq = tv_distance(&p, &q).unwrap();
        prop_assert!((0.0..=2.0 + 1e-12).contains(&pq));
        prop_assert_eq!(pq, tv_distance(&q, &p).unwrap());
        prop_assert!(tv_distance(&p, &p).unwrap() == 0.0);
        prop_assert!(pq <= tv_distance(&p, &u).unwrap() + tv_distance(&u, &q).unwrap() + 1e-12);
    }

    #[test]
    fn estimator_modes_are_ordered(k in 1usize..7, reps in 2usize..6, seed in any::<u64>()) {
        let reference = random_pmf(k, seed);
        let replicates: Vec<Vec<f64>> = (0..reps).map(|r| random_pmf(k, seed ^ (r as u64 + 1))).collect();
        let rms = norm_estimate(&[0], &reference, &replicates, NormMode::RmsTv).unwrap().value;
        let sign = norm_estimate(&[0], &reference, &replicates, NormMode::SignMax).unwrap().value;
        prop_assert!(sign <= rms + 1e-12);
        prop_assert!(rms / (k as f64).sqrt() <= sign + 1e-12);
    }

    #[test]
    fn weights_normalise_and_ignore_shifts(w in prop::collection::vec(-700.0f64..0.0, 1..20), shift in -500.0f64..500.0) {
        let a = normalized_weights(&w).unwrap();
        let shifted: Vec<f64> = w.iter().map(|x| x + shift).collect();
        let b = normalized_weights(&shifted).unwrap();
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(max_abs(&a, &b) < 1e-12);
    }

    #[test]
    fn exact_steps_preserve_mass(seed in any::<u64>(), code in 0usize..16) {
        let raw = RawModel::random(4, &cycle_edges(4), 1, vec![2; 4], vec![2; 4], seed);
        let model = raw.build(SpatialGraph::cycle(4).unwrap(), 1);
        let engine = ExactEngine::new(&model);
        let mu = JointPmf::new((0..4).collect(), vec![2; 4], random_pmf(16, seed ^ 5)).unwrap();
        let pred = engine.predict(&mu).unwrap();
        prop_assert!((pred.total() - 1.0).abs() < 1e-12);
        let y = ObsRecord { time: 1, values: (0..4).map(|v| ((code >> v) & 1) as u16).collect() };
        let post = engine.correct(&pred, &y).unwrap();
        prop_assert!((post.total() - 1.0).abs() < 1e-12);
        prop_assert!(post.probs().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn bounds_are_monotone(
        eps in 0.9995f64..0.99999,
        d in 0usize..6,
        b in 2usize..6,
        n in 1usize..10_000,
        kbar in 1usize..6,
    ) {
        let p = BoundParams {
            eps, kappa: 0.9, r: 1, delta: 3, delta_k: 3, delta_kbar: 3, k_inf: 1,
            kbar_inf: kbar, n_particles: n, set_size: 1, border_distance: Some(d), b,
        };
        let v = |p: &BoundParams, f: fn(&BoundParams) -> fieldfilter::Result<fieldfilter::metrics::Bound>| {
            f(p).unwrap().value().unwrap()
        };
        let farther = BoundParams { border_distance: Some(d + 1), ..p };
        prop_assert!(v(&farther, bias_bound) < v(&p, bias_bound));
        let infinite = BoundParams { border_distance: None, ..p };
        prop_assert_eq!(v(&infinite, bias_bound), 0.0);
        let wider = BoundParams { b: b + 1, ..p };
        prop_assert!(v(&wider, corollary_bound) < v(&p, corollary_bound));
        let more = BoundParams { n_particles: n + 1, ..p };
        prop_assert!(v(&more, variance_bound) < v(&p, variance_bound));
        let bigger = BoundParams { kbar_inf: kbar + 1, ..p };
        prop_assert!(v(&bigger, variance_bound) > v(&p, variance_bound));
        let better_mixing = BoundParams { eps: (eps + 1.0) / 2.0, ..p };
        prop_assert!(v(&better_mixing, bias_bound) <= v(&p, bias_bound));
    }
}
