use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use sybilscar::graph::{read_dense_edge_list, read_edge_list};
use sybilscar::synth::{join_regions, pa_graph, replica_attack, AttackConfig};
use sybilscar::{Graph, NodeId};

fn arb_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec((0..n as NodeId, 0..n as NodeId), 0..4 * n)
            .prop_map(move |edges| Graph::from_edges(n, edges))
    })
}

fn edge_set(g: &Graph) -> BTreeSet<(NodeId, NodeId)> {
    g.edges().collect()
}

proptest! {
    #[test]
    fn adjacency_is_symmetric_and_simple(g in arb_graph(40)) {
        prop_assert!(g.is_well_formed());
        for u in 0..g.node_count() as NodeId {
            let nbrs = g.neighbors(u);
            prop_assert!(nbrs.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(!nbrs.contains(&u));
            for &v in nbrs {
                prop_assert!(g.neighbors(v).binary_search(&u).is_ok());
            }
        }
        prop_assert_eq!(g.degrees().iter().sum::<usize>(), 2 * g.edge_count());
    }

    #[test]
    fn edge_list_round_trips(g in arb_graph(40)) {
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let dense = read_dense_edge_list(buf.as_slice()).unwrap();
        prop_assert_eq!(&dense, &g);
        if g.edge_count() > 0 {
            let loaded = read_edge_list(buf.as_slice()).unwrap();
            let back: BTreeSet<(u64, u64)> = loaded
                .graph
                .edges()
                .map(|(u, v)| (loaded.external_ids[u as usize], loaded.external_ids[v as usize]))
                .collect();
            let orig: BTreeSet<(u64, u64)> = g.edges().map(|(u, v)| (u as u64, v as u64)).collect();
            prop_assert_eq!(back, orig);
        }
    }

    #[test]
    fn replica_regions_are_copies(g in arb_graph(30), attack in 0usize..20, seed in 0u64..1000) {
        let n = g.node_count();
        let attack = attack.min(n * n);
        let inst = replica_attack(&g, AttackConfig { attack_edges: attack, seed }).unwrap();
        prop_assert_eq!(inst.graph.node_count(), 2 * n);
        prop_assert_eq!(inst.graph.edge_count(), 2 * g.edge_count() + attack);

        let shift = n as NodeId;
        let mut benign = BTreeSet::new();
        let mut sybil = BTreeSet::new();
        let mut cross = BTreeSet::new();
        for (u, v) in inst.graph.edges() {
            match (u < shift, v < shift) {
                (true, true) => { benign.insert((u, v)); }
                (false, false) => { sybil.insert((u - shift, v - shift)); }
                _ => { cross.insert((u.min(v), u.max(v))); }
            }
        }
        prop_assert_eq!(&benign, &edge_set(&g));
        prop_assert_eq!(&sybil, &edge_set(&g));
        let listed: BTreeSet<_> = inst.attack_edges.iter().copied().collect();
        prop_assert_eq!(listed.len(), attack);
        prop_assert_eq!(cross, listed);
        prop_assert!(inst.attack_edges.iter().all(|&(b, s)| b < shift && s >= shift));
    }

    #[test]
    fn attack_edges_are_seed_deterministic(seed in 0u64..1000) {
        let g = pa_graph(50, 2, 3).unwrap();
        let a = replica_attack(&g, AttackConfig { attack_edges: 40, seed }).unwrap();
        let b = replica_attack(&g, AttackConfig { attack_edges: 40, seed }).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn attack_edges_cover_cross_pairs_uniformly() {
    let benign = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]);
    let sybil = Graph::from_edges(3, [(0, 1), (1, 2)]);
    let trials = 6000u64;
    let mut counts: HashMap<(NodeId, NodeId), u64> = HashMap::new();
    for seed in 0..trials {
        let inst = join_regions(&benign, &sybil, AttackConfig { attack_edges: 3, seed }).unwrap();
        for &e in &inst.attack_edges {
            *counts.entry(e).or_default() += 1;
        }
    }
    assert_eq!(counts.len(), 12);
    let expected = trials as f64 * 3.0 / 12.0;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 11 degrees of freedom; the 0.999 quantile is 31.26.
    assert!(chi2 < 31.26, "chi-square {chi2}");
}
