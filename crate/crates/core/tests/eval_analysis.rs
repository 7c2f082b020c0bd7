use proptest::prelude::*;
use sybilscar::analysis::{averaging_step, benign_mixing_sim, run_averaging, RegionModel};
use sybilscar::engines::{with_threads, EngineKind};
use sybilscar::eval::{auc, ranking, run_sweep, top_k_fractions, ExperimentSpec, SweepVar};
use sybilscar::labels::{Label, LabelSet};
use sybilscar::synth::er_graph;
use sybilscar::{Graph, NodeId};

fn arb_scored() -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
    (2usize..120).prop_flat_map(|n| {
        (
            prop::collection::vec((0u8..8).prop_map(|x| x as f64 / 8.0), n),
            prop::collection::vec(
                prop_oneof![Just(Label::Sybil), Just(Label::Benign), Just(Label::Unlabeled)],
                n,
            ),
        )
    })
}

fn brute_force_auc(scores: &[f64], labels: &[Label]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0u64);
    for (i, li) in labels.iter().enumerate() {
        for (j, lj) in labels.iter().enumerate() {
            if *li == Label::Sybil && *lj == Label::Benign {
                pairs += 1;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

proptest! {
    #[test]
    fn auc_matches_pair_counting((scores, labels) in arb_scored()) {
        let truth = LabelSet::new(labels.clone());
        let all: Vec<NodeId> = (0..scores.len() as NodeId).collect();
        match (auc(&scores, &truth, &all), brute_force_auc(&scores, &labels)) {
            (Ok(fast), Some(slow)) => prop_assert!((fast.auc - slow).abs() < 1e-12),
            (Err(_), None) => {}
            (fast, slow) => prop_assert!(false, "{:?} vs {:?}", fast, slow),
        }
    }

    #[test]
    fn auc_ignores_monotone_transforms((scores, labels) in arb_scored()) {
        let truth = LabelSet::new(labels);
        let all: Vec<NodeId> = (0..scores.len() as NodeId).collect();
        if let Ok(base) = auc(&scores, &truth, &all) {
            let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s - 1.0).tanh()).collect();
            let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
            prop_assert_eq!(auc(&squashed, &truth, &all).unwrap().auc, base.auc);
            prop_assert!((auc(&flipped, &truth, &all).unwrap().auc - (1.0 - base.auc)).abs() < 1e-12);
        }
    }

    #[test]
    fn ranking_is_a_sorted_permutation(scores in prop::collection::vec(-3i8..3, 0..80)) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let order = ranking(&scores);
        let mut seen = order.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..scores.len() as NodeId).collect::<Vec<_>>());
        for w in order.windows(2) {
            let (a, b) = (scores[w[0] as usize], scores[w[1] as usize]);
            prop_assert!(a > b || (a == b && w[0] < w[1]));
        }
    }
}

#[test]
fn top_k_fractions_count_sybils_per_block() {
    let scores: Vec<f64> = (0..10).map(|i| 10.0 - i as f64).collect();
    let labels: Vec<Label> =
        [1, 1, 0, 1, 0, 0, 1, 0, 0, 0].iter().map(|&s| if s == 1 { Label::Sybil } else { Label::Benign }).collect();
    let top = top_k_fractions(&scores, &LabelSet::new(labels), 10, 5).unwrap();
    assert_eq!(top.fractions, vec![0.6, 0.2]);
}

#[test]
fn sweeps_are_reproducible_and_thread_independent() {
    let mut spec = ExperimentSpec::new(er_graph(300, 10.0, 9).unwrap());
    spec.sweep = SweepVar::Tau;
    spec.values = vec![0.0, 0.25];
    spec.seeds = vec![1, 2, 3];
    spec.train_size = 40;
    spec.attack_edges = 200;
    spec.engines = vec![EngineKind::SybilScarC, EngineKind::SybilScarD, EngineKind::SybilBelief];
    let a = with_threads(1, || run_sweep(&spec)).unwrap();
    let b = with_threads(4, || run_sweep(&spec)).unwrap();
    assert_eq!(a, b);
    let (mut csv_a, mut csv_b) = (Vec::new(), Vec::new());
    a.write_csv(&mut csv_a).unwrap();
    b.write_csv(&mut csv_b).unwrap();
    assert_eq!(csv_a, csv_b);
    assert_eq!(a.cells.len(), 2 * 3 * 3);
    assert!(a.rows.iter().all(|r| r.repetitions == 3));
}

fn circulant(n: usize, offsets: &[usize]) -> Graph {
    let edges = (0..n).flat_map(|u| offsets.iter().map(move |&k| (u as NodeId, ((u + k) % n) as NodeId)));
    Graph::from_edges(n, edges)
}

#[test]
fn averaging_preserves_the_mean_on_regular_graphs() {
    let g = circulant(101, &[1, 2, 7]);
    assert!(g.degrees().iter().all(|&d| d == 6));
    let initial: Vec<f64> = (0..101).map(|u| if u % 13 == 0 { -0.1 } else { 0.0 }).collect();
    let mean0 = initial.iter().sum::<f64>() / 101.0;
    let mut prev = initial;
    let mut next = vec![0.0; 101];
    for _ in 0..20 {
        averaging_step(&g, &prev, &mut next);
        std::mem::swap(&mut prev, &mut next);
        let mean = prev.iter().sum::<f64>() / 101.0;
        assert!((mean - mean0).abs() < 1e-15);
    }
}

#[test]
fn averaging_with_everyone_labeled_stays_negative() {
    let g = er_graph(200, 8.0, 2).unwrap();
    let out = run_averaging(&g, vec![-0.1; 200], 1);
    assert!(out.iter().all(|&r| r < 0.0));
}

#[test]
fn no_attack_edges_leaves_the_sybil_region_untouched() {
    for model in [RegionModel::ErdosRenyi, RegionModel::PreferentialAttachment] {
        let r = benign_mixing_sim(model, 300, 10.0, 0, 10, 3).unwrap();
        assert!(r.sybil().iter().all(|&x| x == 0.0));
        assert!(r.unlabeled_benign().iter().all(|&x| x <= 0.0));
    }
}
