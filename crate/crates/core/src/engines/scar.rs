//! The linearized residual rule.
//!
//! Each iteration computes `p̂ ← q̂ + 2·Ŵ·p̂` where `Ŵ` holds the residual
//! homophily strength of every edge, either one constant or `1/(2·d_u)` on
//! row `u`. Probabilities are carried as residuals (`p̂ = p − 0.5`), so a node
//! with no information sits at 0.

use rayon::prelude::*;

use super::{check_len, propagate, LocalRule, RankingResult, Stopping, Trace, PAR_MIN_LEN};
use crate::error::EngineError;
use crate::graph::Graph;
use crate::labels::{assign_priors, PriorVector, TrainingSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeWeighting {
    /// The same residual homophily `ŵ` on every edge.
    Constant(f64),
    /// `ŵ_vu = 1/(2·d_u)`: each row of `Ŵ` sums to 1/2.
    DegreeNormalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector(pub Vec<f64>);

impl ResidualVector {
    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|x| x.abs()).sum()
    }

    /// Posterior probabilities `p̂ + 0.5`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.0.iter().map(|x| x + 0.5).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScarConfig {
    pub weighting: EdgeWeighting,
    pub theta: f64,
    pub delta: f64,
    pub max_iters: usize,
    /// Clip every residual to `[-0.5, 0.5]` after each update so that
    /// `p̂ + 0.5` stays a probability. Without it the rule is purely linear.
    pub clamp_residuals: bool,
    pub early_stop: bool,
}

impl ScarConfig {
    pub fn new(weighting: EdgeWeighting) -> Self {
        ScarConfig {
            weighting,
            theta: crate::labels::DEFAULT_THETA,
            delta: 1e-3,
            max_iters: 20,
            clamp_residuals: true,
            early_stop: true,
        }
    }

    fn validate(&self) -> Result<(), EngineError> {
        if !(self.delta > 0.0) {
            return Err(EngineError::InvalidConfig(format!("delta must be > 0, got {}", self.delta)));
        }
        if let EdgeWeighting::Constant(w) = self.weighting {
            if !(w.is_finite() && w > 0.0) {
                return Err(EngineError::InvalidConfig(format!("w_hat must be > 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// Residual neighbor influence `2·p̂_v·ŵ_vu`.
pub fn residual_neighbor_influence(p_hat_v: f64, w_hat_vu: f64) -> f64 {
    2.0 * p_hat_v * w_hat_vu
}

struct ScarRule<'a> {
    graph: &'a Graph,
    prior: &'a [f64],
    weighting: EdgeWeighting,
    clamp: bool,
}

impl ScarRule<'_> {
    #[inline]
    fn update(&self, u: usize, prev: &[f64]) -> f64 {
        let row = self.graph.neighbors(u as u32);
        let sum: f64 = row.iter().map(|&v| prev[v as usize]).sum();
        let influence = match self.weighting {
            EdgeWeighting::Constant(w) => 2.0 * w * sum,
            // isolated node: empty sum, no influence
            EdgeWeighting::DegreeNormalized if row.is_empty() => 0.0,
            EdgeWeighting::DegreeNormalized => sum / row.len() as f64,
        };
        let p = self.prior[u] + influence;
        if self.clamp {
            p.clamp(-0.5, 0.5)
        } else {
            p
        }
    }
}

impl LocalRule for ScarRule<'_> {
    type State = Vec<f64>;

    fn initial(&self) -> Vec<f64> {
        self.prior.to_vec()
    }

    fn apply(&self, prev: &Vec<f64>, next: &mut Vec<f64>) {
        next.par_iter_mut()
            .with_min_len(PAR_MIN_LEN)
            .enumerate()
            .for_each(|(u, out)| *out = self.update(u, prev));
    }

    fn observe(&self, state: &Vec<f64>, out: &mut [f64]) {
        out.copy_from_slice(state);
    }

    fn observed_len(&self) -> usize {
        self.prior.len()
    }
}

/// One synchronous application of the linear rule,
/// `p̂_u = q̂_u + 2·Σ_{v∈Γ(u)} p̂_prev,v·ŵ_vu`, without clipping.
pub fn scar_step(
    g: &Graph,
    prior: &PriorVector,
    prev: &ResidualVector,
    weighting: EdgeWeighting,
) -> Result<ResidualVector, EngineError> {
    check_len(g.node_count(), prior.len())?;
    check_len(g.node_count(), prev.0.len())?;
    let rule = ScarRule { graph: g, prior: prior.as_slice(), weighting, clamp: false };
    let mut next = vec![0.0; g.node_count()];
    rule.apply(&prev.0, &mut next);
    Ok(ResidualVector(next))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScarOutcome {
    pub residuals: ResidualVector,
    pub trace: Trace,
}

impl ScarOutcome {
    pub fn into_ranking(self) -> RankingResult {
        RankingResult::new(self.residuals.probabilities(), self.trace)
    }
}

/// Iterates the rule from `p̂⁽⁰⁾ = q̂` until the relative L1 change drops
/// below `delta` or `max_iters` iterations have run.
pub fn run_sybilscar_with_priors(
    g: &Graph,
    prior: &PriorVector,
    cfg: &ScarConfig,
) -> Result<ScarOutcome, EngineError> {
    cfg.validate()?;
    check_len(g.node_count(), prior.len())?;
    let rule = ScarRule {
        graph: g,
        prior: prior.as_slice(),
        weighting: cfg.weighting,
        clamp: cfg.clamp_residuals,
    };
    let (state, trace) = propagate(
        &rule,
        Stopping { max_iters: cfg.max_iters, delta: cfg.delta, early_stop: cfg.early_stop },
    );
    Ok(ScarOutcome { residuals: ResidualVector(state), trace })
}

/// Assigns `±theta` priors from the training set and runs the rule. Scores
/// are posterior probabilities; `p > 0.5` predicts a Sybil.
pub fn run_sybilscar(g: &Graph, ts: &TrainingSet, cfg: &ScarConfig) -> Result<ScarOutcome, EngineError> {
    let prior = assign_priors(ts, cfg.theta, g.node_count())?;
    run_sybilscar_with_priors(g, &prior, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeId;
    use crate::synth::er_graph;
    use proptest::prelude::*;

    fn linear(weighting: EdgeWeighting) -> ScarConfig {
        ScarConfig { clamp_residuals: false, ..ScarConfig::new(weighting) }
    }

    #[test]
    fn influence_values() {
        assert_eq!(residual_neighbor_influence(0.0, 0.3), 0.0);
        assert!((residual_neighbor_influence(0.1, 0.4) - 0.08).abs() < 1e-15);
    }

    #[test]
    fn zero_previous_returns_prior() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]);
        let q = PriorVector(vec![0.1, -0.2, 0.0, 0.3]);
        for w in [EdgeWeighting::Constant(0.2), EdgeWeighting::DegreeNormalized] {
            let p = scar_step(&g, &q, &ResidualVector(vec![0.0; 4]), w).unwrap();
            assert_eq!(p.0, q.0);
        }
    }

    #[test]
    fn two_neighbor_example() {
        // u = 0 with q̂ = 0.1 and two neighbors at 0.05
        let g = Graph::from_edges(3, [(0, 1), (0, 2)]);
        let q = PriorVector(vec![0.1, 0.0, 0.0]);
        let prev = ResidualVector(vec![0.0, 0.05, 0.05]);
        let p = scar_step(&g, &q, &prev, EdgeWeighting::Constant(0.01)).unwrap();
        assert!((p.0[0] - 0.102).abs() < 1e-15);
    }

    #[test]
    fn degree_normalized_preserves_average() {
        let g = er_graph(60, 6.0, 3).unwrap();
        let c = 0.137;
        let p = scar_step(
            &g,
            &PriorVector(vec![0.0; 60]),
            &ResidualVector(vec![c; 60]),
            EdgeWeighting::DegreeNormalized,
        )
        .unwrap();
        for u in 0..60 {
            if g.degree(u as NodeId) > 0 {
                assert!((p.0[u] - c).abs() < 1e-15);
            } else {
                assert_eq!(p.0[u], 0.0);
            }
        }
    }

    #[test]
    fn isolated_node_keeps_prior_under_degree_weighting() {
        let g = Graph::from_edges(3, [(0, 1)]);
        let q = PriorVector(vec![0.0, 0.0, -0.2]);
        let p = scar_step(&g, &q, &ResidualVector(vec![0.3, 0.3, 0.3]), EdgeWeighting::DegreeNormalized)
            .unwrap();
        assert_eq!(p.0[2], -0.2);
    }

    #[test]
    fn unlabeled_run_is_a_fixed_point() {
        let g = er_graph(50, 5.0, 1).unwrap();
        let out = run_sybilscar(&g, &TrainingSet::default(), &ScarConfig::new(EdgeWeighting::Constant(0.05)))
            .unwrap()
            .into_ranking();
        assert!(out.scores.iter().all(|&s| s == 0.5));
        assert_eq!(out.iterations_run, 1);
        assert!(out.converged);
    }

    #[test]
    fn two_node_fixed_point() {
        // p̂0 = 0.1 + 0.2·p̂1, p̂1 = 0.2·p̂0  =>  p̂0 = 0.1/0.96, p̂1 = 0.02/0.96
        let g = Graph::from_edges(2, [(0, 1)]);
        let ts = TrainingSet::new(vec![], vec![0]).unwrap();
        let cfg = ScarConfig { delta: 1e-6, max_iters: 100, ..ScarConfig::new(EdgeWeighting::Constant(0.1)) };
        let out = run_sybilscar(&g, &ts, &cfg).unwrap();
        assert!(out.trace.converged);
        assert!((out.residuals.0[0] - 0.1 / 0.96).abs() < 1e-6);
        assert!((out.residuals.0[1] - 0.02 / 0.96).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_config() {
        let g = Graph::from_edges(2, [(0, 1)]);
        let ts = TrainingSet::default();
        let bad = [
            ScarConfig { delta: 0.0, ..ScarConfig::new(EdgeWeighting::DegreeNormalized) },
            ScarConfig::new(EdgeWeighting::Constant(-0.1)),
        ];
        for cfg in bad {
            assert!(run_sybilscar(&g, &ts, &cfg).is_err());
        }
        let short = PriorVector(vec![0.0]);
        assert!(matches!(
            run_sybilscar_with_priors(&g, &short, &ScarConfig::new(EdgeWeighting::DegreeNormalized)),
            Err(EngineError::LengthMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn clamp_keeps_probabilities_valid() {
        // 2·ŵ·ρ(A) far above 1: the linear rule diverges, the clipped one saturates
        let g = er_graph(100, 10.0, 5).unwrap();
        let ts = TrainingSet::new(vec![0, 1, 2], vec![50, 51, 52]).unwrap();
        let cfg = ScarConfig { early_stop: false, ..ScarConfig::new(EdgeWeighting::Constant(0.2)) };
        let out = run_sybilscar(&g, &ts, &cfg).unwrap();
        assert!(out.residuals.0.iter().all(|x| (-0.5..=0.5).contains(x)));
        let lin = run_sybilscar(&g, &ts, &ScarConfig { clamp_residuals: false, ..cfg }).unwrap();
        assert!(lin.residuals.0.iter().any(|x| x.abs() > 0.5));
        assert!(lin.residuals.0.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn fixed_point_residual_within_delta() {
        let g = er_graph(200, 8.0, 11).unwrap();
        let max_deg = g.stats().max_degree as f64;
        let w = 0.9 / (2.0 * max_deg);
        let ts = TrainingSet::new((0..10).collect(), (100..110).collect()).unwrap();
        let cfg = ScarConfig { delta: 1e-8, max_iters: 10_000, ..linear(EdgeWeighting::Constant(w)) };
        let out = run_sybilscar(&g, &ts, &cfg).unwrap();
        assert!(out.trace.converged);
        let q = assign_priors(&ts, cfg.theta, 200).unwrap();
        let again = scar_step(&g, &q, &out.residuals, cfg.weighting).unwrap();
        let gap: f64 = again.0.iter().zip(&out.residuals.0).map(|(a, b)| (a - b).abs()).sum();
        assert!(gap <= cfg.delta * out.residuals.l1_norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn doubling_priors_doubles_residuals(seed in 0u64..1000, theta in 0.01f64..=0.25, iters in 1usize..30) {
            let g = er_graph(80, 6.0, seed).unwrap();
            let ts = TrainingSet::new((0..8).collect(), (40..48).collect()).unwrap();
            for weighting in [EdgeWeighting::Constant(0.04), EdgeWeighting::DegreeNormalized] {
                let cfg = ScarConfig { max_iters: iters, early_stop: false, theta, ..linear(weighting) };
                let one = run_sybilscar(&g, &ts, &cfg).unwrap();
                let two = run_sybilscar(&g, &ts, &ScarConfig { theta: 2.0 * theta, ..cfg.clone() }).unwrap();
                for (a, b) in one.residuals.0.iter().zip(&two.residuals.0) {
                    prop_assert_eq!(2.0 * a, *b);
                }
            }
        }

        #[test]
        fn swapping_labels_negates(seed in 0u64..1000, iters in 1usize..30, clamp in any::<bool>()) {
            let g = er_graph(80, 6.0, seed).unwrap();
            let ts = TrainingSet::new((0..8).collect(), (40..50).collect()).unwrap();
            let cfg = ScarConfig {
                max_iters: iters,
                early_stop: false,
                clamp_residuals: clamp,
                ..ScarConfig::new(EdgeWeighting::Constant(0.1))
            };
            let a = run_sybilscar(&g, &ts, &cfg).unwrap();
            let b = run_sybilscar(&g, &ts.swapped(), &cfg).unwrap();
            for (x, y) in a.residuals.0.iter().zip(&b.residuals.0) {
                prop_assert_eq!(*x, -*y);
            }
        }

        #[test]
        fn residual_influence_matches_probability_form(p in -0.5f64..=0.5, w in -0.5f64..=0.5) {
            let via_prob = super::super::neighbor_influence(p + 0.5, w + 0.5) - 0.5;
            prop_assert!((residual_neighbor_influence(p, w) - via_prob).abs() < 1e-12);
        }
    }
}
