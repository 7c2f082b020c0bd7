//! The un-linearized combination rule: every neighbor `v` contributes an
//! influence `f_vu = w·p_v + (1−w)(1−p_v)` and the posterior is
//!
//! `p_u = q_u Π f_vu / (q_u Π f_vu + (1−q_u) Π (1−f_vu))`.
//!
//! SybilSCAR is its first-order approximation around 0.5; this engine exists
//! to check that approximation, not for production ranking. Products are
//! taken as sums of log-odds.

use rayon::prelude::*;

use super::{check_len, propagate, LocalRule, RankingResult, Stopping, PAR_MIN_LEN};
use crate::error::EngineError;
use crate::graph::{Graph, NodeId};
use crate::labels::{assign_priors, PriorVector, TrainingSet};

/// Influence of a neighbor with Sybil probability `p_v` through an edge of
/// homophily `w`.
pub fn neighbor_influence(p_v: f64, w: f64) -> f64 {
    w * p_v + (1.0 - w) * (1.0 - p_v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplicativeConfig {
    /// Constant edge homophily, in (0.5, 1).
    pub weight: f64,
    pub iters: usize,
    /// Threshold for the `converged` flag only.
    pub delta: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct MultRule<'a> {
    graph: &'a Graph,
    prior_logit: Vec<f64>,
    weight: f64,
}

impl LocalRule for MultRule<'_> {
    /// Posterior log-odds per node.
    type State = Vec<f64>;

    fn initial(&self) -> Vec<f64> {
        self.prior_logit.clone()
    }

    fn apply(&self, prev: &Vec<f64>, next: &mut Vec<f64>) {
        next.par_iter_mut()
            .with_min_len(PAR_MIN_LEN)
            .enumerate()
            .for_each(|(u, out)| {
                let evidence: f64 = self
                    .graph
                    .neighbors(u as NodeId)
                    .iter()
                    .map(|&v| {
                        let f = neighbor_influence(sigmoid(prev[v as usize]), self.weight);
                        (f / (1.0 - f)).ln()
                    })
                    .sum();
                *out = self.prior_logit[u] + evidence;
            });
    }

    fn observe(&self, state: &Vec<f64>, out: &mut [f64]) {
        for (o, &l) in out.iter_mut().zip(state) {
            *o = sigmoid(l) - 0.5;
        }
    }

    fn observed_len(&self) -> usize {
        self.prior_logit.len()
    }
}

/// Applies the rule for exactly `cfg.iters` synchronous iterations, starting
/// from the priors. Scores are posterior Sybil probabilities; the trace
/// tracks the residual vector `p − 0.5`.
pub fn run_multiplicative_with_priors(
    g: &Graph,
    prior: &PriorVector,
    cfg: &MultiplicativeConfig,
) -> Result<RankingResult, EngineError> {
    if !(cfg.weight > 0.5 && cfg.weight < 1.0) {
        return Err(EngineError::InvalidConfig(format!(
            "edge weight must lie in (0.5, 1), got {}",
            cfg.weight
        )));
    }
    check_len(g.node_count(), prior.len())?;
    let prior_logit = prior
        .as_slice()
        .iter()
        .map(|&r| {
            let q = (r + 0.5).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
            (q / (1.0 - q)).ln()
        })
        .collect();
    let rule = MultRule { graph: g, prior_logit, weight: cfg.weight };
    let (state, trace) = propagate(
        &rule,
        Stopping { max_iters: cfg.iters, delta: cfg.delta, early_stop: false },
    );
    let scores = state.iter().map(|&l| sigmoid(l)).collect();
    Ok(RankingResult::new(scores, trace))
}

pub fn run_multiplicative_oracle(
    g: &Graph,
    ts: &TrainingSet,
    theta: f64,
    w: f64,
    iters: usize,
) -> Result<RankingResult, EngineError> {
    let prior = assign_priors(ts, theta, g.node_count())?;
    run_multiplicative_with_priors(g, &prior, &MultiplicativeConfig { weight: w, iters, delta: 1e-3 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn influence_values() {
        assert_eq!(neighbor_influence(0.5, 0.9), 0.5);
        assert!((neighbor_influence(0.6, 0.9) - 0.58).abs() < 1e-15);
        assert!((neighbor_influence(0.0, 0.9) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn uninformative_priors_stay_put() {
        let g = crate::synth::er_graph(60, 6.0, 3).unwrap();
        let out = run_multiplicative_oracle(&g, &TrainingSet::default(), 0.1, 0.7, 5).unwrap();
        assert!(out.scores.iter().all(|&p| p == 0.5));
        assert!(out.relative_errors.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn isolated_node_keeps_prior() {
        let g = Graph::from_edges(1, []);
        let ts = TrainingSet::new(vec![], vec![0]).unwrap();
        let out = run_multiplicative_oracle(&g, &ts, 0.3, 0.9, 4).unwrap();
        assert!((out.scores[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn one_step_by_hand() {
        // 0 - 1 - 2, node 0 labeled Sybil (q = 0.6)
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]);
        let ts = TrainingSet::new(vec![], vec![0]).unwrap();
        let out = run_multiplicative_oracle(&g, &ts, 0.1, 0.9, 1).unwrap();
        assert!((out.scores[0] - 0.6).abs() < 1e-12);
        assert!((out.scores[1] - 0.58).abs() < 1e-12);
        assert!((out.scores[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_weight_outside_range() {
        let g = Graph::from_edges(2, [(0, 1)]);
        for w in [0.5, 1.0, 0.2] {
            assert!(run_multiplicative_oracle(&g, &TrainingSet::default(), 0.1, w, 1).is_err());
        }
    }
}
