//! Loopy belief propagation over a pairwise Markov random field with node
//! potentials `φ_v(+1) = q_v` and edge potentials `ψ(x_v, x_u) = w` when the
//! labels agree, `1 − w` otherwise.
//!
//! Messages are normalized pairs, stored as one log-ratio
//! `ln(m(+1)/m(−1))` per directed edge slot: slot `(u, k)` holds the message
//! from the `k`-th neighbor of `u` into `u`. Flooding is synchronous.

use rayon::prelude::*;

use super::{check_len, propagate, LocalRule, RankingResult, Stopping, PAR_MIN_LEN};
use crate::error::EngineError;
use crate::graph::{Graph, NodeId};
use crate::labels::{assign_priors, PriorVector, TrainingSet};

#[derive(Debug, Clone, PartialEq)]
pub struct LbpConfig {
    /// Homophily `w` of every edge, in (0.5, 1).
    pub edge_weight: f64,
    pub theta: f64,
    pub max_iters: usize,
    /// Lower clamp for each normalized message component.
    pub message_epsilon: f64,
    /// Threshold for the `converged` flag only; flooding always runs
    /// `max_iters` rounds.
    pub delta: f64,
}

impl LbpConfig {
    pub const DEFAULT_WEIGHT: f64 = 0.9;
    /// Labeled nodes get prior 0.9 (Sybil) or 0.1 (benign).
    pub const DEFAULT_THETA: f64 = 0.4;
    pub const DEFAULT_EPSILON: f64 = 1e-10;

    fn validate(&self) -> Result<(), EngineError> {
        if !(self.edge_weight > 0.5 && self.edge_weight < 1.0) {
            return Err(EngineError::InvalidConfig(format!(
                "edge weight must lie in (0.5, 1), got {}",
                self.edge_weight
            )));
        }
        if !(self.message_epsilon > 0.0 && self.message_epsilon < 0.5) {
            return Err(EngineError::InvalidConfig(format!(
                "message epsilon must lie in (0, 0.5), got {}",
                self.message_epsilon
            )));
        }
        Ok(())
    }
}

impl Default for LbpConfig {
    fn default() -> Self {
        LbpConfig {
            edge_weight: Self::DEFAULT_WEIGHT,
            theta: Self::DEFAULT_THETA,
            max_iters: 20,
            message_epsilon: Self::DEFAULT_EPSILON,
            delta: 1e-3,
        }
    }
}

/// Message state after some number of flooding rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LbpMessages {
    log_ratio: Vec<f64>,
}

impl LbpMessages {
    /// All messages `(0.5, 0.5)`.
    pub fn uniform(g: &Graph) -> Self {
        LbpMessages { log_ratio: vec![0.0; g.slot_count()] }
    }

    /// `(m_vu(+1), m_vu(−1))` for the message from `v` into `u`. Panics if
    /// `(u, v)` is not an edge.
    pub fn get(&self, g: &Graph, v: NodeId, u: NodeId) -> (f64, f64) {
        let k = g
            .neighbors(u)
            .binary_search(&v)
            .unwrap_or_else(|_| panic!("({v}, {u}) is not an edge"));
        pair_from_log_ratio(self.log_ratio[g.row_start(u) + k])
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.log_ratio.iter().map(|&r| pair_from_log_ratio(r))
    }
}

fn pair_from_log_ratio(r: f64) -> (f64, f64) {
    let plus = 1.0 / (1.0 + (-r).exp());
    (plus, 1.0 - plus)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-ratio of the message sent through an edge of homophily `w` by a node
/// whose cavity belief (prior times all other incoming messages) has
/// log-ratio `a`.
#[inline]
fn message_log_ratio(a: f64, w: f64) -> f64 {
    // (w·e^a + (1−w)) / ((1−w)·e^a + w), evaluated without overflow
    if a >= 0.0 {
        let t = (-a).exp();
        ((w + (1.0 - w) * t) / ((1.0 - w) + w * t)).ln()
    } else {
        let t = a.exp();
        ((w * t + (1.0 - w)) / ((1.0 - w) * t + w)).ln()
    }
}

/// Computes one message `m_vu` directly from its definition,
/// `m_vu(x_u) = Σ_{x_v} φ_v(x_v)·ψ(x_v, x_u)·Π_{z∈Γ_v∖u} m_zv(x_v)`, normalized
/// to sum to one with each component clamped to at least `epsilon`.
pub fn lbp_message_update(
    g: &Graph,
    prior: &[f64],
    messages: &LbpMessages,
    v: NodeId,
    u: NodeId,
    w: f64,
    epsilon: f64,
) -> (f64, f64) {
    let q = prior[v as usize];
    let (mut plus, mut minus) = (q, 1.0 - q);
    for &z in g.neighbors(v) {
        if z != u {
            let (mp, mm) = messages.get(g, z, v);
            plus *= mp;
            minus *= mm;
        }
    }
    let to_plus = plus * w + minus * (1.0 - w);
    let to_minus = plus * (1.0 - w) + minus * w;
    let total = to_plus + to_minus;
    let hi = 1.0 - epsilon;
    let m = (to_plus / total).clamp(epsilon, hi);
    (m, 1.0 - m)
}

struct LbpState {
    messages: Vec<f64>,
    /// Posterior log-odds implied by `messages`.
    belief: Vec<f64>,
}

struct LbpRule<'a> {
    graph: &'a Graph,
    prior_logit: Vec<f64>,
    reverse: Vec<usize>,
    weight: f64,
    max_log_ratio: f64,
}

impl LbpRule<'_> {
    fn refresh_beliefs(&self, state: &mut LbpState) {
        let g = self.graph;
        let msgs = &state.messages;
        state
            .belief
            .par_iter_mut()
            .with_min_len(PAR_MIN_LEN)
            .enumerate()
            .for_each(|(u, b)| {
                let start = g.row_start(u as NodeId);
                let end = start + g.degree(u as NodeId);
                *b = self.prior_logit[u] + msgs[start..end].iter().sum::<f64>();
            });
    }
}

impl LocalRule for LbpRule<'_> {
    type State = LbpState;

    fn initial(&self) -> LbpState {
        LbpState {
            messages: vec![0.0; self.graph.slot_count()],
            belief: self.prior_logit.clone(),
        }
    }

    fn apply(&self, prev: &LbpState, next: &mut LbpState) {
        // Slot s sits in row u and carries the message from v into u. The
        // cavity belief of v leaves out what u sent to v, stored at reverse[s].
        let senders = self.graph.slot_targets();
        next.messages
            .par_iter_mut()
            .with_min_len(PAR_MIN_LEN * 8)
            .enumerate()
            .for_each(|(s, out)| {
                let v = senders[s] as usize;
                let cavity = prev.belief[v] - prev.messages[self.reverse[s]];
                *out = message_log_ratio(cavity, self.weight)
                    .clamp(-self.max_log_ratio, self.max_log_ratio);
            });
        self.refresh_beliefs(next);
    }

    fn observe(&self, state: &LbpState, out: &mut [f64]) {
        out.par_iter_mut()
            .with_min_len(PAR_MIN_LEN)
            .zip(state.belief.par_iter())
            .for_each(|(o, &b)| *o = sigmoid(b));
    }

    fn observed_len(&self) -> usize {
        self.prior_logit.len()
    }
}

fn build_rule<'a>(g: &'a Graph, prior: &PriorVector, cfg: &LbpConfig) -> LbpRule<'a> {
    let eps = cfg.message_epsilon;
    let prior_logit = prior
        .as_slice()
        .iter()
        .map(|&r| logit((r + 0.5).clamp(eps, 1.0 - eps)))
        .collect();
    LbpRule {
        graph: g,
        prior_logit,
        reverse: g.reverse_slots(),
        weight: cfg.edge_weight,
        max_log_ratio: logit(1.0 - eps),
    }
}

/// Runs `max_iters` synchronous flooding rounds from uniform messages and
/// returns posterior Sybil probabilities as scores. The trace records the
/// relative change of the posterior vector per round.
pub fn run_sybilbelief_with_priors(
    g: &Graph,
    prior: &PriorVector,
    cfg: &LbpConfig,
) -> Result<RankingResult, EngineError> {
    cfg.validate()?;
    check_len(g.node_count(), prior.len())?;
    let rule = build_rule(g, prior, cfg);
    let (state, trace) = propagate(
        &rule,
        Stopping { max_iters: cfg.max_iters, delta: cfg.delta, early_stop: false },
    );
    let scores = state.belief.iter().map(|&b| sigmoid(b)).collect();
    Ok(RankingResult::new(scores, trace))
}

pub fn run_sybilbelief(g: &Graph, ts: &TrainingSet, cfg: &LbpConfig) -> Result<RankingResult, EngineError> {
    let prior = assign_priors(ts, cfg.theta, g.node_count())?;
    run_sybilbelief_with_priors(g, &prior, cfg)
}

/// The message state after `rounds` flooding rounds.
pub fn sybilbelief_messages(
    g: &Graph,
    prior: &PriorVector,
    cfg: &LbpConfig,
    rounds: usize,
) -> Result<LbpMessages, EngineError> {
    cfg.validate()?;
    check_len(g.node_count(), prior.len())?;
    let rule = build_rule(g, prior, cfg);
    let (state, _) = propagate(
        &rule,
        Stopping { max_iters: rounds, delta: cfg.delta, early_stop: false },
    );
    Ok(LbpMessages { log_ratio: state.messages })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::er_graph;

    fn prior(probs: &[f64]) -> PriorVector {
        PriorVector(probs.iter().map(|p| p - 0.5).collect())
    }

    fn cfg(w: f64, rounds: usize) -> LbpConfig {
        LbpConfig { edge_weight: w, max_iters: rounds, ..LbpConfig::default() }
    }

    /// Exact marginals `P(x_u = +1)` by enumerating all joint labelings of
    /// the pairwise field.
    fn brute_force_marginals(g: &Graph, q: &[f64], w: f64) -> Vec<f64> {
        let n = g.node_count();
        let mut plus = vec![0.0; n];
        let mut total = 0.0;
        for mask in 0u32..(1 << n) {
            let x = |u: usize| mask >> u & 1 == 1;
            let mut weight = 1.0;
            for (u, &qu) in q.iter().enumerate() {
                weight *= if x(u) { qu } else { 1.0 - qu };
            }
            for (u, v) in g.edges() {
                weight *= if x(u as usize) == x(v as usize) { w } else { 1.0 - w };
            }
            total += weight;
            for (u, p) in plus.iter_mut().enumerate() {
                if x(u) {
                    *p += weight;
                }
            }
        }
        plus.iter().map(|p| p / total).collect()
    }

    #[test]
    fn uninformative_message() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]);
        let m = LbpMessages::uniform(&g);
        let (a, b) = lbp_message_update(&g, &[0.5; 3], &m, 1, 0, 0.5, 1e-10);
        assert_eq!((a, b), (0.5, 0.5));
        let (a, b) = lbp_message_update(&g, &[0.5; 3], &m, 1, 0, 0.9, 1e-10);
        assert_eq!((a, b), (0.5, 0.5));
    }

    #[test]
    fn leaf_message() {
        let g = Graph::from_edges(2, [(0, 1)]);
        let m = LbpMessages::uniform(&g);
        let (a, b) = lbp_message_update(&g, &[0.6, 0.5], &m, 0, 1, 0.9, 1e-10);
        assert!((a - 0.58).abs() < 1e-15 && (b - 0.42).abs() < 1e-15);
    }

    #[test]
    fn path_rounds_match_hand_enumeration() {
        // path 0 - 1 - 2 with informative ends
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]);
        let q = [0.7, 0.5, 0.2];
        let w = 0.8;
        let p = prior(&q);
        let one = sybilbelief_messages(&g, &p, &cfg(w, 1), 1).unwrap();
        // round 1 from uniform: a leaf sends Σ_x φ(x)ψ(x, ·)
        let m01 = q[0] * w + (1.0 - q[0]) * (1.0 - w);
        let m21 = q[2] * w + (1.0 - q[2]) * (1.0 - w);
        assert!((one.get(&g, 0, 1).0 - m01).abs() < 1e-12);
        assert!((one.get(&g, 2, 1).0 - m21).abs() < 1e-12);
        // the center's first messages only carry its own (uniform) prior
        assert!((one.get(&g, 1, 0).0 - 0.5).abs() < 1e-12);

        // round 2: the center forwards what node 2 told it to node 0
        let two = sybilbelief_messages(&g, &p, &cfg(w, 1), 2).unwrap();
        let plus = q[1] * m21;
        let minus = (1.0 - q[1]) * (1.0 - m21);
        let to_plus = plus * w + minus * (1.0 - w);
        let to_minus = plus * (1.0 - w) + minus * w;
        assert!((two.get(&g, 1, 0).0 - to_plus / (to_plus + to_minus)).abs() < 1e-12);
    }

    #[test]
    fn exact_on_trees() {
        let trees = [
            Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]),
            Graph::from_edges(6, [(0, 1), (0, 2), (0, 3), (3, 4), (3, 5)]),
            Graph::from_edges(7, [(0, 1), (1, 2), (1, 3), (3, 4), (4, 5), (2, 6)]),
        ];
        let probs = [0.9, 0.5, 0.3, 0.5, 0.65, 0.1, 0.5];
        for g in &trees {
            let q = &probs[..g.node_count()];
            for w in [0.6, 0.9] {
                let out = run_sybilbelief_with_priors(g, &prior(q), &cfg(w, 10)).unwrap();
                let exact = brute_force_marginals(g, q, w);
                for (a, b) in out.scores.iter().zip(&exact) {
                    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn edgeless_posteriors_equal_priors() {
        let g = Graph::from_edges(3, []);
        let q = [0.9, 0.5, 0.1];
        let out = run_sybilbelief_with_priors(&g, &prior(&q), &cfg(0.9, 5)).unwrap();
        for (a, b) in out.scores.iter().zip(q) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn influence_reaches_neighbor() {
        let g = Graph::from_edges(2, [(0, 1)]);
        let out = run_sybilbelief_with_priors(&g, &prior(&[0.6, 0.5]), &cfg(0.9, 1)).unwrap();
        assert!(out.scores[1] > 0.5);
        assert!((out.scores[1] - 0.58).abs() < 1e-12);
    }

    #[test]
    fn vectorized_round_matches_direct_update() {
        let g = er_graph(40, 5.0, 8).unwrap();
        let mut q = vec![0.5; 40];
        q[0] = 0.9;
        q[7] = 0.1;
        q[21] = 0.8;
        let p = prior(&q);
        let c = cfg(0.9, 1);
        for rounds in 0..4 {
            let before = sybilbelief_messages(&g, &p, &c, rounds).unwrap();
            let after = sybilbelief_messages(&g, &p, &c, rounds + 1).unwrap();
            for (u, v) in g.edges() {
                for (from, to) in [(u, v), (v, u)] {
                    let direct = lbp_message_update(&g, &q, &before, from, to, 0.9, c.message_epsilon);
                    let engine = after.get(&g, from, to);
                    assert!((direct.0 - engine.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn stored_messages_are_normalized_and_clamped() {
        let g = er_graph(200, 12.0, 4).unwrap();
        let mut q = vec![0.5; 200];
        for u in 0..20 {
            q[u] = if u % 2 == 0 { 0.999 } else { 0.001 };
        }
        let c = LbpConfig { edge_weight: 0.999_999, message_epsilon: 1e-4, ..cfg(0.9, 1) };
        let m = sybilbelief_messages(&g, &prior(&q), &c, 15).unwrap();
        for (a, b) in m.pairs() {
            assert!((a + b - 1.0).abs() < 1e-12);
            assert!(a >= c.message_epsilon * (1.0 - 1e-9) && b >= c.message_epsilon * (1.0 - 1e-9));
        }
    }

    #[test]
    fn rejects_heterophilous_weight() {
        let g = Graph::from_edges(2, [(0, 1)]);
        assert!(run_sybilbelief(&g, &TrainingSet::default(), &cfg(0.5, 3)).is_err());
        assert!(run_sybilbelief(&g, &TrainingSet::default(), &cfg(1.0, 3)).is_err());
    }
}
