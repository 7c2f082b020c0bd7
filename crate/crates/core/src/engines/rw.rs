//! The additive random-walk rule `p_u = (1−α)·Σ_{v∈Γ(u)} p_v/d_v + α·q_u`,
//! configured either as SybilRank (benign seeds, no restart, early
//! termination, degree-normalized trust) or as CIA (Sybil seeds, restart).

use rayon::prelude::*;

use super::{propagate, LocalRule, RankingResult, Stopping, PAR_MIN_LEN};
use crate::error::EngineError;
use crate::graph::Graph;
use crate::labels::TrainingSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedSide {
    BenignSeeds,
    SybilSeeds,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IterationBudget {
    /// `⌈log_base |V|⌉` iterations (at least one).
    LogNodes { base: f64 },
    Fixed(usize),
}

impl IterationBudget {
    pub fn resolve(self, node_count: usize) -> usize {
        match self {
            IterationBudget::Fixed(n) => n,
            IterationBudget::LogNodes { base } => {
                let n = node_count.max(2) as f64;
                let it = (n.ln() / base.ln()).ceil();
                // guard against ln ratios landing a hair above an integer
                let exact = base.powf(it - 1.0);
                let it = if exact >= n { it - 1.0 } else { it };
                (it as usize).max(1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RwConfig {
    pub restart_alpha: f64,
    pub seed_side: SeedSide,
    pub iters: IterationBudget,
    /// Divide final reputation by degree and negate it, so that low trust
    /// per edge ranks as Sybil-like.
    pub degree_normalize_final: bool,
    /// Threshold on the last relative error used only for the `converged`
    /// flag; the walk always runs its full iteration budget.
    pub delta: f64,
}

impl RwConfig {
    pub const DEFAULT_CIA_ALPHA: f64 = 0.15;

    pub fn sybilrank() -> Self {
        RwConfig {
            restart_alpha: 0.0,
            seed_side: SeedSide::BenignSeeds,
            iters: IterationBudget::LogNodes { base: 2.0 },
            degree_normalize_final: true,
            delta: 1e-3,
        }
    }

    pub fn cia() -> Self {
        RwConfig {
            restart_alpha: Self::DEFAULT_CIA_ALPHA,
            seed_side: SeedSide::SybilSeeds,
            iters: IterationBudget::Fixed(20),
            degree_normalize_final: false,
            delta: 1e-3,
        }
    }
}

struct RwRule<'a> {
    graph: &'a Graph,
    prior: Vec<f64>,
    inv_degree: Vec<f64>,
    alpha: f64,
}

impl LocalRule for RwRule<'_> {
    type State = Vec<f64>;

    fn initial(&self) -> Vec<f64> {
        self.prior.clone()
    }

    fn apply(&self, prev: &Vec<f64>, next: &mut Vec<f64>) {
        next.par_iter_mut()
            .with_min_len(PAR_MIN_LEN)
            .enumerate()
            .for_each(|(u, out)| {
                let spread: f64 = self
                    .graph
                    .neighbors(u as u32)
                    .iter()
                    .map(|&v| prev[v as usize] * self.inv_degree[v as usize])
                    .sum();
                *out = (1.0 - self.alpha) * spread + self.alpha * self.prior[u];
            });
    }

    fn observe(&self, state: &Vec<f64>, out: &mut [f64]) {
        out.copy_from_slice(state);
    }

    fn observed_len(&self) -> usize {
        self.prior.len()
    }
}

/// Runs the random-walk rule. Initial mass `1/|seeds|` sits on each seed of
/// the configured side; the restart distribution is the same vector.
pub fn run_rw(g: &Graph, ts: &TrainingSet, cfg: &RwConfig) -> Result<RankingResult, EngineError> {
    if !(0.0..=1.0).contains(&cfg.restart_alpha) {
        return Err(EngineError::InvalidConfig(format!(
            "restart probability must lie in [0, 1], got {}",
            cfg.restart_alpha
        )));
    }
    let iters = cfg.iters.resolve(g.node_count());
    ts.check_range(g.node_count())?;
    let (seeds, side) = match cfg.seed_side {
        SeedSide::BenignSeeds => (&ts.benign, "benign"),
        SeedSide::SybilSeeds => (&ts.sybil, "sybil"),
    };
    if seeds.is_empty() {
        return Err(EngineError::EmptySeedSet(side));
    }

    let n = g.node_count();
    let mut prior = vec![0.0; n];
    let mass = 1.0 / seeds.len() as f64;
    for &u in seeds {
        prior[u as usize] = mass;
    }
    let inv_degree: Vec<f64> = (0..n as u32)
        .map(|u| match g.degree(u) {
            0 => 0.0,
            d => 1.0 / d as f64,
        })
        .collect();
    let rule = RwRule { graph: g, prior, inv_degree, alpha: cfg.restart_alpha };
    let (state, trace) = propagate(
        &rule,
        Stopping { max_iters: iters, delta: cfg.delta, early_stop: false },
    );

    let scores = if cfg.degree_normalize_final {
        state
            .iter()
            .zip(&rule.inv_degree)
            .map(|(&p, &inv)| -(p * inv))
            .collect()
    } else {
        state
    };
    Ok(RankingResult::new(scores, trace))
}
