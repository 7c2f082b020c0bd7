//! Propagation engines expressed as local rules over a shared driver.
//!
//! Each engine supplies a [`LocalRule`]: an initial state and a synchronous
//! update that reads only the previous state. [`propagate`] iterates the rule,
//! records the relative L1 change of the observed vector after every
//! iteration, and optionally stops once that change drops below a threshold.
//!
//! Every engine reports scores oriented the same way: higher means more
//! Sybil-like.

mod lbp;
mod multiplicative;
mod rw;
mod scar;

use std::io::Write;

pub use lbp::{lbp_message_update, run_sybilbelief, sybilbelief_messages, LbpConfig, LbpMessages};
pub use multiplicative::{neighbor_influence, run_multiplicative_oracle, MultiplicativeConfig};
pub use rw::{run_rw, IterationBudget, RwConfig, SeedSide};
pub use scar::{
    residual_neighbor_influence, run_sybilscar, run_sybilscar_with_priors, scar_step,
    EdgeWeighting, ResidualVector, ScarConfig, ScarOutcome,
};

use crate::error::EngineError;
use crate::graph::Graph;
use crate::labels::{PriorVector, TrainingSet, DEFAULT_THETA};

/// A synchronous (Jacobi-style) update rule.
pub trait LocalRule: Sync {
    type State: Send + Sync;

    fn initial(&self) -> Self::State;

    /// Computes the next state from `prev` alone. `next` holds stale data
    /// from two iterations ago and must be fully overwritten.
    fn apply(&self, prev: &Self::State, next: &mut Self::State);

    /// Copies the vector whose relative change is tracked into `out`.
    fn observe(&self, state: &Self::State, out: &mut [f64]);

    fn observed_len(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stopping {
    pub max_iters: usize,
    /// Convergence threshold on the relative error.
    pub delta: f64,
    /// Stop as soon as the relative error drops below `delta`.
    pub early_stop: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub relative_errors: Vec<f64>,
    pub converged: bool,
}

/// `‖new − old‖₁ / ‖new‖₁`, with a zero denominator read as converged.
pub fn relative_error(new: &[f64], old: &[f64]) -> f64 {
    let (diff, norm) = new
        .iter()
        .zip(old)
        .fold((0.0, 0.0), |(d, n), (&a, &b)| (d + (a - b).abs(), n + a.abs()));
    if norm == 0.0 {
        0.0
    } else {
        diff / norm
    }
}

/// Runs `rule` for up to `stop.max_iters` iterations and returns the final
/// state with its relative-error trace.
pub fn propagate<R: LocalRule>(rule: &R, stop: Stopping) -> (R::State, Trace) {
    let mut prev = rule.initial();
    let mut next = rule.initial();
    let mut prev_obs = vec![0.0; rule.observed_len()];
    let mut next_obs = vec![0.0; rule.observed_len()];
    rule.observe(&prev, &mut prev_obs);

    let mut trace = Trace::default();
    for _ in 0..stop.max_iters {
        rule.apply(&prev, &mut next);
        rule.observe(&next, &mut next_obs);
        let err = relative_error(&next_obs, &prev_obs);
        trace.relative_errors.push(err);
        std::mem::swap(&mut prev, &mut next);
        std::mem::swap(&mut prev_obs, &mut next_obs);
        if stop.early_stop && err < stop.delta {
            break;
        }
    }
    trace.converged = trace
        .relative_errors
        .last()
        .is_some_and(|&e| e < stop.delta);
    (prev, trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    /// Per-node score, higher = more Sybil-like.
    pub scores: Vec<f64>,
    pub iterations_run: usize,
    pub relative_errors: Vec<f64>,
    pub converged: bool,
}

impl RankingResult {
    pub(crate) fn new(scores: Vec<f64>, trace: Trace) -> Self {
        RankingResult {
            scores,
            iterations_run: trace.relative_errors.len(),
            relative_errors: trace.relative_errors,
            converged: trace.converged,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.scores.iter().chain(&self.relative_errors).all(|x| x.is_finite())
    }

    /// `node_id,score` CSV.
    pub fn write_scores<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "node_id,score")?;
        for (u, s) in self.scores.iter().enumerate() {
            writeln!(out, "{u},{s}")?;
        }
        Ok(())
    }

    /// `iteration,relative_error` CSV, iterations numbered from 1.
    pub fn write_trace<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,relative_error")?;
        for (t, e) in self.relative_errors.iter().enumerate() {
            writeln!(out, "{},{e}", t + 1)?;
        }
        Ok(())
    }
}

/// Engine names shared by the CLI and every CSV the drivers write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EngineKind {
    SybilScarC,
    SybilScarD,
    SybilRank,
    Cia,
    SybilBelief,
    MultOracle,
}

impl EngineKind {
    pub const ALL: [EngineKind; 6] = [
        EngineKind::SybilScarC,
        EngineKind::SybilScarD,
        EngineKind::SybilRank,
        EngineKind::Cia,
        EngineKind::SybilBelief,
        EngineKind::MultOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EngineKind::SybilScarC => "sybilscar-c",
            EngineKind::SybilScarD => "sybilscar-d",
            EngineKind::SybilRank => "sybilrank",
            EngineKind::Cia => "cia",
            EngineKind::SybilBelief => "sybilbelief",
            EngineKind::MultOracle => "mult-oracle",
        }
    }

    pub fn parse(s: &str) -> Option<EngineKind> {
        EngineKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Every knob of every engine, with the defaults used by the CLI and the
/// experiment drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineSettings {
    /// Residual prior of labeled nodes for the SybilSCAR variants and the
    /// multiplicative oracle.
    pub theta: f64,
    pub delta: f64,
    pub max_iters: usize,
    /// Constant residual homophily; `None` derives `1/(2·avg_degree)` from
    /// the graph.
    pub w_hat: Option<f64>,
    /// Clip SybilSCAR residuals to `[-0.5, 0.5]` after every update.
    pub clamp_residuals: bool,
    pub lbp_weight: f64,
    pub lbp_theta: f64,
    pub lbp_epsilon: f64,
    pub cia_alpha: f64,
    pub sybilrank_log_base: f64,
    /// Fixed SybilRank iteration count replacing the `⌈log |V|⌉` budget,
    /// for runs that compare engines at equal iteration counts.
    pub sybilrank_iters: Option<usize>,
    /// Stop SybilSCAR once the relative error falls below `delta`. Disabled
    /// when an exact iteration count is wanted.
    pub early_stop: bool,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            theta: DEFAULT_THETA,
            delta: 1e-3,
            max_iters: 20,
            w_hat: None,
            clamp_residuals: true,
            lbp_weight: LbpConfig::DEFAULT_WEIGHT,
            lbp_theta: LbpConfig::DEFAULT_THETA,
            lbp_epsilon: LbpConfig::DEFAULT_EPSILON,
            cia_alpha: RwConfig::DEFAULT_CIA_ALPHA,
            sybilrank_log_base: 2.0,
            sybilrank_iters: None,
            early_stop: true,
        }
    }
}

impl EngineSettings {
    pub fn resolved_w_hat(&self, g: &Graph) -> Result<f64, EngineError> {
        match self.w_hat {
            Some(w) => Ok(w),
            None => {
                let avg = g.stats().avg_degree;
                if avg == 0.0 {
                    Err(EngineError::InvalidConfig(
                        "cannot derive w_hat from an edgeless graph".into(),
                    ))
                } else {
                    Ok(1.0 / (2.0 * avg))
                }
            }
        }
    }
}

/// Runs one engine end to end. `priors`, when given, replaces the priors the
/// SybilSCAR, SybilBelief, and oracle engines would derive from `ts`.
pub fn run_engine(
    kind: EngineKind,
    g: &Graph,
    ts: &TrainingSet,
    priors: Option<&PriorVector>,
    s: &EngineSettings,
) -> Result<RankingResult, EngineError> {
    let prior_for = |theta: f64| -> Result<PriorVector, EngineError> {
        match priors {
            Some(p) => Ok(p.clone()),
            None => Ok(crate::labels::assign_priors(ts, theta, g.node_count())?),
        }
    };
    let scar = |weighting| ScarConfig {
        weighting,
        theta: s.theta,
        delta: s.delta,
        max_iters: s.max_iters,
        clamp_residuals: s.clamp_residuals,
        early_stop: s.early_stop,
    };
    let result = match kind {
        EngineKind::SybilScarC => {
            let w = s.resolved_w_hat(g)?;
            let prior = prior_for(s.theta)?;
            run_sybilscar_with_priors(g, &prior, &scar(EdgeWeighting::Constant(w)))?.into_ranking()
        }
        EngineKind::SybilScarD => {
            let prior = prior_for(s.theta)?;
            run_sybilscar_with_priors(g, &prior, &scar(EdgeWeighting::DegreeNormalized))?
                .into_ranking()
        }
        EngineKind::SybilRank => {
            let cfg = RwConfig {
                iters: match s.sybilrank_iters {
                    Some(n) => IterationBudget::Fixed(n),
                    None => IterationBudget::LogNodes { base: s.sybilrank_log_base },
                },
                delta: s.delta,
                ..RwConfig::sybilrank()
            };
            run_rw(g, ts, &cfg)?
        }
        EngineKind::Cia => {
            let cfg = RwConfig {
                restart_alpha: s.cia_alpha,
                iters: IterationBudget::Fixed(s.max_iters),
                delta: s.delta,
                ..RwConfig::cia()
            };
            run_rw(g, ts, &cfg)?
        }
        EngineKind::SybilBelief => {
            let cfg = LbpConfig {
                edge_weight: s.lbp_weight,
                theta: s.lbp_theta,
                max_iters: s.max_iters,
                message_epsilon: s.lbp_epsilon,
                delta: s.delta,
            };
            lbp::run_sybilbelief_with_priors(g, &prior_for(s.lbp_theta)?, &cfg)?
        }
        EngineKind::MultOracle => {
            let w = 0.5 + s.resolved_w_hat(g)?;
            let prior = prior_for(s.theta)?;
            multiplicative::run_multiplicative_with_priors(
                g,
                &prior,
                &MultiplicativeConfig { weight: w, iters: s.max_iters, delta: s.delta },
            )?
        }
    };
    Ok(result)
}

/// Runs `f` on a dedicated pool of `threads` workers (0 = one per core).
/// Engine output does not depend on the worker count.
pub fn with_threads<T, F>(threads: usize, f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("failed to build thread pool");
    pool.install(f)
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<(), EngineError> {
    if expected == got {
        Ok(())
    } else {
        Err(EngineError::LengthMismatch { expected, got })
    }
}

/// Minimum number of nodes handed to one rayon task.
pub(crate) const PAR_MIN_LEN: usize = 512;
