//! Ranking metrics and the experiment drivers built on them.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::engines::{run_engine, with_threads, EngineKind, EngineSettings, RankingResult};
use crate::error::EvalError;
use crate::graph::{Graph, NodeId};
use crate::labels::{inject_noise, sample_training, Label, LabelSet, TrainingSet};
use crate::synth::{er_graph, replica_attack, AttackConfig, SybilInstance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AucResult {
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Probability that a random Sybil outscores a random benign node, ties
/// counting one half, over `test_nodes`. Nodes labeled `Unlabeled` in
/// `truth` are ignored.
pub fn auc(scores: &[f64], truth: &LabelSet, test_nodes: &[NodeId]) -> Result<AucResult, EvalError> {
    if scores.len() != truth.len() {
        return Err(EvalError::LengthMismatch { expected: truth.len(), got: scores.len() });
    }
    let mut scored: Vec<(f64, bool)> = test_nodes
        .iter()
        .filter_map(|&u| match truth.get(u) {
            Label::Sybil => Some((scores[u as usize], true)),
            Label::Benign => Some((scores[u as usize], false)),
            Label::Unlabeled => None,
        })
        .collect();
    let n_pos = scored.iter().filter(|s| s.1).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::EmptyClass { n_pos, n_neg });
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));

    // twice the number of winning pairs, so ties stay integral
    let mut doubled: u128 = 0;
    let mut benign_below: u128 = 0;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < scored.len() && scored[j].0.total_cmp(&scored[i].0).is_eq() {
            if scored[j].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        doubled += pos * (2 * benign_below + neg);
        benign_below += neg;
        i = j;
    }
    let auc = doubled as f64 / (2 * n_pos as u128 * n_neg as u128) as f64;
    Ok(AucResult { auc, n_pos, n_neg })
}

/// Every node not in the training set.
pub fn test_nodes(node_count: usize, ts: &TrainingSet) -> Vec<NodeId> {
    (0..node_count as NodeId).filter(|&u| !ts.contains(u)).collect()
}

/// Node ids ordered by score descending, ties by id ascending.
pub fn ranking(scores: &[f64]) -> Vec<NodeId> {
    let mut order: Vec<NodeId> = (0..scores.len() as NodeId).collect();
    order.sort_by(|&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopKIntervals {
    pub interval_size: usize,
    pub fractions: Vec<f64>,
}

/// Fraction of Sybils in each consecutive block of `interval` nodes within
/// the `k_total` highest-scored nodes.
pub fn top_k_fractions(
    scores: &[f64],
    truth: &LabelSet,
    k_total: usize,
    interval: usize,
) -> Result<TopKIntervals, EvalError> {
    if scores.len() != truth.len() {
        return Err(EvalError::LengthMismatch { expected: truth.len(), got: scores.len() });
    }
    if interval == 0 || k_total % interval != 0 {
        return Err(EvalError::InvalidTopK(format!(
            "interval {interval} does not divide k = {k_total}"
        )));
    }
    if k_total > scores.len() {
        return Err(EvalError::InvalidTopK(format!(
            "k = {k_total} exceeds the {} scored nodes",
            scores.len()
        )));
    }
    let order = ranking(scores);
    let fractions = order[..k_total]
        .chunks(interval)
        .map(|block| {
            let sybils = block.iter().filter(|&&u| truth.get(u) == Label::Sybil).count();
            sybils as f64 / interval as f64
        })
        .collect();
    Ok(TopKIntervals { interval_size: interval, fractions })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    AttackEdges,
    Tau,
    Theta,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::AttackEdges => "attack-edges",
            SweepVar::Tau => "tau",
            SweepVar::Theta => "theta",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "attack-edges" | "g" => Some(SweepVar::AttackEdges),
            "tau" => Some(SweepVar::Tau),
            "theta" => Some(SweepVar::Theta),
            _ => None,
        }
    }
}

/// Attack-edge counts of the default `g` sweep.
pub const DEFAULT_G_VALUES: [usize; 7] = [1000, 2000, 5000, 10000, 20000, 50000, 100000];

/// A replica-attack experiment: the Sybil region copies `benign`, and every
/// (sweep value, seed) cell draws its own attack edges, training sample,
/// and label noise from that seed.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub benign: Graph,
    pub attack_edges: usize,
    pub train_size: usize,
    pub tau: f64,
    pub engines: Vec<EngineKind>,
    pub settings: EngineSettings,
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    /// One repetition per seed.
    pub seeds: Vec<u64>,
}

impl ExperimentSpec {
    pub fn new(benign: Graph) -> Self {
        ExperimentSpec {
            benign,
            attack_edges: 1000,
            train_size: 200,
            tau: 0.0,
            engines: vec![EngineKind::SybilScarC, EngineKind::SybilRank],
            settings: EngineSettings::default(),
            sweep: SweepVar::AttackEdges,
            values: DEFAULT_G_VALUES.iter().map(|&g| g as f64).collect(),
            seeds: (1..=5).collect(),
        }
    }

    fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidExperiment(m.to_string()));
        if self.seeds.is_empty() {
            return bad("at least one repetition is required");
        }
        if self.engines.is_empty() {
            return bad("no engines selected");
        }
        if self.values.is_empty() {
            return bad("no sweep values");
        }
        if self.sweep == SweepVar::AttackEdges
            && self.values.iter().any(|&v| v < 0.0 || v.fract() != 0.0)
        {
            return bad("attack-edge counts must be non-negative integers");
        }
        Ok(())
    }
}

/// A fully materialized labeled instance for one repetition.
#[derive(Debug, Clone)]
pub struct Trial {
    pub instance: SybilInstance,
    pub truth: LabelSet,
    pub training: TrainingSet,
}

/// Replica instance with `g` attack edges, a uniform training sample, and
/// label noise `tau`, all drawn from `seed`.
pub fn replica_trial(
    benign: &Graph,
    g: usize,
    train_size: usize,
    tau: f64,
    seed: u64,
) -> Result<Trial, EvalError> {
    let instance = replica_attack(benign, AttackConfig { attack_edges: g, seed })?;
    let truth = instance.truth();
    let clean = sample_training(&truth, train_size, seed)?;
    let training = inject_noise(&clean, tau, seed)?;
    Ok(Trial { instance, truth, training })
}

impl Trial {
    pub fn run(&self, kind: EngineKind, settings: &EngineSettings) -> Result<RankingResult, EvalError> {
        Ok(run_engine(kind, &self.instance.graph, &self.training, None, settings)?)
    }

    pub fn auc_of(&self, scores: &[f64]) -> Result<AucResult, EvalError> {
        auc(scores, &self.truth, &test_nodes(self.truth.len(), &self.training))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub value: f64,
    pub seed: u64,
    pub engine: EngineKind,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub engine: EngineKind,
    pub mean_auc: f64,
    /// Sample standard deviation over repetitions (0 for one repetition).
    pub std_auc: f64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub var: SweepVar,
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn row(&self, value: f64, engine: EngineKind) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.value == value && r.engine == engine)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{},engine,mean_auc,std_auc,repetitions", self.var.name())?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.value, r.engine, r.mean_auc, r.std_auc, r.repetitions)?;
        }
        Ok(())
    }

    pub fn write_cells_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{},seed,engine,auc", self.var.name())?;
        for c in &self.cells {
            writeln!(out, "{},{},{},{}", c.value, c.seed, c.engine, c.auc)?;
        }
        Ok(())
    }
}

pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepResult, EvalError> {
    spec.validate()?;
    let jobs: Vec<(f64, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let per_job: Vec<Vec<SweepCell>> = jobs
        .par_iter()
        .map(|&(value, seed)| {
            let (mut g, mut tau, mut settings) = (spec.attack_edges, spec.tau, spec.settings.clone());
            match spec.sweep {
                SweepVar::AttackEdges => g = value as usize,
                SweepVar::Tau => tau = value,
                SweepVar::Theta => settings.theta = value,
            }
            let trial = replica_trial(&spec.benign, g, spec.train_size, tau, seed)?;
            spec.engines
                .iter()
                .map(|&engine| {
                    let out = trial.run(engine, &settings)?;
                    let auc = trial.auc_of(&out.scores)?.auc;
                    Ok(SweepCell { value, seed, engine, auc })
                })
                .collect::<Result<Vec<_>, EvalError>>()
        })
        .collect::<Result<_, _>>()?;
    let cells: Vec<SweepCell> = per_job.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for &value in &spec.values {
        for &engine in &spec.engines {
            let aucs: Vec<f64> = cells
                .iter()
                .filter(|c| c.value == value && c.engine == engine)
                .map(|c| c.auc)
                .collect();
            let (mean, std) = mean_std(&aucs);
            rows.push(SweepRow { value, engine, mean_auc: mean, std_auc: std, repetitions: aucs.len() });
        }
    }
    Ok(SweepResult { var: spec.sweep, rows, cells })
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Settings that make every engine run exactly `iters` iterations.
pub fn exact_iteration_settings(base: &EngineSettings, iters: usize) -> EngineSettings {
    EngineSettings {
        max_iters: iters,
        early_stop: false,
        sybilrank_iters: Some(iters),
        ..base.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub engine: EngineKind,
    pub relative_error: f64,
}

pub fn run_convergence_trace(
    g: &Graph,
    ts: &TrainingSet,
    engines: &[EngineKind],
    iters: usize,
    settings: &EngineSettings,
) -> Result<Vec<TraceRow>, EvalError> {
    let settings = exact_iteration_settings(settings, iters);
    let mut rows = Vec::new();
    for &engine in engines {
        let out = run_engine(engine, g, ts, None, &settings)?;
        rows.extend(out.relative_errors.iter().enumerate().map(|(i, &e)| TraceRow {
            iteration: i + 1,
            engine,
            relative_error: e,
        }));
    }
    Ok(rows)
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration,engine,relative_error")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.iteration, r.engine, r.relative_error)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    /// Target edge counts; each size gets an ER graph with `avg_degree`.
    pub edge_counts: Vec<usize>,
    pub avg_degree: f64,
    pub iters: usize,
    pub engines: Vec<EngineKind>,
    pub train_size: usize,
    /// Each cell is timed this many times and the fastest run is kept.
    pub repeats: usize,
    pub seed: u64,
    pub settings: EngineSettings,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            edge_counts: vec![1_000_000, 2_000_000, 4_000_000],
            avg_degree: 20.0,
            iters: 20,
            engines: vec![EngineKind::SybilScarC, EngineKind::SybilBelief],
            train_size: 200,
            repeats: 3,
            seed: 1,
            settings: EngineSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub target_edges: usize,
    pub edges: usize,
    pub engine: EngineKind,
    pub seconds: f64,
}

/// Wall-clock time per engine per graph size, single-threaded.
pub fn run_scaling_bench(spec: &BenchSpec) -> Result<Vec<BenchRow>, EvalError> {
    if spec.repeats == 0 {
        return Err(EvalError::InvalidExperiment("repeats must be >= 1".into()));
    }
    let settings = exact_iteration_settings(&spec.settings, spec.iters);
    let mut rows = Vec::new();
    for &target in &spec.edge_counts {
        let n = ((2.0 * target as f64 / spec.avg_degree).round() as usize).max(2);
        let g = er_graph(n, spec.avg_degree.min(n as f64 - 1.0), spec.seed)?;
        // the graph has no ground truth, so the seeds are an arbitrary split
        let half = (spec.train_size / 2).min(n / 2) as NodeId;
        let ts = TrainingSet::new((0..half).collect(), (half..2 * half).collect())?;
        for &engine in &spec.engines {
            let mut best = f64::INFINITY;
            for _ in 0..spec.repeats {
                let start = Instant::now();
                let out = with_threads(1, || run_engine(engine, &g, &ts, None, &settings))?;
                let secs = start.elapsed().as_secs_f64();
                std::hint::black_box(&out);
                best = best.min(secs);
            }
            rows.push(BenchRow { target_edges: target, edges: g.edge_count(), engine, seconds: best });
        }
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "target_edges,edges,engine,seconds")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.target_edges, r.edges, r.engine, r.seconds)?;
    }
    Ok(())
}
