mod config;
mod manifest;

use std::ffi::OsString;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use sybilscar::analysis::{
    self, benign_mixing_sim, convergence_report, security_bound_labeled, suggest_constant_weight,
    RegionModel,
};
use sybilscar::engines::{run_engine, with_threads, EdgeWeighting, EngineKind, EngineSettings};
use sybilscar::error::{AnalysisError, EngineError, EvalError, GraphError, LabelError, SynthError};
use sybilscar::eval::{
    self, auc, run_convergence_trace, run_scaling_bench, run_sweep, test_nodes, top_k_fractions,
    BenchSpec, ExperimentSpec, SweepVar,
};
use sybilscar::graph::{load_dense_edge_list, load_edge_list, save_id_map, Graph};
use sybilscar::labels::{inject_noise, sample_training, Label, LabelSet, LoadError, PriorVector, TrainingSet};
use sybilscar::synth::{
    community_graph, er_graph, join_regions, pa_graph, replica_attack, AttackConfig, CommunityConfig,
};

use manifest::Manifest;

/// Structure-based Sybil detection: generate benchmark instances, run
/// propagation engines, and evaluate rankings.
#[derive(Parser, Debug)]
#[command(name = "sybilscar", version, propagate_version = true)]
struct Cli {
    /// Worker threads for propagation (0 = one per core). Results do not
    /// depend on this. [default: 0, or 1 for `bench`]
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// File of `key = value` lines supplying defaults for the command's
    /// flags; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a benchmark instance or a single region graph.
    #[command(subcommand)]
    Generate(Generate),
    /// Run one engine on an instance and write per-node scores.
    Run(RunArgs),
    /// Compute AUC (and optionally top-K Sybil fractions) for a score file.
    Eval(EvalArgs),
    /// Mean AUC of several engines across a parameter sweep.
    Sweep(SweepArgs),
    /// Per-iteration relative errors of several engines.
    Trace(TraceArgs),
    /// Single-threaded running time on random graphs of growing size.
    Bench(BenchArgs),
    /// Convergence conditions of the weight matrix and the attack-edge bound.
    Check(CheckArgs),
    /// Residuals of benign nodes under prior-at-initialization averaging on a
    /// two-region random instance.
    Mixing(MixingArgs),
}

#[derive(Subcommand, Debug)]
enum Generate {
    /// Replicate a benign graph as the Sybil region and join the copies with
    /// random attack edges.
    Replica(ReplicaArgs),
    /// Erdős–Rényi region graph.
    Er(ErArgs),
    /// Preferential-attachment region graph.
    Pa(PaArgs),
    /// Join two region graphs with random attack edges.
    Join(JoinArgs),
    /// Clustered graph shaped like the SNAP ego-Facebook network.
    Community(CommunityArgs),
}

#[derive(Args, Debug)]
struct ReplicaArgs {
    /// Benign edge list (SNAP format; ids are remapped densely). Without it,
    /// the ego-Facebook-like community graph is used.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    attack_edges: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "instance")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ErArgs {
    #[arg(long, default_value_t = 1000)]
    nodes: usize,
    #[arg(long, default_value_t = 40.0)]
    avg_degree: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "region")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PaArgs {
    #[arg(long, default_value_t = 1000)]
    nodes: usize,
    /// Edges added with every new node.
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "region")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct JoinArgs {
    /// Benign region edge list with dense ids.
    #[arg(long, value_name = "FILE")]
    benign: PathBuf,
    /// Sybil region edge list with dense ids.
    #[arg(long, value_name = "FILE")]
    sybil: PathBuf,
    #[arg(long, default_value_t = 1000)]
    attack_edges: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "instance")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CommunityArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "region")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct EngineArgs {
    /// Residual prior of labeled nodes (SybilSCAR and the oracle).
    #[arg(long, default_value_t = 0.1)]
    theta: f64,
    /// Relative-error threshold for convergence.
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    /// Maximum iterations (SybilSCAR, CIA, SybilBelief, oracle).
    #[arg(long, default_value_t = 20)]
    max_iters: usize,
    /// Constant residual homophily for sybilscar-c. [default: 1/(2·average degree)]
    #[arg(long)]
    w_hat: Option<f64>,
    /// Let SybilSCAR residuals leave [-0.5, 0.5].
    #[arg(long)]
    no_clamp: bool,
    /// Run every iteration instead of stopping once converged.
    #[arg(long)]
    no_early_stop: bool,
    /// Edge homophily for SybilBelief.
    #[arg(long, default_value_t = 0.9)]
    lbp_weight: f64,
    /// Residual prior of labeled nodes for SybilBelief.
    #[arg(long, default_value_t = 0.4)]
    lbp_theta: f64,
    /// Lower clamp of each SybilBelief message component.
    #[arg(long, default_value_t = 1e-10)]
    lbp_epsilon: f64,
    /// Restart probability for CIA.
    #[arg(long, default_value_t = 0.15)]
    cia_alpha: f64,
    /// SybilRank runs ceil(log_b |V|) iterations.
    #[arg(long, default_value_t = 2.0)]
    sybilrank_log_base: f64,
}

impl EngineArgs {
    fn settings(&self) -> EngineSettings {
        EngineSettings {
            theta: self.theta,
            delta: self.delta,
            max_iters: self.max_iters,
            w_hat: self.w_hat,
            clamp_residuals: !self.no_clamp,
            lbp_weight: self.lbp_weight,
            lbp_theta: self.lbp_theta,
            lbp_epsilon: self.lbp_epsilon,
            cia_alpha: self.cia_alpha,
            sybilrank_log_base: self.sybilrank_log_base,
            sybilrank_iters: None,
            early_stop: !self.no_early_stop,
        }
    }

    fn record(&self, m: &mut Manifest) {
        m.set("theta", self.theta)
            .set("delta", self.delta)
            .set("max_iters", self.max_iters)
            .set("w_hat", self.w_hat.map_or("auto".to_string(), |w| w.to_string()))
            .set("clamp_residuals", !self.no_clamp)
            .set("early_stop", !self.no_early_stop)
            .set("lbp_weight", self.lbp_weight)
            .set("lbp_theta", self.lbp_theta)
            .set("lbp_epsilon", self.lbp_epsilon)
            .set("cia_alpha", self.cia_alpha)
            .set("sybilrank_log_base", self.sybilrank_log_base);
    }
}

#[derive(Args, Debug, Clone)]
struct TrainingArgs {
    /// Training labels (`node_id benign|sybil` lines). Without it, a uniform
    /// sample is drawn from the instance's ground truth.
    #[arg(long, value_name = "FILE")]
    train: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    train_size: usize,
    /// Fraction of each training side to mislabel.
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// One of sybilscar-c, sybilscar-d, sybilrank, cia, sybilbelief, mult-oracle.
    #[arg(long, default_value = "sybilscar-c")]
    engine: String,
    /// Directory holding edges.txt and labels.txt.
    #[arg(long, default_value = "instance")]
    instance: PathBuf,
    #[command(flatten)]
    training: TrainingArgs,
    /// Per-node prior probabilities (`node_id probability` lines) replacing
    /// the label-derived priors.
    #[arg(long, value_name = "FILE")]
    priors: Option<PathBuf>,
    #[command(flatten)]
    engine_args: EngineArgs,
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, default_value = "instance")]
    instance: PathBuf,
    /// Score file written by `run`.
    #[arg(long, value_name = "FILE")]
    scores: PathBuf,
    /// Training labels; these nodes are left out of the test set.
    #[arg(long, value_name = "FILE")]
    train: Option<PathBuf>,
    /// Keep training nodes in the test set.
    #[arg(long)]
    include_training: bool,
    /// Report Sybil fractions among the K highest-scored nodes.
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long, default_value_t = 100)]
    interval: usize,
    #[arg(long, default_value = "eval")]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SweepVarArg {
    AttackEdges,
    Tau,
    Theta,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Benign edge list to replicate. [default: the ego-Facebook-like graph]
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "attack-edges")]
    var: SweepVarArg,
    /// Comma-separated sweep values. [default: 1000,2000,5000,10000,20000,50000,100000
    /// for attack-edges; 0,0.1,0.2,0.3,0.4,0.5 for tau; 0.1,0.2,0.3,0.4,0.5 for theta]
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "sybilscar-c,sybilscar-d,sybilrank,sybilbelief")]
    engines: Vec<String>,
    /// One repetition per seed.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 1000)]
    attack_edges: usize,
    #[arg(long, default_value_t = 200)]
    train_size: usize,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[command(flatten)]
    engine_args: EngineArgs,
    #[arg(long, default_value = "sweep")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TraceArgs {
    #[arg(long, default_value = "instance")]
    instance: PathBuf,
    #[command(flatten)]
    training: TrainingArgs,
    #[arg(long, value_delimiter = ',', default_value = "sybilscar-c,sybilscar-d,sybilrank,sybilbelief")]
    engines: Vec<String>,
    /// Every engine runs exactly this many iterations.
    #[arg(long, default_value_t = 20)]
    iters: usize,
    #[command(flatten)]
    engine_args: EngineArgs,
    #[arg(long, default_value = "trace")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Comma-separated target edge counts.
    #[arg(long, value_delimiter = ',', default_value = "1000000,2000000,4000000")]
    edges: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    #[arg(long, default_value_t = 20.0)]
    avg_degree: f64,
    #[arg(long, value_delimiter = ',', default_value = "sybilscar-c,sybilscar-d,sybilrank,sybilbelief")]
    engines: Vec<String>,
    /// Timed runs per cell; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "bench")]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum WeightingArg {
    Constant,
    Degree,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Instance directory; its labels also yield the attack-edge bound.
    #[arg(long, default_value = "instance", conflicts_with = "graph")]
    instance: PathBuf,
    /// A bare edge list with dense ids, checked without labels.
    #[arg(long, value_name = "FILE")]
    graph: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "constant")]
    weighting: WeightingArg,
    /// Constant residual homophily. [default: 1/(2·average degree)]
    #[arg(long)]
    w_hat: Option<f64>,
    /// Also write check.txt and check.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModelArg {
    Er,
    Pa,
}

#[derive(Args, Debug)]
struct MixingArgs {
    #[arg(long, value_enum, default_value = "er")]
    model: ModelArg,
    /// Nodes per region.
    #[arg(long, default_value_t = 1000)]
    nodes: usize,
    #[arg(long, default_value_t = 40.0)]
    avg_degree: f64,
    #[arg(long, default_value_t = 1000)]
    attack_edges: usize,
    /// Labeled benign nodes.
    #[arg(long, default_value_t = 10)]
    labeled: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "mixing")]
    out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LabelError> for CliError {
    fn from(e: LabelError) -> Self {
        match e {
            LabelError::OutOfRange { .. } | LabelError::SampleTooLarge { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            EngineError::Labels(l) => l.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Synth(s) => s.into(),
            AnalysisError::Labels(l) => l.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidTopK(_) | EvalError::InvalidExperiment(_) => CliError::Usage(e.to_string()),
            EvalError::Synth(s) => s.into(),
            EvalError::Labels(l) => l.into(),
            EvalError::Engine(x) => x.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| io_error(path, e))?;
    write_file(path, &buf)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn parse_engines(names: &[String]) -> Result<Vec<EngineKind>, CliError> {
    names
        .iter()
        .map(|n| {
            EngineKind::parse(n.trim()).ok_or_else(|| {
                let known: Vec<&str> = EngineKind::ALL.iter().map(|k| k.name()).collect();
                CliError::Usage(format!("unknown engine `{n}` (expected one of {})", known.join(", ")))
            })
        })
        .collect()
}

fn join_names(kinds: &[EngineKind]) -> String {
    kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join(",")
}

fn ensure_finite(values: &[f64], what: &str) -> Result<(), CliError> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(CliError::Numeric(format!("{what}: non-finite value at position {i}"))),
        None => Ok(()),
    }
}

struct LoadedInstance {
    graph: Graph,
    truth: Option<LabelSet>,
}

fn load_instance(dir: &Path) -> Result<LoadedInstance, CliError> {
    let graph = load_dense_edge_list(&dir.join("edges.txt"))?;
    let labels = dir.join("labels.txt");
    let truth = if labels.exists() {
        Some(LabelSet::load(&labels, graph.node_count())?)
    } else {
        None
    };
    Ok(LoadedInstance { graph, truth })
}

fn training_set(
    inst: &LoadedInstance,
    args: &TrainingArgs,
    m: &mut Manifest,
) -> Result<TrainingSet, CliError> {
    let clean = match &args.train {
        Some(path) => {
            m.set("train", path.display());
            TrainingSet::load(path, inst.graph.node_count())?
        }
        None => {
            let truth = inst.truth.as_ref().ok_or_else(|| {
                CliError::Data("no --train file and the instance has no labels.txt to sample from".into())
            })?;
            m.set("train_size", args.train_size);
            sample_training(truth, args.train_size, args.seed)?
        }
    };
    m.set("tau", args.tau).set("seed", args.seed);
    Ok(inject_noise(&clean, args.tau, args.seed)?)
}

fn benign_base(input: Option<&Path>, seed: u64, out: Option<&Path>, m: &mut Manifest) -> Result<Graph, CliError> {
    match input {
        Some(path) => {
            m.set("input", path.display());
            let loaded = load_edge_list(path)?;
            let identity = loaded.external_ids.iter().enumerate().all(|(i, &id)| id == i as u64);
            if let (false, Some(dir)) = (identity, out) {
                save_id_map(&loaded.external_ids, &dir.join("id_map.txt"))?;
            }
            Ok(loaded.graph)
        }
        None => {
            m.set("input", "ego-facebook-like").set("community_seed", seed);
            Ok(community_graph(&CommunityConfig::ego_facebook_like(seed))?)
        }
    }
}

fn cmd_generate(g: Generate) -> Result<(), CliError> {
    match g {
        Generate::Replica(a) => {
            create_dir(&a.out)?;
            let mut m = Manifest::new("generate replica");
            let benign = benign_base(a.input.as_deref(), a.seed, Some(&a.out), &mut m)?;
            let inst = replica_attack(&benign, AttackConfig { attack_edges: a.attack_edges, seed: a.seed })?;
            inst.save(&a.out)?;
            m.set("attack_edges", a.attack_edges).set("seed", a.seed);
            write_instance_stats(&mut m, &inst.graph, inst.benign_count, inst.sybil_count);
            m.set("out", a.out.display()).write(&a.out)
        }
        Generate::Join(a) => {
            create_dir(&a.out)?;
            let benign = load_dense_edge_list(&a.benign)?;
            let sybil = load_dense_edge_list(&a.sybil)?;
            let inst = join_regions(&benign, &sybil, AttackConfig { attack_edges: a.attack_edges, seed: a.seed })?;
            inst.save(&a.out)?;
            let mut m = Manifest::new("generate join");
            m.set("benign", a.benign.display())
                .set("sybil", a.sybil.display())
                .set("attack_edges", a.attack_edges)
                .set("seed", a.seed);
            write_instance_stats(&mut m, &inst.graph, inst.benign_count, inst.sybil_count);
            m.set("out", a.out.display()).write(&a.out)
        }
        Generate::Er(a) => {
            let graph = er_graph(a.nodes, a.avg_degree, a.seed)?;
            let mut m = Manifest::new("generate er");
            m.set("nodes", a.nodes).set("avg_degree", a.avg_degree).set("seed", a.seed);
            save_region(&graph, &a.out, m)
        }
        Generate::Pa(a) => {
            let graph = pa_graph(a.nodes, a.m, a.seed)?;
            let mut m = Manifest::new("generate pa");
            m.set("nodes", a.nodes).set("m", a.m).set("seed", a.seed);
            save_region(&graph, &a.out, m)
        }
        Generate::Community(a) => {
            let graph = community_graph(&CommunityConfig::ego_facebook_like(a.seed))?;
            let mut m = Manifest::new("generate community");
            m.set("preset", "ego-facebook-like").set("seed", a.seed);
            save_region(&graph, &a.out, m)
        }
    }
}

fn write_instance_stats(m: &mut Manifest, g: &Graph, benign: usize, sybil: usize) {
    m.set("nodes", g.node_count())
        .set("edges", g.edge_count())
        .set("benign_nodes", benign)
        .set("sybil_nodes", sybil);
}

fn save_region(graph: &Graph, out: &Path, mut m: Manifest) -> Result<(), CliError> {
    create_dir(out)?;
    graph.save_edge_list(&out.join("edges.txt"))?;
    let s = graph.stats();
    m.set("nodes", s.node_count)
        .set("edges", s.edge_count)
        .set("avg_degree", s.avg_degree)
        .set("out", out.display());
    m.write(out)
}

fn cmd_run(a: RunArgs, threads: usize) -> Result<(), CliError> {
    let kind = parse_engines(std::slice::from_ref(&a.engine))?[0];
    let inst = load_instance(&a.instance)?;
    let mut m = Manifest::new("run");
    m.set("engine", kind).set("instance", a.instance.display());
    let ts = training_set(&inst, &a.training, &mut m)?;
    let priors = match &a.priors {
        Some(p) => {
            m.set("priors", p.display());
            Some(PriorVector::load(p, inst.graph.node_count())?)
        }
        None => None,
    };
    a.engine_args.record(&mut m);
    let settings = a.engine_args.settings();
    if kind == EngineKind::SybilScarC {
        m.set("w_hat_resolved", settings.resolved_w_hat(&inst.graph)?);
    }
    let result = with_threads(threads, || run_engine(kind, &inst.graph, &ts, priors.as_ref(), &settings))?;
    ensure_finite(&result.scores, "scores")?;
    ensure_finite(&result.relative_errors, "relative errors")?;

    create_dir(&a.out)?;
    write_with(&a.out.join("scores.csv"), |b| result.write_scores(b))?;
    write_with(&a.out.join("trace.csv"), |b| result.write_trace(b))?;
    write_with(&a.out.join("training.txt"), |b| ts.write(b))?;
    m.set("training_benign", ts.benign.len())
        .set("training_sybil", ts.sybil.len())
        .set("iterations_run", result.iterations_run)
        .set("converged", result.converged)
        .set("out", a.out.display());
    m.write(&a.out)?;
    println!(
        "{kind}: {} iterations, converged={}, final relative error {}",
        result.iterations_run,
        result.converged,
        result.relative_errors.last().map_or("n/a".to_string(), |e| e.to_string())
    );
    Ok(())
}

fn read_scores(path: &Path, n: usize) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut scores = vec![f64::NAN; n];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("node_id")) {
            continue;
        }
        let bad = || CliError::Data(format!("{}:{}: expected node_id,score", path.display(), i + 1));
        let (node, score) = line.split_once(',').ok_or_else(bad)?;
        let node: usize = node.trim().parse().map_err(|_| bad())?;
        let score: f64 = score.trim().parse().map_err(|_| bad())?;
        *scores.get_mut(node).ok_or_else(|| {
            CliError::Data(format!("{}:{}: node {node} is not in the instance", path.display(), i + 1))
        })? = score;
    }
    if let Some(u) = scores.iter().position(|s| s.is_nan()) {
        return Err(CliError::Data(format!("{}: no score for node {u}", path.display())));
    }
    Ok(scores)
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let inst = load_instance(&a.instance)?;
    let n = inst.graph.node_count();
    let truth = inst
        .truth
        .as_ref()
        .ok_or_else(|| CliError::Data(format!("{} has no labels.txt", a.instance.display())))?;
    let scores = read_scores(&a.scores, n)?;
    let mut m = Manifest::new("eval");
    m.set("instance", a.instance.display()).set("scores", a.scores.display());
    let ts = match &a.train {
        Some(p) if !a.include_training => {
            m.set("train", p.display());
            TrainingSet::load(p, n)?
        }
        _ => TrainingSet::default(),
    };
    m.set("include_training", a.include_training || a.train.is_none());
    let result = auc(&scores, truth, &test_nodes(n, &ts))?;

    create_dir(&a.out)?;
    let mut csv = format!("metric,value\nauc,{}\nn_sybil,{}\nn_benign,{}\n", result.auc, result.n_pos, result.n_neg);
    println!("AUC {} ({} sybil, {} benign test nodes)", result.auc, result.n_pos, result.n_neg);
    if let Some(k) = a.top_k {
        let top = top_k_fractions(&scores, truth, k, a.interval)?;
        let mut rows = String::from("interval,start,end,sybil_fraction\n");
        for (i, f) in top.fractions.iter().enumerate() {
            rows.push_str(&format!("{},{},{},{f}\n", i + 1, i * a.interval + 1, (i + 1) * a.interval));
            println!("top {}-{}: {f}", i * a.interval + 1, (i + 1) * a.interval);
        }
        write_file(&a.out.join("topk.csv"), rows.as_bytes())?;
        m.set("top_k", k).set("interval", a.interval);
        csv.push_str(&format!("top_k,{k}\n"));
    }
    write_file(&a.out.join("eval.csv"), csv.as_bytes())?;
    m.set("auc", result.auc).set("out", a.out.display()).write(&a.out)
}

fn cmd_sweep(a: SweepArgs, threads: usize) -> Result<(), CliError> {
    let engines = parse_engines(&a.engines)?;
    let mut m = Manifest::new("sweep");
    create_dir(&a.out)?;
    let benign = benign_base(a.input.as_deref(), 1, None, &mut m)?;
    let var = match a.var {
        SweepVarArg::AttackEdges => SweepVar::AttackEdges,
        SweepVarArg::Tau => SweepVar::Tau,
        SweepVarArg::Theta => SweepVar::Theta,
    };
    let values = if a.values.is_empty() {
        match var {
            SweepVar::AttackEdges => eval::DEFAULT_G_VALUES.iter().map(|&g| g as f64).collect(),
            SweepVar::Tau => vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            SweepVar::Theta => vec![0.1, 0.2, 0.3, 0.4, 0.5],
        }
    } else {
        a.values.clone()
    };
    let spec = ExperimentSpec {
        benign,
        attack_edges: a.attack_edges,
        train_size: a.train_size,
        tau: a.tau,
        engines: engines.clone(),
        settings: a.engine_args.settings(),
        sweep: var,
        values: values.clone(),
        seeds: a.seeds.clone(),
    };
    let result = with_threads(threads, || run_sweep(&spec))?;
    ensure_finite(&result.cells.iter().map(|c| c.auc).collect::<Vec<_>>(), "AUC")?;
    write_with(&a.out.join("sweep.csv"), |b| result.write_csv(b))?;
    write_with(&a.out.join("cells.csv"), |b| result.write_cells_csv(b))?;

    m.set("var", var.name())
        .set("values", values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
        .set("engines", join_names(&engines))
        .set("seeds", a.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","))
        .set("attack_edges", a.attack_edges)
        .set("train_size", a.train_size)
        .set("tau", a.tau);
    a.engine_args.record(&mut m);
    m.set("out", a.out.display()).write(&a.out)?;
    for r in &result.rows {
        println!("{}={} {}: mean AUC {:.4} (std {:.4})", var.name(), r.value, r.engine, r.mean_auc, r.std_auc);
    }
    Ok(())
}

fn cmd_trace(a: TraceArgs, threads: usize) -> Result<(), CliError> {
    let engines = parse_engines(&a.engines)?;
    let inst = load_instance(&a.instance)?;
    let mut m = Manifest::new("trace");
    m.set("instance", a.instance.display());
    let ts = training_set(&inst, &a.training, &mut m)?;
    let settings = a.engine_args.settings();
    let rows = with_threads(threads, || run_convergence_trace(&inst.graph, &ts, &engines, a.iters, &settings))?;
    ensure_finite(&rows.iter().map(|r| r.relative_error).collect::<Vec<_>>(), "relative errors")?;
    create_dir(&a.out)?;
    write_with(&a.out.join("trace.csv"), |b| eval::write_trace_csv(&rows, b))?;
    m.set("engines", join_names(&engines)).set("iters", a.iters);
    a.engine_args.record(&mut m);
    m.set("out", a.out.display()).write(&a.out)
}

fn cmd_bench(a: BenchArgs, threads: Option<usize>) -> Result<(), CliError> {
    let engines = parse_engines(&a.engines)?;
    let spec = BenchSpec {
        edge_counts: a.edges.clone(),
        avg_degree: a.avg_degree,
        iters: a.iters,
        engines: engines.clone(),
        repeats: a.repeats,
        seed: a.seed,
        ..BenchSpec::default()
    };
    if threads.is_some_and(|t| t != 1) {
        eprintln!("note: bench always times engines on a single thread");
    }
    let rows = run_scaling_bench(&spec)?;
    create_dir(&a.out)?;
    write_with(&a.out.join("bench.csv"), |b| eval::write_bench_csv(&rows, b))?;
    for r in &rows {
        println!("{} edges, {}: {:.4} s", r.edges, r.engine, r.seconds);
    }
    let mut m = Manifest::new("bench");
    m.set("edges", a.edges.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(","))
        .set("iters", a.iters)
        .set("avg_degree", a.avg_degree)
        .set("engines", join_names(&engines))
        .set("repeats", a.repeats)
        .set("seed", a.seed)
        .set("threads", 1)
        .set("out", a.out.display());
    m.write(&a.out)
}

fn cmd_check(a: CheckArgs, threads: usize) -> Result<(), CliError> {
    let (graph, truth, source) = match &a.graph {
        Some(p) => (load_dense_edge_list(p)?, None, p.display().to_string()),
        None => {
            let inst = load_instance(&a.instance)?;
            (inst.graph, inst.truth, a.instance.display().to_string())
        }
    };
    let weighting = match a.weighting {
        WeightingArg::Degree => EdgeWeighting::DegreeNormalized,
        WeightingArg::Constant => EdgeWeighting::Constant(match a.w_hat {
            Some(w) => w,
            None => suggest_constant_weight(&graph, true)?,
        }),
    };
    let report = with_threads(threads, || convergence_report(&graph, weighting))?;
    let mut text = format!("source={source}\n");
    match weighting {
        EdgeWeighting::Constant(w) => text.push_str(&format!("weighting=constant\nw_hat={w}\n")),
        EdgeWeighting::DegreeNormalized => text.push_str("weighting=degree\n"),
    }
    text.push_str(&report.to_key_value());
    if graph.edge_count() > 0 {
        text.push_str(&format!(
            "suggested_w_hat_max_degree={}\nsuggested_w_hat_avg_degree={}\n",
            suggest_constant_weight(&graph, false)?,
            suggest_constant_weight(&graph, true)?
        ));
    }
    let bound = match &truth {
        Some(t) if t.count(Label::Sybil) > 0 => Some(security_bound_labeled(&graph, t)?),
        _ => None,
    };
    if let Some(b) = &bound {
        text.push_str(&b.to_key_value());
    }
    print!("{text}");
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_file(&out.join("check.txt"), text.as_bytes())?;
        let mut csv = format!(
            "{}\n{}\n",
            analysis::ConvergenceReport::csv_header(),
            report.to_csv_row()
        );
        if let Some(b) = &bound {
            csv.push_str(&format!("{}\n{}\n", analysis::BoundReport::csv_header(), b.to_csv_row()));
        }
        write_file(&out.join("check.csv"), csv.as_bytes())?;
        let mut m = Manifest::new("check");
        m.set("source", source).set("out", out.display());
        m.write(out)?;
    }
    Ok(())
}

fn cmd_mixing(a: MixingArgs, threads: usize) -> Result<(), CliError> {
    let model = match a.model {
        ModelArg::Er => RegionModel::ErdosRenyi,
        ModelArg::Pa => RegionModel::PreferentialAttachment,
    };
    let report = with_threads(threads, || {
        benign_mixing_sim(model, a.nodes, a.avg_degree, a.attack_edges, a.labeled, a.seed)
    })?;
    ensure_finite(&report.residuals, "residuals")?;
    create_dir(&a.out)?;
    write_with(&a.out.join("mixing.csv"), |b| report.write_csv(b))?;
    let summary = report.summary();
    write_file(&a.out.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    let mut m = Manifest::new("mixing");
    m.set("model", format!("{:?}", a.model).to_lowercase())
        .set("nodes", a.nodes)
        .set("avg_degree", a.avg_degree)
        .set("attack_edges", a.attack_edges)
        .set("labeled", a.labeled)
        .set("seed", a.seed)
        .set("out", a.out.display());
    m.write(&a.out)
}

fn parse_args() -> Result<Cli, CliError> {
    let mut args: Vec<OsString> = std::env::args_os().collect();
    let mut cmd = Cli::command();
    let matches = cmd.try_get_matches_from_mut(args.clone()).unwrap_or_else(|e| e.exit());
    let matches = match matches.get_one::<PathBuf>("config") {
        Some(path) => {
            let entries = config::read(path)?;
            cmd.build();
            args.extend(config::extra_args(&cmd, &matches, &entries)?);
            Cli::command().try_get_matches_from(args).unwrap_or_else(|e| e.exit())
        }
        None => matches,
    };
    Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let threads = cli.threads.unwrap_or(0);
    match cli.command {
        Command::Generate(g) => cmd_generate(g),
        Command::Run(a) => cmd_run(a, threads),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a, threads),
        Command::Trace(a) => cmd_trace(a, threads),
        Command::Bench(a) => cmd_bench(a, cli.threads),
        Command::Check(a) => cmd_check(a, threads),
        Command::Mixing(a) => cmd_mixing(a, threads),
    }
}

fn main() -> ExitCode {
    let result = parse_args().and_then(dispatch);
    let _ = std::io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
