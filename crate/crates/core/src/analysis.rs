//! Convergence conditions, spectral-radius estimation, and the
//! attack-edge security bound together with the benign-mixing simulation
//! that illustrates it.

use std::fmt::Write as _;

use rand::seq::index;
use rayon::prelude::*;

use crate::engines::{EdgeWeighting, PAR_MIN_LEN};
use crate::error::AnalysisError;
use crate::graph::{Graph, NodeId};
use crate::labels::{Label, LabelSet, DEFAULT_THETA};
use crate::rng::seeded;
use crate::synth::{er_graph, join_regions, pa_graph, AttackConfig, SybilInstance};

/// Maximum absolute row sum of the residual weight matrix.
pub fn inf_norm_weight(g: &Graph, weighting: EdgeWeighting) -> f64 {
    match weighting {
        EdgeWeighting::Constant(w) => w.abs() * g.stats().max_degree as f64,
        EdgeWeighting::DegreeNormalized => 0.5,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub value: f64,
    pub iterations: usize,
    /// Successive estimates agreed to within the tolerance.
    pub converged: bool,
}

/// Power iteration for the dominant eigenvalue of the residual weight
/// matrix, starting from the all-ones vector.
///
/// The matrix is iterated with a positive diagonal shift, which keeps
/// bipartite graphs (whose spectrum contains `−ρ`) from oscillating; the
/// shift is subtracted from the reported value.
pub fn spectral_radius(
    g: &Graph,
    weighting: EdgeWeighting,
    tol: f64,
    max_iters: usize,
) -> Result<SpectralEstimate, AnalysisError> {
    let n = g.node_count();
    if n == 0 {
        return Err(AnalysisError::EmptyGraph);
    }
    let (scale, row_weight): (f64, Box<dyn Fn(NodeId) -> f64 + Sync>) = match weighting {
        EdgeWeighting::Constant(w) => (w, Box::new(|_| 1.0)),
        EdgeWeighting::DegreeNormalized => (
            1.0,
            Box::new(|u| match g.degree(u) {
                0 => 0.0,
                d => 0.5 / d as f64,
            }),
        ),
    };
    let row_max = match weighting {
        EdgeWeighting::Constant(_) => g.stats().max_degree as f64,
        EdgeWeighting::DegreeNormalized => 0.5,
    };
    if row_max == 0.0 {
        return Ok(SpectralEstimate { value: 0.0, iterations: 0, converged: true });
    }
    let shift = row_max;

    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut y = vec![0.0; n];
    let mut estimate = f64::NAN;
    for it in 1..=max_iters {
        y.par_iter_mut()
            .with_min_len(PAR_MIN_LEN)
            .enumerate()
            .for_each(|(u, out)| {
                let u = u as NodeId;
                let sum: f64 = g.neighbors(u).iter().map(|&v| x[v as usize]).sum();
                *out = row_weight(u) * sum + shift * x[u as usize];
            });
        // x has unit length, so x·y is the Rayleigh quotient
        let rayleigh: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() - shift;
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (a, b) in x.iter_mut().zip(&y) {
            *a = b / norm;
        }
        if (rayleigh - estimate).abs() < tol {
            return Ok(SpectralEstimate { value: scale * rayleigh, iterations: it, converged: true });
        }
        estimate = rayleigh;
    }
    Ok(SpectralEstimate { value: scale * estimate, iterations: max_iters, converged: false })
}

/// `1/(2·max_degree)` guarantees convergence; `1/(2·avg_degree)` is the
/// looser setting that converges in practice.
pub fn suggest_constant_weight(g: &Graph, use_avg: bool) -> Result<f64, AnalysisError> {
    let stats = g.stats();
    if stats.edge_count == 0 {
        return Err(AnalysisError::Edgeless);
    }
    let d = if use_avg { stats.avg_degree } else { stats.max_degree as f64 };
    Ok(1.0 / (2.0 * d))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub spectral_radius_estimate: f64,
    pub inf_norm: f64,
    /// `‖Ŵ‖_∞ < 1/2`: convergence is guaranteed.
    pub sufficient_ok: bool,
    /// `ρ(Ŵ) < 1/2`: convergence is possible.
    pub necessary_ok: bool,
    pub iterations_used: usize,
    pub estimate_converged: bool,
}

pub const SPECTRAL_TOL: f64 = 1e-6;
pub const SPECTRAL_MAX_ITERS: usize = 1000;

pub fn convergence_report(g: &Graph, weighting: EdgeWeighting) -> Result<ConvergenceReport, AnalysisError> {
    let rho = spectral_radius(g, weighting, SPECTRAL_TOL, SPECTRAL_MAX_ITERS)?;
    let inf_norm = inf_norm_weight(g, weighting);
    Ok(ConvergenceReport {
        spectral_radius_estimate: rho.value,
        inf_norm,
        sufficient_ok: inf_norm < 0.5,
        necessary_ok: rho.value < 0.5,
        iterations_used: rho.iterations,
        estimate_converged: rho.converged,
    })
}

impl ConvergenceReport {
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn csv_header() -> &'static str {
        "spectral_radius_estimate,inf_norm,sufficient_ok,necessary_ok,iterations_used,estimate_converged"
    }

    pub fn to_csv_row(&self) -> String {
        self.fields().iter().map(|(_, v)| v.as_str()).collect::<Vec<_>>().join(",")
    }

    fn fields(&self) -> [(&'static str, String); 6] {
        [
            ("spectral_radius_estimate", self.spectral_radius_estimate.to_string()),
            ("inf_norm", self.inf_norm.to_string()),
            ("sufficient_ok", self.sufficient_ok.to_string()),
            ("necessary_ok", self.necessary_ok.to_string()),
            ("iterations_used", self.iterations_used.to_string()),
            ("estimate_converged", self.estimate_converged.to_string()),
        ]
    }
}

/// Order-of-magnitude bound on the number of Sybils accepted as benign. It
/// is an asymptotic quantity with a fixed constant, not a certified count.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub g: usize,
    /// Average degree of the Sybil region, counting only edges among Sybils.
    pub avg_sybil_degree: f64,
    pub n_nodes: usize,
    pub bound_value: f64,
}

/// `2·g·⌈log2 |V|⌉ / d(S)`.
pub fn bound_value(g: usize, n_nodes: usize, avg_sybil_degree: f64) -> f64 {
    if g == 0 {
        return 0.0;
    }
    let log = (n_nodes.max(2) as f64).log2().ceil();
    2.0 * g as f64 * log / avg_sybil_degree
}

pub fn security_bound(inst: &SybilInstance) -> Result<BoundReport, AnalysisError> {
    security_bound_labeled(&inst.graph, &inst.truth())
}

/// The bound for any graph with ground-truth labels: every edge between a
/// benign and a Sybil node counts as an attack edge.
pub fn security_bound_labeled(graph: &Graph, truth: &LabelSet) -> Result<BoundReport, AnalysisError> {
    let sybils = truth.count(Label::Sybil);
    if sybils == 0 {
        return Err(AnalysisError::EmptySybilRegion);
    }
    let (mut internal, mut g) = (0usize, 0usize);
    for (u, v) in graph.edges() {
        match (truth.get(u), truth.get(v)) {
            (Label::Sybil, Label::Sybil) => internal += 2,
            (Label::Sybil, Label::Benign) | (Label::Benign, Label::Sybil) => g += 1,
            _ => {}
        }
    }
    let d = internal as f64 / sybils as f64;
    let n = graph.node_count();
    Ok(BoundReport { g, avg_sybil_degree: d, n_nodes: n, bound_value: bound_value(g, n, d) })
}

impl BoundReport {
    pub fn to_key_value(&self) -> String {
        format!(
            "g={}\navg_sybil_degree={}\nn_nodes={}\nbound_value={}\n",
            self.g, self.avg_sybil_degree, self.n_nodes, self.bound_value
        )
    }

    pub fn csv_header() -> &'static str {
        "g,avg_sybil_degree,n_nodes,bound_value"
    }

    pub fn to_csv_row(&self) -> String {
        format!("{},{},{},{}", self.g, self.avg_sybil_degree, self.n_nodes, self.bound_value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionModel {
    ErdosRenyi,
    PreferentialAttachment,
}

impl RegionModel {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "er" => Some(RegionModel::ErdosRenyi),
            "pa" => Some(RegionModel::PreferentialAttachment),
            _ => None,
        }
    }

    fn build(self, n: usize, avg_degree: f64, seed: u64) -> Result<Graph, AnalysisError> {
        Ok(match self {
            RegionModel::ErdosRenyi => er_graph(n, avg_degree, seed)?,
            RegionModel::PreferentialAttachment => {
                pa_graph(n, ((avg_degree / 2.0).round() as usize).max(1), seed)?
            }
        })
    }
}

/// One synchronous averaging step `p̂_u = Σ_{v∈Γ(u)} p̂_v / d_u`. Isolated
/// nodes keep their value.
pub fn averaging_step(g: &Graph, prev: &[f64], next: &mut [f64]) {
    next.par_iter_mut()
        .with_min_len(PAR_MIN_LEN)
        .enumerate()
        .for_each(|(u, out)| {
            let nb = g.neighbors(u as NodeId);
            *out = if nb.is_empty() {
                prev[u]
            } else {
                nb.iter().map(|&v| prev[v as usize]).sum::<f64>() / nb.len() as f64
            };
        });
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    pub iterations: usize,
    pub labeled: Vec<NodeId>,
    /// Final residuals of every node; benign ids come first.
    pub residuals: Vec<f64>,
    pub benign_count: usize,
    /// `g / Vol(B)`.
    pub c_b: f64,
    /// `g / Vol(S)`.
    pub c_s: f64,
}

impl MixingReport {
    /// Residuals of benign nodes outside the training set.
    pub fn unlabeled_benign(&self) -> Vec<f64> {
        (0..self.benign_count)
            .filter(|u| self.labeled.binary_search(&(*u as NodeId)).is_err())
            .map(|u| self.residuals[u])
            .collect()
    }

    pub fn sybil(&self) -> &[f64] {
        &self.residuals[self.benign_count..]
    }

    /// Standard deviation over absolute mean of the unlabeled benign
    /// residuals.
    pub fn coefficient_of_variation(&self) -> f64 {
        let r = self.unlabeled_benign();
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        var.sqrt() / mean.abs()
    }

    pub fn summary(&self) -> String {
        let r = self.unlabeled_benign();
        let mean = r.iter().sum::<f64>() / r.len().max(1) as f64;
        let negative = r.iter().filter(|&&x| x < 0.0).count();
        format!(
            "iterations={}\nlabeled={}\nunlabeled_benign={}\nunlabeled_benign_negative={}\nmean_unlabeled_benign={}\ncoefficient_of_variation={}\nc_b={}\nc_s={}\n",
            self.iterations,
            self.labeled.len(),
            r.len(),
            negative,
            mean,
            self.coefficient_of_variation(),
            self.c_b,
            self.c_s,
        )
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "node_id,region,labeled,residual")?;
        for (u, r) in self.residuals.iter().enumerate() {
            let region = if u < self.benign_count { "benign" } else { "sybil" };
            let labeled = self.labeled.binary_search(&(u as NodeId)).is_ok();
            writeln!(out, "{u},{region},{labeled},{r}")?;
        }
        Ok(())
    }
}

/// Averages from an initial state for `iters` steps.
pub fn run_averaging(g: &Graph, initial: Vec<f64>, iters: usize) -> Vec<f64> {
    let mut prev = initial;
    let mut next = vec![0.0; prev.len()];
    for _ in 0..iters {
        averaging_step(g, &prev, &mut next);
        std::mem::swap(&mut prev, &mut next);
    }
    prev
}

/// Builds two regions of `n` nodes from `model`, joins them with `g`
/// attack edges, labels `n_seeds` random benign nodes with residual
/// `−0.1`, and averages for `⌈log2 |V|⌉` iterations. The prior enters only
/// through the initial state.
pub fn benign_mixing_sim(
    model: RegionModel,
    n: usize,
    avg_degree: f64,
    g: usize,
    n_seeds: usize,
    seed: u64,
) -> Result<MixingReport, AnalysisError> {
    let benign = model.build(n, avg_degree, seed)?;
    let sybil = model.build(n, avg_degree, seed.wrapping_add(1))?;
    let inst = join_regions(&benign, &sybil, AttackConfig { attack_edges: g, seed })?;
    mixing_on_instance(&inst, n_seeds, seed)
}

pub fn mixing_on_instance(
    inst: &SybilInstance,
    n_seeds: usize,
    seed: u64,
) -> Result<MixingReport, AnalysisError> {
    if n_seeds > inst.benign_count {
        return Err(AnalysisError::Labels(crate::error::LabelError::SampleTooLarge {
            requested: n_seeds,
            available: inst.benign_count,
        }));
    }
    let mut labeled: Vec<NodeId> = index::sample(&mut seeded(seed, 4), inst.benign_count, n_seeds)
        .into_iter()
        .map(|u| u as NodeId)
        .collect();
    labeled.sort_unstable();

    let total = inst.graph.node_count();
    let mut initial = vec![0.0; total];
    for &u in &labeled {
        initial[u as usize] = -DEFAULT_THETA;
    }
    let iterations = ((total.max(2) as f64).log2().ceil()) as usize;
    let residuals = run_averaging(&inst.graph, initial, iterations);

    let vol = |nodes: std::ops::Range<NodeId>| -> f64 {
        nodes.map(|u| inst.graph.degree(u)).sum::<usize>() as f64
    };
    let g = inst.attack_edges.len() as f64;
    Ok(MixingReport {
        iterations,
        labeled,
        residuals,
        benign_count: inst.benign_count,
        c_b: g / vol(inst.benign_nodes()),
        c_s: g / vol(inst.sybil_nodes()),
    })
}
