//! Benchmark instance synthesis: a benign region joined to a Sybil region by
//! uniformly random attack edges, plus the random-graph models used to build
//! regions.
//!
//! In every [`SybilInstance`] the benign nodes occupy ids `0..benign_count`
//! and the Sybil nodes the ids after them.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use rand::seq::index;
use rand::Rng;

use crate::error::{GraphError, SynthError};
use crate::graph::{Graph, NodeId};
use crate::labels::{Label, LabelSet};
use crate::rng::seeded;

const ATTACK_STREAM: u64 = 0xa77ac;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackConfig {
    pub attack_edges: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SybilInstance {
    pub graph: Graph,
    pub benign_count: usize,
    pub sybil_count: usize,
    /// `(benign, sybil)` endpoint pairs.
    pub attack_edges: Vec<(NodeId, NodeId)>,
}

impl SybilInstance {
    pub fn benign_nodes(&self) -> Range<NodeId> {
        0..self.benign_count as NodeId
    }

    pub fn sybil_nodes(&self) -> Range<NodeId> {
        self.benign_count as NodeId..(self.benign_count + self.sybil_count) as NodeId
    }

    pub fn is_sybil(&self, u: NodeId) -> bool {
        u as usize >= self.benign_count
    }

    /// Writes `edges.txt`, `labels.txt`, and `attack_edges.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), GraphError> {
        self.graph.save_edge_list(&dir.join("edges.txt"))?;
        let labels = dir.join("labels.txt");
        self.truth().save(&labels).map_err(|e| GraphError::io(&labels, e))?;
        let attack = dir.join("attack_edges.txt");
        let write = || -> std::io::Result<()> {
            let mut out = BufWriter::new(File::create(&attack)?);
            for (b, s) in &self.attack_edges {
                writeln!(out, "{b} {s}")?;
            }
            out.flush()
        };
        write().map_err(|e| GraphError::io(&attack, e))
    }

    pub fn truth(&self) -> LabelSet {
        let mut labels = vec![Label::Benign; self.benign_count];
        labels.resize(self.benign_count + self.sybil_count, Label::Sybil);
        LabelSet::new(labels)
    }
}

/// Places `sybil` after `benign` and adds `cfg.attack_edges` cross edges drawn
/// uniformly without replacement from all `|B|·|S|` cross pairs.
pub fn join_regions(
    benign: &Graph,
    sybil: &Graph,
    cfg: AttackConfig,
) -> Result<SybilInstance, SynthError> {
    let nb = benign.node_count();
    let ns = sybil.node_count();
    let available = nb.checked_mul(ns).unwrap_or(usize::MAX);
    if cfg.attack_edges > available {
        return Err(SynthError::TooManyAttackEdges {
            requested: cfg.attack_edges,
            available,
        });
    }

    let mut rng = seeded(cfg.seed, ATTACK_STREAM);
    let attack_edges: Vec<(NodeId, NodeId)> = index::sample(&mut rng, available, cfg.attack_edges)
        .into_iter()
        .map(|pair| ((pair / ns) as NodeId, (nb + pair % ns) as NodeId))
        .collect();

    let shift = nb as NodeId;
    let edges = benign
        .edges()
        .chain(sybil.edges().map(|(u, v)| (u + shift, v + shift)))
        .chain(attack_edges.iter().copied());
    Ok(SybilInstance {
        graph: Graph::from_edges(nb + ns, edges),
        benign_count: nb,
        sybil_count: ns,
        attack_edges,
    })
}

/// Uses an isomorphic copy of `benign` as the Sybil region.
pub fn replica_attack(benign: &Graph, cfg: AttackConfig) -> Result<SybilInstance, SynthError> {
    if benign.node_count() < 2 {
        return Err(SynthError::InvalidParameters(
            "replica attack needs a benign region with at least 2 nodes".into(),
        ));
    }
    join_regions(benign, benign, cfg)
}

/// Erdős–Rényi `G(n, p)` with `p = avg_degree / (n - 1)`.
///
/// Uses geometric skipping over the pair sequence so the cost is linear in
/// the number of generated edges rather than in `n²`.
pub fn er_graph(n: usize, avg_degree: f64, seed: u64) -> Result<Graph, SynthError> {
    if n < 2 || !(avg_degree > 0.0 && avg_degree <= (n - 1) as f64) {
        return Err(SynthError::InvalidParameters(format!(
            "ER needs n >= 2 and 0 < avg_degree <= n - 1, got n = {n}, avg_degree = {avg_degree}"
        )));
    }
    let p = avg_degree / (n - 1) as f64;
    let mut rng = seeded(seed, 0);
    let mut edges = Vec::with_capacity((p * (n * (n - 1) / 2) as f64 * 1.05) as usize);

    if p >= 1.0 {
        for v in 1..n {
            for w in 0..v {
                edges.push((v as NodeId, w as NodeId));
            }
        }
    } else {
        // Batagelj & Brandes: walk the lower triangle (v, w), w < v, skipping
        // geometrically distributed gaps.
        let log_q = (1.0 - p).ln();
        let mut v: usize = 1;
        let mut w: i64 = -1;
        while v < n {
            let r: f64 = rng.gen();
            w += 1 + ((1.0 - r).ln() / log_q).floor() as i64;
            while w >= v as i64 && v < n {
                w -= v as i64;
                v += 1;
            }
            if v < n {
                edges.push((v as NodeId, w as NodeId));
            }
        }
    }
    Ok(Graph::from_edges(n, edges))
}

/// Preferential attachment grown from an `(m+1)`-clique; every later node
/// attaches to `m` distinct existing nodes chosen with probability
/// proportional to their current degree.
pub fn pa_graph(n: usize, m: usize, seed: u64) -> Result<Graph, SynthError> {
    if m == 0 || n <= m {
        return Err(SynthError::InvalidParameters(format!(
            "PA needs n > m >= 1, got n = {n}, m = {m}"
        )));
    }
    let mut rng = seeded(seed, 0);
    let mut edges: Vec<(NodeId, NodeId)> = Vec::with_capacity(m * n);
    // Every edge endpoint once: sampling uniformly from this list is sampling
    // a node proportionally to its degree.
    let mut endpoints: Vec<NodeId> = Vec::with_capacity(2 * m * n);
    for u in 0..=m {
        for v in (u + 1)..=m {
            edges.push((u as NodeId, v as NodeId));
            endpoints.push(u as NodeId);
            endpoints.push(v as NodeId);
        }
    }
    let mut chosen: Vec<NodeId> = Vec::with_capacity(m);
    for new in (m + 1)..n {
        chosen.clear();
        while chosen.len() < m {
            let target = endpoints[rng.gen_range(0..endpoints.len())];
            if !chosen.contains(&target) {
                chosen.push(target);
            }
        }
        for &t in &chosen {
            edges.push((new as NodeId, t));
            endpoints.push(new as NodeId);
            endpoints.push(t);
        }
    }
    Ok(Graph::from_edges(n, edges))
}

/// Parameters for a clustered social-graph generator: disjoint communities,
/// each with a hub adjacent to every member (as in an ego network), dense
/// nested circles inside communities, heavy-tailed node weights, and a small
/// share of edges between communities.
///
/// Each community is cut into consecutive circles: the first takes
/// `core_share` of the members, the next `core_share` of the rest, and so on
/// down to `min_circle` members. Circle edges are spread in proportion to
/// circle size, so members of every circle get about the same number of
/// circle edges and the small circles end up nearly complete.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunityConfig {
    pub sizes: Vec<usize>,
    /// Relative share of the intra-community edges given to each community.
    pub intra_shares: Vec<f64>,
    /// Exact undirected edge count, hub edges included.
    pub edges: usize,
    /// Share of non-hub edges placed between communities.
    pub inter_fraction: f64,
    /// Share of intra-community edges kept inside a circle.
    pub circle_fraction: f64,
    pub core_share: f64,
    pub min_circle: usize,
    /// Pareto exponent of the node weights.
    pub weight_exponent: f64,
    pub seed: u64,
}

impl CommunityConfig {
    /// Approximates the SNAP ego-Facebook graph: 4039 nodes, 88234 edges,
    /// ten ego networks sized by the egos' degrees, per-network edge counts
    /// in the proportions of the per-ego edge files, and an average
    /// clustering coefficient near 0.6.
    pub fn ego_facebook_like(seed: u64) -> Self {
        CommunityConfig {
            sizes: vec![1053, 793, 756, 548, 348, 226, 161, 60, 53, 41],
            intra_shares: vec![
                26749.0, 14024.0, 30025.0, 4813.0, 2519.0, 3192.0, 1693.0, 270.0, 146.0, 120.0,
            ],
            edges: 88_234,
            inter_fraction: 0.03,
            circle_fraction: 0.97,
            core_share: 0.25,
            min_circle: 4,
            weight_exponent: 2.5,
            seed,
        }
    }
}

struct WeightedPicker {
    cumulative: Vec<f64>,
}

impl WeightedPicker {
    fn new(weights: impl Iterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        WeightedPicker { cumulative }
    }

    fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    fn pick<R: Rng>(&self, rng: &mut R) -> usize {
        let x = rng.gen::<f64>() * self.total();
        self.cumulative
            .partition_point(|&c| c <= x)
            .min(self.cumulative.len() - 1)
    }
}

/// Splits `total` over slots in proportion to `shares` without exceeding
/// any slot's capacity; whatever cannot be placed is dropped.
fn capped_split(total: usize, shares: &[f64], capacity: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize; shares.len()];
    let mut remaining = total;
    let mut open: Vec<usize> = (0..shares.len()).filter(|&c| capacity[c] > 0).collect();
    while remaining > 0 && !open.is_empty() {
        let open_share: f64 = open.iter().map(|&c| shares[c]).sum();
        let mut handed = 0;
        for &c in &open {
            let share = (remaining as f64 * shares[c] / open_share).ceil() as usize;
            let give = share.min(capacity[c] - out[c]).min(remaining - handed);
            out[c] += give;
            handed += give;
        }
        remaining -= handed;
        open.retain(|&c| out[c] < capacity[c]);
        if handed == 0 {
            break;
        }
    }
    out
}

struct EdgeSet<'a> {
    present: HashSet<(NodeId, NodeId)>,
    /// Edges inside each community, hub edges included.
    intra_count: Vec<usize>,
    starts: &'a [usize],
}

impl EdgeSet<'_> {
    fn community_of(&self, u: usize) -> usize {
        self.starts.partition_point(|&s| s <= u) - 1
    }

    fn add(&mut self, a: usize, b: usize) -> bool {
        if a == b || !self.present.insert((a.min(b) as NodeId, a.max(b) as NodeId)) {
            return false;
        }
        let (ca, cb) = (self.community_of(a), self.community_of(b));
        if ca == cb {
            self.intra_count[ca] += 1;
        }
        true
    }
}

pub fn community_graph(cfg: &CommunityConfig) -> Result<Graph, SynthError> {
    let k = cfg.sizes.len();
    if k == 0 || cfg.sizes.iter().any(|&s| s < 2) {
        return Err(SynthError::InvalidParameters(
            "every community needs at least 2 nodes".into(),
        ));
    }
    if cfg.intra_shares.len() != k || cfg.intra_shares.iter().any(|&w| !(w > 0.0)) {
        return Err(SynthError::InvalidParameters(
            "need one positive intra share per community".into(),
        ));
    }
    if !(0.0..1.0).contains(&cfg.inter_fraction)
        || !(0.0..=1.0).contains(&cfg.circle_fraction)
        || !(cfg.core_share > 0.0 && cfg.core_share <= 1.0)
        || cfg.min_circle < 2
        || cfg.weight_exponent <= 1.0
    {
        return Err(SynthError::InvalidParameters(format!("{cfg:?}")));
    }
    let n: usize = cfg.sizes.iter().sum();
    let hub_edges: usize = cfg.sizes.iter().map(|s| s - 1).sum();
    let capacity: Vec<usize> = cfg.sizes.iter().map(|&s| s * (s - 1) / 2 - (s - 1)).collect();
    if cfg.edges < hub_edges || cfg.edges > hub_edges + capacity.iter().sum::<usize>() {
        return Err(SynthError::InvalidParameters(format!(
            "{} edges cannot be placed: need between {hub_edges} and {} within communities",
            cfg.edges,
            hub_edges + capacity.iter().sum::<usize>()
        )));
    }

    let mut rng = seeded(cfg.seed, 0);
    let weights: Vec<f64> = (0..n)
        .map(|_| (1.0 - rng.gen::<f64>()).powf(-1.0 / (cfg.weight_exponent - 1.0)).min(50.0))
        .collect();
    let starts: Vec<usize> = cfg
        .sizes
        .iter()
        .scan(0, |acc, &s| {
            let start = *acc;
            *acc += s;
            Some(start)
        })
        .collect();
    let mut set = EdgeSet {
        present: HashSet::with_capacity(cfg.edges * 2),
        intra_count: vec![0; k],
        starts: &starts,
    };

    for (&start, &size) in starts.iter().zip(&cfg.sizes) {
        for v in start + 1..start + size {
            set.add(start, v);
        }
    }
    let rest = cfg.edges - hub_edges;
    let inter = (rest as f64 * cfg.inter_fraction).round() as usize;
    let budget = capped_split(rest - inter, &cfg.intra_shares, &capacity);

    for c in 0..k {
        let (start, size) = (starts[c], cfg.sizes[c]);
        let picker = WeightedPicker::new((start..start + size).map(|u| weights[u]));
        let mut circle_pickers: Vec<(usize, WeightedPicker)> = Vec::new();
        let mut lo = start;
        while start + size - lo >= 2 {
            let left = start + size - lo;
            let len = ((left as f64 * cfg.core_share).round() as usize).max(cfg.min_circle).min(left);
            circle_pickers.push((lo, WeightedPicker::new((lo..lo + len).map(|u| weights[u]))));
            lo += len;
        }
        let circle_chooser = (!circle_pickers.is_empty()).then(|| {
            WeightedPicker::new(circle_pickers.iter().map(|(_, p)| p.cumulative.len() as f64))
        });
        let target = budget[c];
        let in_circle = (target as f64 * cfg.circle_fraction).round() as usize;
        let mut placed = 0;
        let mut attempts = 0usize;
        while placed < target && attempts < 50 * target + 1000 {
            attempts += 1;
            let (a, b) = match &circle_chooser {
                Some(chooser) if placed < in_circle => {
                    let (lo, p) = &circle_pickers[chooser.pick(&mut rng)];
                    (lo + p.pick(&mut rng), lo + p.pick(&mut rng))
                }
                _ => (start + picker.pick(&mut rng), start + picker.pick(&mut rng)),
            };
            if set.add(a, b) {
                placed += 1;
            }
        }
    }

    let global = WeightedPicker::new(weights.iter().copied());
    let mut placed = 0;
    let mut attempts = 0usize;
    while placed < inter && attempts < 50 * inter + 1000 {
        attempts += 1;
        let (a, b) = (global.pick(&mut rng), global.pick(&mut rng));
        if set.community_of(a) != set.community_of(b) && set.add(a, b) {
            placed += 1;
        }
    }

    // Whatever the capped samplers could not place goes to uniform pairs
    // inside communities that still have room.
    while set.present.len() < cfg.edges {
        let room = WeightedPicker::new(
            cfg.sizes.iter().zip(&set.intra_count).map(|(&s, &used)| (s * (s - 1) / 2 - used) as f64),
        );
        let c = room.pick(&mut rng);
        let (start, size) = (starts[c], cfg.sizes[c]);
        let a = start + rng.gen_range(0..size);
        let b = start + rng.gen_range(0..size);
        set.add(a, b);
    }

    let mut edges: Vec<(NodeId, NodeId)> = set.present.into_iter().collect();
    edges.sort_unstable();
    Ok(Graph::from_edges(n, edges))
}
