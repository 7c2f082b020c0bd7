//! Immutable undirected graphs in compressed adjacency (CSR) form.
//!
//! Rows are sorted and duplicate-free, there are no self-loops, and the
//! adjacency is symmetric. Every propagation engine reads the graph through
//! [`Graph::neighbors`], so the neighbor order fixed here is what makes the
//! floating-point sums reproducible run to run.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::GraphError;

/// Dense node index in `[0, node_count)`.
pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub avg_degree: f64,
    pub max_degree: usize,
}

/// A graph read from an edge-list file, with the mapping back to the
/// identifiers used in the file. `external_ids[dense]` is the original id.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: Graph,
    pub external_ids: Vec<u64>,
}

impl Graph {
    /// Builds a graph over `node_count` nodes. Either orientation of an edge
    /// denotes the same undirected edge; self-loops and repeats are dropped.
    ///
    /// Panics if an endpoint is out of range.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Graph
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut pairs: Vec<(NodeId, NodeId)> = Vec::new();
        for (u, v) in edges {
            assert!(
                (u as usize) < node_count && (v as usize) < node_count,
                "edge ({u}, {v}) out of range for {node_count} nodes"
            );
            if u != v {
                pairs.push((u, v));
                pairs.push((v, u));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut offsets = vec![0usize; node_count + 1];
        for &(u, _) in &pairs {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..node_count {
            offsets[i + 1] += offsets[i];
        }
        let targets = pairs.into_iter().map(|(_, v)| v).collect();
        Graph { offsets, targets }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Undirected edges, each counted once.
    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        let u = u as usize;
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    #[inline]
    pub fn degree(&self, u: NodeId) -> usize {
        let u = u as usize;
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Position of row `u` in the flat neighbor array. Slot `row_start(u) + k`
    /// holds the `k`-th neighbor of `u`.
    #[inline]
    pub fn row_start(&self, u: NodeId) -> usize {
        self.offsets[u as usize]
    }

    /// The flat neighbor array: entry `row_start(u) + k` is the `k`-th
    /// neighbor of `u`.
    pub fn slot_targets(&self) -> &[NodeId] {
        &self.targets
    }

    /// Total number of directed slots, `2 * edge_count`.
    pub fn slot_count(&self) -> usize {
        self.targets.len()
    }

    /// For every directed slot `(u -> v)`, the index of the slot `(v -> u)`.
    pub fn reverse_slots(&self) -> Vec<usize> {
        // Rows are sorted, so scanning sources in increasing order fills each
        // target row's slots in increasing order as well.
        let mut cursor: Vec<usize> = self.offsets[..self.node_count()].to_vec();
        let mut reverse = vec![0usize; self.targets.len()];
        for u in 0..self.node_count() {
            for slot in self.offsets[u]..self.offsets[u + 1] {
                let v = self.targets[slot] as usize;
                reverse[slot] = cursor[v];
                cursor[v] += 1;
            }
        }
        reverse
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.node_count() as NodeId).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    pub fn stats(&self) -> GraphStats {
        let n = self.node_count();
        let max_degree = (0..n as NodeId).map(|u| self.degree(u)).max().unwrap_or(0);
        let avg_degree = if n == 0 {
            0.0
        } else {
            2.0 * self.edge_count() as f64 / n as f64
        };
        GraphStats {
            node_count: n,
            edge_count: self.edge_count(),
            avg_degree,
            max_degree,
        }
    }

    /// Sum of degrees over `nodes`.
    pub fn volume(&self, nodes: &[NodeId]) -> Result<usize, GraphError> {
        let n = self.node_count();
        nodes.iter().try_fold(0usize, |acc, &u| {
            if (u as usize) < n {
                Ok(acc + self.degree(u))
            } else {
                Err(GraphError::NodeOutOfRange { node: u as u64, node_count: n })
            }
        })
    }

    /// Checks the structural invariants: sorted duplicate-free rows, no
    /// self-loops, and a symmetric adjacency.
    pub fn is_well_formed(&self) -> bool {
        let n = self.node_count() as NodeId;
        (0..n).all(|u| {
            let row = self.neighbors(u);
            row.windows(2).all(|w| w[0] < w[1])
                && row.iter().all(|&v| v != u && v < n && self.neighbors(v).binary_search(&u).is_ok())
        })
    }

    /// Writes a `# nodes N edges M` header, then one `u v` line per
    /// undirected edge using dense ids.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# nodes {} edges {}", self.node_count(), self.edge_count())?;
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    pub fn save_edge_list(&self, path: &Path) -> Result<(), GraphError> {
        let file = File::create(path).map_err(|e| GraphError::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_edge_list(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| GraphError::io(path, e))
    }
}

/// Parses a SNAP-style edge list: two integer ids per line, `#` starts a
/// comment line, blank lines are ignored. External ids are remapped to
/// dense ids in ascending order of the external value.
pub fn read_edge_list<R: BufRead>(reader: R) -> Result<LoadedGraph, GraphError> {
    let mut raw: Vec<(u64, u64)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| GraphError::Read { line: line_no, source: e })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let parse = |tok: Option<&str>| tok.and_then(|t| t.parse::<u64>().ok());
        match (parse(fields.next()), parse(fields.next())) {
            (Some(u), Some(v)) => raw.push((u, v)),
            _ => {
                return Err(GraphError::Malformed {
                    line: line_no,
                    content: trimmed.to_string(),
                })
            }
        }
    }
    if raw.is_empty() {
        return Err(GraphError::Empty);
    }

    let mut external_ids: Vec<u64> = raw.iter().flat_map(|&(u, v)| [u, v]).collect();
    external_ids.sort_unstable();
    external_ids.dedup();
    let dense: HashMap<u64, NodeId> = external_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i as NodeId))
        .collect();

    let graph = Graph::from_edges(
        external_ids.len(),
        raw.iter().map(|(u, v)| (dense[u], dense[v])),
    );
    Ok(LoadedGraph { graph, external_ids })
}

/// Reads an edge list whose ids are already dense. The node count comes
/// from a `# nodes N` header when present (so isolated nodes survive a round
/// trip), otherwise from the largest id.
pub fn read_dense_edge_list<R: BufRead>(reader: R) -> Result<Graph, GraphError> {
    let mut declared: Option<usize> = None;
    let mut edges: Vec<(u64, u64)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| GraphError::Read { line: line_no, source: e })?;
        let trimmed = line.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if declared.is_none() && words.next() == Some("nodes") {
                declared = words.next().and_then(|n| n.parse().ok());
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let parse = |tok: Option<&str>| tok.and_then(|t| t.parse::<u64>().ok());
        match (parse(fields.next()), parse(fields.next())) {
            (Some(u), Some(v)) => edges.push((u, v)),
            _ => {
                return Err(GraphError::Malformed { line: line_no, content: trimmed.to_string() })
            }
        }
    }
    let max_id = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0) as usize;
    let node_count = declared.unwrap_or(max_id);
    if node_count == 0 {
        return Err(GraphError::Empty);
    }
    if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u.max(v) as usize >= node_count) {
        return Err(GraphError::NodeOutOfRange { node: u.max(v), node_count });
    }
    Ok(Graph::from_edges(node_count, edges.into_iter().map(|(u, v)| (u as NodeId, v as NodeId))))
}

pub fn load_dense_edge_list(path: &Path) -> Result<Graph, GraphError> {
    let file = File::open(path).map_err(|e| GraphError::io(path, e))?;
    read_dense_edge_list(BufReader::new(file))
}

pub fn load_edge_list(path: &Path) -> Result<LoadedGraph, GraphError> {
    let file = File::open(path).map_err(|e| GraphError::io(path, e))?;
    read_edge_list(BufReader::new(file))
}

/// Writes the `external_id dense_id` sidecar for a loaded graph.
pub fn save_id_map(external_ids: &[u64], path: &Path) -> Result<(), GraphError> {
    let file = File::create(path).map_err(|e| GraphError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        for (dense, ext) in external_ids.iter().enumerate() {
            writeln!(out, "{ext} {dense}")?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| GraphError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip_keeps_isolated_nodes() {
        let g = Graph::from_edges(6, [(0, 1), (1, 4)]);
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "# nodes 6 edges 2\n0 1\n1 4\n");
        assert_eq!(read_dense_edge_list(&buf[..]).unwrap(), g);
        assert_eq!(read_dense_edge_list(&b"0 3\n"[..]).unwrap().node_count(), 4);
        assert!(matches!(
            read_dense_edge_list(&b"# nodes 3\n0 3\n"[..]),
            Err(GraphError::NodeOutOfRange { node: 3, node_count: 3 })
        ));
    }

    fn parse(text: &str) -> Result<LoadedGraph, GraphError> {
        read_edge_list(text.as_bytes())
    }

    fn star(leaves: usize) -> Graph {
        Graph::from_edges(leaves + 1, (1..=leaves as NodeId).map(|v| (0, v)))
    }

    #[test]
    fn path_of_three() {
        let g = parse("0 1\n1 2\n").unwrap().graph;
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.degrees(), vec![1, 2, 1]);
        let s = g.stats();
        assert!((s.avg_degree - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.max_degree, 2);
    }

    #[test]
    fn drops_self_loops_and_duplicates() {
        let loaded = parse("7 7\n7 9\n9 7\n").unwrap();
        assert_eq!(loaded.graph.node_count(), 2);
        assert_eq!(loaded.graph.edge_count(), 1);
        assert_eq!(loaded.external_ids, vec![7, 9]);
    }

    #[test]
    fn comments_and_blank_lines() {
        let g = parse("# Directed graph\n# Nodes: 3\n\n10\t20\n20 30\n").unwrap().graph;
        assert_eq!(g.edge_count(), 2);
        assert!(g.is_well_formed());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse("0 1\n1 x\n") {
            Err(GraphError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("5\n"), Err(GraphError::Malformed { line: 1, .. })));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse("# nothing\n"), Err(GraphError::Empty)));
        // a file of self-loops only yields no edges but does name nodes
        let g = parse("3 3\n").unwrap().graph;
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));
    }

    #[test]
    fn star_stats_and_volume() {
        let g = star(5);
        let s = g.stats();
        assert_eq!(s.max_degree, 5);
        assert!((s.avg_degree - 10.0 / 6.0).abs() < 1e-15);
        assert_eq!(g.volume(&[0]).unwrap(), 5);
        assert_eq!(g.volume(&[]).unwrap(), 0);
        let all: Vec<NodeId> = (0..6).collect();
        assert_eq!(g.volume(&all).unwrap(), 2 * g.edge_count());
        assert!(matches!(
            g.volume(&[6]),
            Err(GraphError::NodeOutOfRange { node: 6, .. })
        ));
    }

    #[test]
    fn reverse_slots_pair_up() {
        let g = Graph::from_edges(5, [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (4, 0)]);
        let rev = g.reverse_slots();
        for u in 0..5 {
            for (k, &v) in g.neighbors(u).iter().enumerate() {
                let slot = g.row_start(u) + k;
                let back = rev[slot];
                assert_eq!(rev[back], slot);
                let k_back = back - g.row_start(v);
                assert_eq!(g.neighbors(v)[k_back], u);
            }
        }
    }

    #[test]
    fn isolated_nodes_survive_construction() {
        let g = Graph::from_edges(4, [(0, 1)]);
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.degree(3), 0);
        assert!(g.neighbors(3).is_empty());
    }
}
