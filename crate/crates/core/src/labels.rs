//! Ground truth, training sets, label noise, and prior residuals.
//!
//! Sampling is deterministic per seed and keyed by position in the node id
//! order: relabeling the nodes and re-running with the same seed does not
//! produce a correspondingly relabeled sample.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;

use crate::error::LabelError;
use crate::graph::NodeId;
use crate::rng::seeded;

pub const DEFAULT_THETA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Benign,
    Sybil,
    Unlabeled,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Sybil => "sybil",
            Label::Unlabeled => "unlabeled",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "benign" => Some(Label::Benign),
            "sybil" => Some(Label::Sybil),
            "unlabeled" => Some(Label::Unlabeled),
            _ => None,
        }
    }
}

/// One label per node, indexed by dense id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<Label>,
}

impl LabelSet {
    pub fn new(labels: Vec<Label>) -> Self {
        LabelSet { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, u: NodeId) -> Label {
        self.labels[u as usize]
    }

    pub fn as_slice(&self) -> &[Label] {
        &self.labels
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (u, l) in self.labels.iter().enumerate() {
            writeln!(out, "{u} {}", l.as_str())?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write(&mut out)?;
        out.flush()
    }

    /// Reads `node_id label` lines for a graph of `node_count` nodes; nodes
    /// not mentioned stay unlabeled.
    pub fn load(path: &Path, node_count: usize) -> Result<LabelSet, LoadError> {
        let mut labels = vec![Label::Unlabeled; node_count];
        for_each_record(path, |line, node, value| {
            let label = Label::parse(value).ok_or_else(|| LoadError::Parse {
                line,
                message: format!("unknown label {value:?}"),
            })?;
            let slot = labels.get_mut(node as usize).ok_or(LoadError::Label(
                LabelError::NodeOutOfRange { node, node_count },
            ))?;
            *slot = label;
            Ok(())
        })?;
        Ok(LabelSet { labels })
    }
}

/// Labeled training nodes. Both lists are kept sorted and are disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainingSet {
    pub benign: Vec<NodeId>,
    pub sybil: Vec<NodeId>,
}

impl TrainingSet {
    pub fn new(mut benign: Vec<NodeId>, mut sybil: Vec<NodeId>) -> Result<Self, LabelError> {
        benign.sort_unstable();
        benign.dedup();
        sybil.sort_unstable();
        sybil.dedup();
        if let Some(&u) = benign.iter().find(|u| sybil.binary_search(u).is_ok()) {
            return Err(LabelError::Conflict(u));
        }
        Ok(TrainingSet { benign, sybil })
    }

    pub fn len(&self) -> usize {
        self.benign.len() + self.sybil.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, u: NodeId) -> bool {
        self.benign.binary_search(&u).is_ok() || self.sybil.binary_search(&u).is_ok()
    }

    /// The same training nodes with the two sides exchanged.
    pub fn swapped(&self) -> TrainingSet {
        TrainingSet {
            benign: self.sybil.clone(),
            sybil: self.benign.clone(),
        }
    }

    pub fn check_range(&self, node_count: usize) -> Result<(), LabelError> {
        match self.benign.iter().chain(&self.sybil).find(|&&u| u as usize >= node_count) {
            Some(&u) => Err(LabelError::NodeOutOfRange { node: u as u64, node_count }),
            None => Ok(()),
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut rows: Vec<(NodeId, Label)> = self
            .benign
            .iter()
            .map(|&u| (u, Label::Benign))
            .chain(self.sybil.iter().map(|&u| (u, Label::Sybil)))
            .collect();
        rows.sort_unstable_by_key(|&(u, _)| u);
        for (u, l) in rows {
            writeln!(out, "{u} {}", l.as_str())?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write(&mut out)?;
        out.flush()
    }

    pub fn load(path: &Path, node_count: usize) -> Result<TrainingSet, LoadError> {
        let labels = LabelSet::load(path, node_count)?;
        let pick = |want: Label| -> Vec<NodeId> {
            (0..node_count as NodeId).filter(|&u| labels.get(u) == want).collect()
        };
        Ok(TrainingSet::new(pick(Label::Benign), pick(Label::Sybil))?)
    }
}

/// Per-node residual priors `q̂_u = q_u - 0.5`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorVector(pub Vec<f64>);

impl PriorVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Prior probability of being a Sybil for node `u`.
    pub fn probability(&self, u: NodeId) -> f64 {
        self.0[u as usize] + 0.5
    }

    /// Reads `node_id probability` lines, e.g. the output of a feature-based
    /// classifier. Nodes not mentioned get the undecided prior 0.5.
    pub fn load(path: &Path, node_count: usize) -> Result<PriorVector, LoadError> {
        let mut residuals = vec![0.0; node_count];
        for_each_record(path, |line, node, value| {
            let p: f64 = value.parse().map_err(|_| LoadError::Parse {
                line,
                message: format!("invalid probability {value:?}"),
            })?;
            if !(0.0..=1.0).contains(&p) {
                return Err(LoadError::Label(LabelError::OutOfRange {
                    name: "prior",
                    value: p,
                    range: "[0, 1]",
                }));
            }
            let slot = residuals.get_mut(node as usize).ok_or(LoadError::Label(
                LabelError::NodeOutOfRange { node, node_count },
            ))?;
            *slot = p - 0.5;
            Ok(())
        })?;
        Ok(PriorVector(residuals))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Label(#[from] LabelError),
}

fn for_each_record<F>(path: &Path, mut f: F) -> Result<(), LoadError>
where
    F: FnMut(usize, u64, &str) -> Result<(), LoadError>,
{
    let reader = BufReader::new(File::open(path)?);
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let node = fields.next().and_then(|t| t.parse::<u64>().ok());
        match (node, fields.next()) {
            (Some(node), Some(value)) => f(line_no, node, value)?,
            _ => {
                return Err(LoadError::Parse {
                    line: line_no,
                    message: format!("expected `node_id value`, got {trimmed:?}"),
                })
            }
        }
    }
    Ok(())
}

/// Draws `count` nodes uniformly without replacement and files each under
/// its ground-truth side. Drawn nodes whose truth is unlabeled are dropped.
pub fn sample_training(truth: &LabelSet, count: usize, seed: u64) -> Result<TrainingSet, LabelError> {
    if count > truth.len() {
        return Err(LabelError::SampleTooLarge {
            requested: count,
            available: truth.len(),
        });
    }
    let mut rng = seeded(seed, 1);
    let mut benign = Vec::new();
    let mut sybil = Vec::new();
    for u in index::sample(&mut rng, truth.len(), count).into_iter() {
        match truth.get(u as NodeId) {
            Label::Benign => benign.push(u as NodeId),
            Label::Sybil => sybil.push(u as NodeId),
            Label::Unlabeled => {}
        }
    }
    TrainingSet::new(benign, sybil)
}

/// Mislabels `⌊tau·|L_s|⌋` labeled Sybils as benign and `⌊tau·|L_b|⌋` labeled
/// benign nodes as Sybils, each chosen uniformly without replacement.
pub fn inject_noise(ts: &TrainingSet, tau: f64, seed: u64) -> Result<TrainingSet, LabelError> {
    if !(0.0..=0.5).contains(&tau) {
        return Err(LabelError::OutOfRange {
            name: "tau",
            value: tau,
            range: "[0, 0.5]",
        });
    }
    let mut rng = seeded(seed, 2);
    let flips = |side: &[NodeId], rng: &mut rand_chacha::ChaCha8Rng| -> Vec<bool> {
        let k = (tau * side.len() as f64).floor() as usize;
        let mut flip = vec![false; side.len()];
        for i in index::sample(rng, side.len(), k).into_iter() {
            flip[i] = true;
        }
        flip
    };
    let sybil_flips = flips(&ts.sybil, &mut rng);
    let benign_flips = flips(&ts.benign, &mut rng);

    let mut benign = Vec::with_capacity(ts.benign.len());
    let mut sybil = Vec::with_capacity(ts.sybil.len());
    for (&u, &f) in ts.benign.iter().zip(&benign_flips) {
        if f { sybil.push(u) } else { benign.push(u) }
    }
    for (&u, &f) in ts.sybil.iter().zip(&sybil_flips) {
        if f { benign.push(u) } else { sybil.push(u) }
    }
    TrainingSet::new(benign, sybil)
}

/// `q̂_u = +theta` on labeled Sybils, `-theta` on labeled benign, 0 elsewhere.
pub fn assign_priors(ts: &TrainingSet, theta: f64, n: usize) -> Result<PriorVector, LabelError> {
    if !(theta > 0.0 && theta <= 0.5) {
        return Err(LabelError::OutOfRange {
            name: "theta",
            value: theta,
            range: "(0, 0.5]",
        });
    }
    ts.check_range(n)?;
    let mut q = vec![0.0; n];
    for &u in &ts.sybil {
        q[u as usize] = theta;
    }
    for &u in &ts.benign {
        q[u as usize] = -theta;
    }
    Ok(PriorVector(q))
}

/// Subsamples the larger side uniformly down to the size of the smaller one.
pub fn balance_training(ts: &TrainingSet, seed: u64) -> Result<TrainingSet, LabelError> {
    if ts.benign.is_empty() {
        return Err(LabelError::EmptySide("benign"));
    }
    if ts.sybil.is_empty() {
        return Err(LabelError::EmptySide("sybil"));
    }
    let target = ts.benign.len().min(ts.sybil.len());
    let mut rng = seeded(seed, 3);
    let mut shrink = |side: &[NodeId]| -> Vec<NodeId> {
        if side.len() == target {
            return side.to_vec();
        }
        index::sample(&mut rng, side.len(), target)
            .into_iter()
            .map(|i| side[i])
            .collect()
    };
    let benign = shrink(&ts.benign);
    let sybil = shrink(&ts.sybil);
    TrainingSet::new(benign, sybil)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn half_and_half(n: usize) -> LabelSet {
        LabelSet::new((0..n).map(|u| if u < n / 2 { Label::Benign } else { Label::Sybil }).collect())
    }

    fn ts(benign: std::ops::Range<u32>, sybil: std::ops::Range<u32>) -> TrainingSet {
        TrainingSet::new(benign.collect(), sybil.collect()).unwrap()
    }

    #[test]
    fn sample_sizes() {
        let truth = half_and_half(8078);
        let t = sample_training(&truth, 200, 1).unwrap();
        assert_eq!(t.len(), 200);
        assert!(t.benign.iter().all(|&u| truth.get(u) == Label::Benign));
        assert!(t.sybil.iter().all(|&u| truth.get(u) == Label::Sybil));
        assert!(sample_training(&truth, 0, 1).unwrap().is_empty());
        assert_eq!(sample_training(&truth, 8078, 1).unwrap().len(), 8078);
        assert_eq!(
            sample_training(&truth, 8079, 1),
            Err(LabelError::SampleTooLarge { requested: 8079, available: 8078 })
        );
    }

    #[test]
    fn sample_is_deterministic() {
        let truth = half_and_half(500);
        assert_eq!(sample_training(&truth, 50, 9), sample_training(&truth, 50, 9));
        assert_ne!(sample_training(&truth, 50, 9), sample_training(&truth, 50, 10));
    }

    #[test]
    fn noise_counts() {
        let t = ts(0..100, 100..200);
        assert_eq!(inject_noise(&t, 0.0, 4).unwrap(), t);

        let noisy = inject_noise(&t, 0.3, 4).unwrap();
        assert_eq!((noisy.benign.len(), noisy.sybil.len()), (100, 100));
        let moved_to_sybil = noisy.sybil.iter().filter(|&&u| u < 100).count();
        let moved_to_benign = noisy.benign.iter().filter(|&&u| u >= 100).count();
        assert_eq!((moved_to_sybil, moved_to_benign), (30, 30));

        let half = inject_noise(&t, 0.5, 4).unwrap();
        assert_eq!(half.sybil.iter().filter(|&&u| u < 100).count(), 50);

        assert!(inject_noise(&t, 0.51, 4).is_err());
        assert!(inject_noise(&t, -0.1, 4).is_err());
    }

    #[test]
    fn noise_uses_floor() {
        let t = ts(0..7, 7..10);
        let noisy = inject_noise(&t, 0.3, 1).unwrap();
        // floor(0.3 * 7) = 2 benign flipped, floor(0.3 * 3) = 0 sybil flipped
        assert_eq!(noisy.sybil.len(), 3 + 2);
        assert_eq!(noisy.benign.len(), 7 - 2);
    }

    #[test]
    fn priors() {
        let t = ts(0..2, 2..3);
        let q = assign_priors(&t, 0.1, 5).unwrap();
        assert_eq!(q.0, vec![-0.1, -0.1, 0.1, 0.0, 0.0]);
        assert!((q.probability(2) - 0.6).abs() < 1e-15);
        assert!((q.probability(0) - 0.4).abs() < 1e-15);
        assert_eq!(q.probability(4), 0.5);

        let q = assign_priors(&t, 0.5, 5).unwrap();
        assert_eq!(q.0, vec![-0.5, -0.5, 0.5, 0.0, 0.0]);

        assert_eq!(assign_priors(&TrainingSet::default(), 0.1, 3).unwrap().0, vec![0.0; 3]);
        assert!(assign_priors(&t, 0.0, 5).is_err());
        assert!(assign_priors(&t, 0.6, 5).is_err());
        assert!(assign_priors(&t, 0.1, 2).is_err());
    }

    #[test]
    fn balance() {
        let t = ts(0..10, 10..13);
        let b = balance_training(&t, 2).unwrap();
        assert_eq!((b.benign.len(), b.sybil.len()), (3, 3));
        assert_eq!(b.sybil, t.sybil);
        assert!(b.benign.iter().all(|u| t.benign.contains(u)));

        let even = ts(0..4, 4..8);
        assert_eq!(balance_training(&even, 2).unwrap(), even);

        assert_eq!(balance_training(&ts(0..3, 0..0), 1), Err(LabelError::EmptySide("sybil")));
    }

    #[test]
    fn overlapping_sides_rejected() {
        assert_eq!(TrainingSet::new(vec![1, 2], vec![2, 3]), Err(LabelError::Conflict(2)));
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.txt");
        let t = ts(0..3, 5..7);
        t.save(&path).unwrap();
        assert_eq!(TrainingSet::load(&path, 8).unwrap(), t);

        let prior_path = dir.path().join("priors.txt");
        std::fs::write(&prior_path, "0 0.9\n3 0.25\n").unwrap();
        let q = PriorVector::load(&prior_path, 4).unwrap();
        assert_eq!(q.0, vec![0.4, 0.0, 0.0, -0.25]);
        std::fs::write(&prior_path, "0 1.5\n").unwrap();
        assert!(PriorVector::load(&prior_path, 4).is_err());
        std::fs::write(&prior_path, "9 0.5\n").unwrap();
        assert!(PriorVector::load(&prior_path, 4).is_err());
    }

    proptest! {
        #[test]
        fn noise_with_equal_sides_preserves_sizes(k in 0u32..60, tau in 0.0f64..=0.5, seed in any::<u64>()) {
            let t = ts(0..k, 100..100 + k);
            let noisy = inject_noise(&t, tau, seed).unwrap();
            prop_assert_eq!(noisy.benign.len(), k as usize);
            prop_assert_eq!(noisy.sybil.len(), k as usize);
        }

        #[test]
        fn noise_moves_floor_counts(nb in 0u32..60, ns in 0u32..60, tau in 0.0f64..=0.5, seed in any::<u64>()) {
            let t = ts(0..nb, 100..100 + ns);
            let noisy = inject_noise(&t, tau, seed).unwrap();
            let kb = (tau * nb as f64).floor() as usize;
            let ks = (tau * ns as f64).floor() as usize;
            prop_assert_eq!(noisy.sybil.iter().filter(|&&u| u < 100).count(), kb);
            prop_assert_eq!(noisy.benign.iter().filter(|&&u| u >= 100).count(), ks);
            prop_assert_eq!(noisy.len(), t.len());
        }

        #[test]
        fn priors_supported_on_training(nb in 0u32..20, ns in 0u32..20, theta in 0.001f64..=0.5) {
            let t = ts(0..nb, 20..20 + ns);
            let q = assign_priors(&t, theta, 50).unwrap();
            for (u, &v) in q.0.iter().enumerate() {
                prop_assert!(v.abs() <= theta);
                prop_assert_eq!(v != 0.0, t.contains(u as u32));
            }
        }
    }
}
