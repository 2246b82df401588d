//! Hybrid isolation trees and forests.
//!
//! A hybrid tree is an ordinary isolation tree whose external nodes also
//! remember the centroid of the training points that reached them, plus any
//! labeled anomalies routed to them after training. Scoring a point yields the
//! classic isolation path length together with the distance to the reached
//! leaf's normal centroid and, when present, its anomaly centroid.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HifError, Result};

/// Harmonic-number estimate offset used by [`average_path_length`].
pub const EULER_GAMMA: f64 = 0.5772156649;

/// Height factor applied to `log2(psi)` when no explicit `l_max` is given.
pub const DEFAULT_HEIGHT_FACTOR: f64 = 1.1;

/// Average path length of an unsuccessful search in a binary search tree
/// built on `n` keys: `c(n) = 2 H(n-1) - 2(n-1)/n`, with `H(i) ~ ln(i) + gamma`.
///
/// Returns `0` for `n <= 1`.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let n = n as f64;
    2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
}

/// `ceil(factor * log2(psi))`, never below 1.
///
/// `factor = 1.0` gives the classic isolation-forest height limit.
pub fn height_limit(psi: usize, factor: f64) -> usize {
    let raw = factor * (psi.max(2) as f64).log2();
    // 1.1 * log2(1024) evaluates to 11.000000000000002; keep exact products exact.
    ((raw - 1e-9).ceil() as usize).max(1)
}

/// Check that every row has `dim` finite coordinates.
pub fn validate_rows<R: AsRef<[f64]>>(rows: &[R], dim: usize) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != dim {
            return Err(HifError::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        if let Some(col) = row.iter().position(|v| !v.is_finite()) {
            return Err(HifError::NonFinite { row: i, col });
        }
    }
    Ok(())
}

pub(crate) fn mean_point<R: AsRef<[f64]>>(points: &[R]) -> Option<Vec<f64>> {
    let first = points.first()?.as_ref();
    let mut acc = vec![0.0; first.len()];
    for p in points {
        for (a, v) in acc.iter_mut().zip(p.as_ref()) {
            *a += v;
        }
    }
    let n = points.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Some(acc)
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// External node payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    /// Number of training sample points that reached this leaf.
    pub size: usize,
    /// Mean of those points; absent for an empty leaf.
    pub centroid: Option<Vec<f64>>,
    #[serde(default)]
    pub anomalies: Vec<Vec<f64>>,
    #[serde(default)]
    pub labels: Vec<String>,
    /// Mean of `anomalies`, set by [`HybridForest::finalize_anomaly_centroids`].
    #[serde(default)]
    pub anomaly_centroid: Option<Vec<f64>>,
}

impl Leaf {
    fn from_sample(sample: &[&[f64]]) -> Self {
        Leaf {
            size: sample.len(),
            centroid: mean_point(sample),
            anomalies: Vec::new(),
            labels: Vec::new(),
            anomaly_centroid: None,
        }
    }
}

/// Tree node, stored in pre-order. The left child of an internal node at
/// index `i` is always `i + 1`; `right` is the index of the right child.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Internal {
        split_dim: usize,
        split_val: f64,
        right: usize,
    },
    External(Leaf),
}

/// Result of routing one point through one tree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathComponents {
    /// Edges traversed plus `c(leaf size)`.
    pub h: f64,
    /// Distance to the leaf's normal centroid.
    pub delta: Option<f64>,
    /// Distance to the leaf's anomaly centroid.
    pub delta_a: Option<f64>,
    /// Number of edges traversed.
    pub depth: usize,
    /// Node index of the reached leaf.
    pub leaf: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Grow a hybrid tree on `sample` starting at `depth`.
    ///
    /// Splitting stops at `l_max`, at singleton or empty samples, and when the
    /// randomly chosen dimension is constant over the sample.
    pub fn build<R: Rng + ?Sized>(
        sample: &[&[f64]],
        depth: usize,
        l_max: usize,
        rng: &mut R,
    ) -> Result<Tree> {
        if let Some(first) = sample.first() {
            validate_rows(sample, first.len())?;
        }
        let mut nodes = Vec::new();
        grow(&mut nodes, sample.to_vec(), depth, l_max, rng);
        Ok(Tree { nodes })
    }

    /// Rebuild a tree from pre-order node records, checking their structure.
    pub fn from_nodes(nodes: Vec<Node>, dim: usize) -> Result<Tree> {
        fn check(nodes: &[Node], at: usize, dim: usize) -> Result<usize> {
            match nodes.get(at) {
                None => Err(HifError::MalformedModel(format!(
                    "node {at} referenced but missing"
                ))),
                Some(Node::External(leaf)) => {
                    let dims_ok = leaf.centroid.iter().all(|c| c.len() == dim)
                        && leaf.anomaly_centroid.iter().all(|c| c.len() == dim)
                        && leaf.anomalies.iter().all(|a| a.len() == dim);
                    if !dims_ok {
                        return Err(HifError::MalformedModel(format!(
                            "leaf {at} has vectors of the wrong dimension"
                        )));
                    }
                    if leaf.anomalies.len() != leaf.labels.len() {
                        return Err(HifError::MalformedModel(format!(
                            "leaf {at} has {} anomalies but {} labels",
                            leaf.anomalies.len(),
                            leaf.labels.len()
                        )));
                    }
                    if leaf.centroid.is_some() != (leaf.size > 0) {
                        return Err(HifError::MalformedModel(format!(
                            "leaf {at} centroid does not match its size"
                        )));
                    }
                    Ok(at + 1)
                }
                Some(Node::Internal {
                    split_dim, right, ..
                }) => {
                    if *split_dim >= dim {
                        return Err(HifError::MalformedModel(format!(
                            "node {at} splits on dimension {split_dim} of {dim}"
                        )));
                    }
                    let after_left = check(nodes, at + 1, dim)?;
                    if after_left != *right {
                        return Err(HifError::MalformedModel(format!(
                            "node {at} right child is {right}, expected {after_left}"
                        )));
                    }
                    check(nodes, *right, dim)
                }
            }
        }
        let end = check(&nodes, 0, dim)?;
        if end != nodes.len() {
            return Err(HifError::MalformedModel(format!(
                "{} trailing nodes after tree end",
                nodes.len() - end
            )));
        }
        Ok(Tree { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Leaf> {
        self.nodes.iter().filter_map(|n| match n {
            Node::External(leaf) => Some(leaf),
            Node::Internal { .. } => None,
        })
    }

    fn leaves_mut(&mut self) -> impl Iterator<Item = &mut Leaf> {
        self.nodes.iter_mut().filter_map(|n| match n {
            Node::External(leaf) => Some(leaf),
            Node::Internal { .. } => None,
        })
    }

    /// Index of the leaf `x` lands in, and the number of edges traversed.
    pub fn route(&self, x: &[f64]) -> (usize, usize) {
        let mut at = 0;
        let mut depth = 0;
        while let Node::Internal {
            split_dim,
            split_val,
            right,
        } = &self.nodes[at]
        {
            at = if x[*split_dim] < *split_val {
                at + 1
            } else {
                *right
            };
            depth += 1;
        }
        (at, depth)
    }

    pub fn leaf(&self, index: usize) -> Option<&Leaf> {
        match self.nodes.get(index)? {
            Node::External(leaf) => Some(leaf),
            Node::Internal { .. } => None,
        }
    }

    fn leaf_mut(&mut self, index: usize) -> &mut Leaf {
        match &mut self.nodes[index] {
            Node::External(leaf) => leaf,
            Node::Internal { .. } => unreachable!("route always ends on a leaf"),
        }
    }

    /// Path length and centroid distances for `x`. Assumes `x` has the
    /// tree's dimensionality.
    pub fn path_components(&self, x: &[f64]) -> PathComponents {
        let (leaf_at, depth) = self.route(x);
        let leaf = self.leaf(leaf_at).expect("route ends on a leaf");
        PathComponents {
            h: depth as f64 + average_path_length(leaf.size),
            delta: leaf.centroid.as_deref().map(|c| euclidean(x, c)),
            delta_a: leaf.anomaly_centroid.as_deref().map(|c| euclidean(x, c)),
            depth,
            leaf: leaf_at,
        }
    }

    /// Deepest leaf, counted in edges from the root.
    pub fn height(&self) -> usize {
        fn walk(nodes: &[Node], at: usize, depth: usize) -> usize {
            match &nodes[at] {
                Node::External(_) => depth,
                Node::Internal { right, .. } => {
                    walk(nodes, at + 1, depth + 1).max(walk(nodes, *right, depth + 1))
                }
            }
        }
        walk(&self.nodes, 0, 0)
    }
}

fn grow<R: Rng + ?Sized>(
    nodes: &mut Vec<Node>,
    sample: Vec<&[f64]>,
    depth: usize,
    l_max: usize,
    rng: &mut R,
) {
    if depth >= l_max || sample.len() <= 1 {
        nodes.push(Node::External(Leaf::from_sample(&sample)));
        return;
    }
    let dim = sample[0].len();
    let split_dim = rng.random_range(0..dim);
    let (lo, hi) = sample
        .iter()
        .map(|p| p[split_dim])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if lo >= hi {
        nodes.push(Node::External(Leaf::from_sample(&sample)));
        return;
    }
    // Both partitions must be non-empty, so the split lies strictly above min.
    let split_val = loop {
        let p = rng.random_range(lo..hi);
        if p > lo {
            break p;
        }
    };
    let (left, right): (Vec<&[f64]>, Vec<&[f64]>) =
        sample.into_iter().partition(|p| p[split_dim] < split_val);

    let at = nodes.len();
    nodes.push(Node::Internal {
        split_dim,
        split_val,
        right: 0,
    });
    grow(nodes, left, depth + 1, l_max, rng);
    let right_at = nodes.len();
    if let Node::Internal { right, .. } = &mut nodes[at] {
        *right = right_at;
    }
    grow(nodes, right, depth + 1, l_max, rng);
}

/// Build parameters of a [`HybridForest`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    /// Subsample size per tree.
    pub psi: usize,
    /// Number of trees.
    pub trees: usize,
    /// Maximum tree height.
    pub l_max: usize,
    pub seed: u64,
}

impl ForestParams {
    /// Parameters with `l_max = ceil(1.1 * log2(psi))`.
    pub fn new(psi: usize, trees: usize, seed: u64) -> Self {
        ForestParams {
            psi,
            trees,
            l_max: height_limit(psi, DEFAULT_HEIGHT_FACTOR),
            seed,
        }
    }

    pub fn with_l_max(mut self, l_max: usize) -> Self {
        self.l_max = l_max;
        self
    }

    /// Classic isolation-forest height limit `ceil(log2(psi))`.
    pub fn classic(psi: usize, trees: usize, seed: u64) -> Self {
        Self::new(psi, trees, seed).with_l_max(height_limit(psi, 1.0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.psi < 2 {
            return Err(HifError::InvalidParameter(format!(
                "psi must be at least 2, got {}",
                self.psi
            )));
        }
        if self.trees < 1 {
            return Err(HifError::InvalidParameter("need at least one tree".into()));
        }
        if self.l_max < 1 {
            return Err(HifError::InvalidParameter(
                "l_max must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-instance raw score components, before normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    /// Isolation score `2^(-E[h] / c(psi))`.
    pub path_score: f64,
    /// Mean distance to the reached leaves' normal centroids.
    pub centroid_score: f64,
    /// Mean normal-centroid distance over mean anomaly-centroid distance, over
    /// trees whose reached leaf carries an anomaly centroid.
    pub anomaly_ratio_score: f64,
    pub mean_path_length: f64,
}

/// Random stream for tree `index` of a forest seeded with `seed`.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct HybridForest {
    params: ForestParams,
    dim: usize,
    sample_size: usize,
    trees: Vec<Tree>,
    anomalies_finalized: bool,
}

impl HybridForest {
    /// Grow `params.trees` trees, each on its own subsample of
    /// `min(psi, train.len())` points drawn without replacement.
    pub fn fit<R: AsRef<[f64]> + Sync>(train: &[R], params: ForestParams) -> Result<Self> {
        params.validate()?;
        let first = train.first().ok_or(HifError::EmptyDataset)?;
        let dim = first.as_ref().len();
        if dim == 0 {
            return Err(HifError::InvalidParameter(
                "instances need at least one dimension".into(),
            ));
        }
        if train.len() < 2 {
            return Err(HifError::InvalidParameter(
                "need at least two training instances".into(),
            ));
        }
        validate_rows(train, dim)?;
        let sample_size = params.psi.min(train.len());

        let build_one = |i: usize| -> Tree {
            let mut rng = tree_rng(params.seed, i);
            let sample: Vec<&[f64]> = index::sample(&mut rng, train.len(), sample_size)
                .into_iter()
                .map(|j| train[j].as_ref())
                .collect();
            let mut nodes = Vec::new();
            grow(&mut nodes, sample, 0, params.l_max, &mut rng);
            Tree { nodes }
        };

        #[cfg(feature = "parallel")]
        let trees = {
            use rayon::prelude::*;
            (0..params.trees).into_par_iter().map(build_one).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let trees = (0..params.trees).map(build_one).collect();

        Ok(HybridForest {
            params,
            dim,
            sample_size,
            trees,
            anomalies_finalized: false,
        })
    }

    /// Reassemble a forest from its parts, e.g. after deserialization.
    pub fn from_parts(
        params: ForestParams,
        dim: usize,
        sample_size: usize,
        trees: Vec<Tree>,
        anomalies_finalized: bool,
    ) -> Result<Self> {
        params.validate()?;
        if trees.len() != params.trees {
            return Err(HifError::MalformedModel(format!(
                "expected {} trees, found {}",
                params.trees,
                trees.len()
            )));
        }
        if sample_size < 2 || sample_size > params.psi {
            return Err(HifError::MalformedModel(format!(
                "sample size {sample_size} inconsistent with psi {}",
                params.psi
            )));
        }
        Ok(HybridForest {
            params,
            dim,
            sample_size,
            trees,
            anomalies_finalized,
        })
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points each tree was built on: `min(psi, |train|)`.
    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn anomalies_finalized(&self) -> bool {
        self.anomalies_finalized
    }

    /// Total labeled anomalies inserted (counted once per anomaly, not per tree).
    pub fn anomaly_count(&self) -> usize {
        self.trees
            .first()
            .map_or(0, |t| t.leaves().map(|l| l.anomalies.len()).sum())
    }

    /// Mean number of training points per external node over all trees.
    pub fn mean_leaf_size(&self) -> f64 {
        let (total, count) = self
            .trees
            .iter()
            .flat_map(|t| t.leaves())
            .fold((0usize, 0usize), |(s, c), l| (s + l.size, c + 1));
        total as f64 / count as f64
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(HifError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Route a labeled anomaly to one leaf in every tree.
    pub fn add_anomaly(&mut self, x: &[f64], label: &str) -> Result<()> {
        if self.anomalies_finalized {
            return Err(HifError::AnomaliesFinalized);
        }
        self.check_dim(x)?;
        validate_rows(&[x], self.dim)?;
        for tree in &mut self.trees {
            let (at, _) = tree.route(x);
            let leaf = tree.leaf_mut(at);
            leaf.anomalies.push(x.to_vec());
            leaf.labels.push(label.to_owned());
        }
        Ok(())
    }

    /// Compute the anomaly centroid of every leaf that holds anomalies and
    /// close the insertion phase. Calling it again has no further effect.
    pub fn finalize_anomaly_centroids(&mut self) {
        for leaf in self.trees.iter_mut().flat_map(|t| t.leaves_mut()) {
            leaf.anomaly_centroid = mean_point(&leaf.anomalies);
        }
        self.anomalies_finalized = true;
    }

    /// Re-open the insertion phase. Existing anomalies are kept; their
    /// centroids are dropped until the next finalization.
    pub fn reopen(&mut self) {
        for leaf in self.trees.iter_mut().flat_map(|t| t.leaves_mut()) {
            leaf.anomaly_centroid = None;
        }
        self.anomalies_finalized = false;
    }

    pub fn path_score(&self, mean_path_length: f64) -> f64 {
        2f64.powf(-mean_path_length / average_path_length(self.sample_size))
    }

    pub fn raw_scores(&self, x: &[f64]) -> Result<ScoreTriple> {
        self.check_dim(x)?;
        let mut h_sum = 0.0;
        let (mut delta_sum, mut delta_n) = (0.0, 0usize);
        let (mut ratio_num, mut ratio_den, mut ratio_n) = (0.0, 0.0, 0usize);
        for tree in &self.trees {
            let pc = tree.path_components(x);
            h_sum += pc.h;
            if let Some(d) = pc.delta {
                delta_sum += d;
                delta_n += 1;
            }
            if let (Some(d), Some(da)) = (pc.delta, pc.delta_a) {
                ratio_num += d;
                ratio_den += da;
                ratio_n += 1;
            }
        }
        let mean_path_length = h_sum / self.trees.len() as f64;
        let centroid_score = if delta_n == 0 {
            0.0
        } else {
            delta_sum / delta_n as f64
        };
        // Both means share the divisor `ratio_n`, so it cancels.
        let anomaly_ratio_score = if ratio_n == 0 || ratio_den == 0.0 {
            0.0
        } else {
            ratio_num / ratio_den
        };
        Ok(ScoreTriple {
            path_score: self.path_score(mean_path_length),
            centroid_score,
            anomaly_ratio_score,
            mean_path_length,
        })
    }

    pub fn raw_scores_batch<R: AsRef<[f64]> + Sync>(&self, xs: &[R]) -> Result<Vec<ScoreTriple>> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            xs.par_iter().map(|x| self.raw_scores(x.as_ref())).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            xs.iter().map(|x| self.raw_scores(x.as_ref())).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect()
    }

    #[test]
    fn c_of_small_n() {
        assert_eq!(average_path_length(0), 0.0);
        assert_eq!(average_path_length(1), 0.0);
        // 2 * (ln 1 + gamma) - 2 * 1 / 2
        assert!((average_path_length(2) - 0.1544313298).abs() < 1e-10);
    }

    #[test]
    fn height_limits() {
        assert_eq!(height_limit(64, 1.0), 6);
        assert_eq!(height_limit(64, 1.1), 7);
        assert_eq!(height_limit(1024, 1.1), 11);
        assert_eq!(height_limit(1024, 1.0), 10);
        assert_eq!(height_limit(2, 1.0), 1);
        assert_eq!(height_limit(1000, 1.0), 10);
    }

    #[test]
    fn single_point_is_a_leaf() {
        let p = [0.5, 0.5];
        let tree = Tree::build(&[&p], 0, 6, &mut tree_rng(0, 0)).unwrap();
        assert_eq!(tree.nodes().len(), 1);
        let leaf = tree.leaf(0).unwrap();
        assert_eq!(leaf.size, 1);
        assert_eq!(leaf.centroid.as_deref(), Some(&p[..]));
    }

    #[test]
    fn depth_cutoff_gives_midpoint() {
        let (a, b) = ([0.0, 2.0], [4.0, 6.0]);
        let tree = Tree::build(&[&a, &b], 3, 3, &mut tree_rng(0, 0)).unwrap();
        let leaf = tree.leaf(0).unwrap();
        assert_eq!(leaf.size, 2);
        assert_eq!(leaf.centroid.as_deref(), Some(&[2.0, 4.0][..]));
    }

    #[test]
    fn empty_sample_has_no_centroid() {
        let tree = Tree::build(&[], 0, 4, &mut tree_rng(0, 0)).unwrap();
        let leaf = tree.leaf(0).unwrap();
        assert_eq!(leaf.size, 0);
        assert!(leaf.centroid.is_none());
    }

    #[test]
    fn identical_points_never_split() {
        let p = [1.25, -3.0, 7.0];
        let sample = vec![&p[..]; 9];
        for seed in 0..1000 {
            let tree = Tree::build(&sample, 0, 8, &mut tree_rng(seed, 0)).unwrap();
            assert_eq!(tree.nodes().len(), 1);
            assert_eq!(tree.leaf(0).unwrap().size, 9);
        }
    }

    #[test]
    fn mismatched_sample_rejected() {
        let (a, b) = ([0.0, 1.0], [0.0]);
        let err = Tree::build(&[&a[..], &b[..]], 0, 4, &mut tree_rng(0, 0));
        assert!(matches!(err, Err(HifError::DimensionMismatch { .. })));
    }

    #[test]
    fn leaf_depth_bounded_by_l_max() {
        let data = grid(1000, 3);
        let forest = HybridForest::fit(&data, ForestParams::new(64, 64, 9)).unwrap();
        assert_eq!(forest.params().l_max, 7);
        for tree in forest.trees() {
            assert!(tree.height() <= 7);
            assert_eq!(tree.leaves().map(|l| l.size).sum::<usize>(), 64);
        }
    }

    #[test]
    fn single_tree_over_whole_set() {
        let data = grid(20, 4);
        let forest = HybridForest::fit(&data, ForestParams::new(20, 1, 1)).unwrap();
        assert_eq!(forest.trees().len(), 1);
        assert_eq!(forest.sample_size(), 20);
        let total: usize = forest.trees()[0].leaves().map(|l| l.size).sum();
        assert_eq!(total, 20);
    }

    #[test]
    fn small_train_uses_whole_set() {
        let data = grid(10, 4);
        let forest = HybridForest::fit(&data, ForestParams::new(256, 3, 1)).unwrap();
        assert_eq!(forest.sample_size(), 10);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(
            HybridForest::fit(&empty, ForestParams::new(8, 2, 0)),
            Err(HifError::EmptyDataset)
        ));
        let nan = vec![vec![0.0, 1.0], vec![f64::NAN, 2.0]];
        assert!(matches!(
            HybridForest::fit(&nan, ForestParams::new(8, 2, 0)),
            Err(HifError::NonFinite { row: 1, col: 0 })
        ));
        let one = vec![vec![0.0]];
        assert!(HybridForest::fit(&one, ForestParams::new(8, 2, 0)).is_err());
        let data = grid(10, 0);
        assert!(HybridForest::fit(&data, ForestParams::new(1, 2, 0)).is_err());
        assert!(HybridForest::fit(&data, ForestParams::new(4, 0, 0)).is_err());
    }

    #[test]
    fn root_leaf_path_components() {
        let p = [1.0, 1.0];
        let tree = Tree::build(&[&p], 0, 4, &mut tree_rng(0, 0)).unwrap();
        let pc = tree.path_components(&[4.0, 5.0]);
        assert_eq!(pc.h, 0.0);
        assert_eq!(pc.delta, Some(5.0));
        assert_eq!(pc.delta_a, None);
        assert_eq!(tree.path_components(&p).delta, Some(0.0));
    }

    #[test]
    fn anomalies_in_single_leaf_tree() {
        let data = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let mut forest = HybridForest::fit(&data, ForestParams::new(2, 1, 0)).unwrap();
        forest.add_anomaly(&[1.0, 0.0], "red").unwrap();
        forest.add_anomaly(&[3.0, 0.0], "red").unwrap();
        let leaf = forest.trees()[0].leaf(0).unwrap();
        assert_eq!(leaf.anomalies, vec![vec![1.0, 0.0], vec![3.0, 0.0]]);
        assert_eq!(leaf.labels, vec!["red", "red"]);
        assert!(leaf.anomaly_centroid.is_none());

        forest.finalize_anomaly_centroids();
        let leaf = forest.trees()[0].leaf(0).unwrap();
        assert_eq!(leaf.anomaly_centroid.as_deref(), Some(&[2.0, 0.0][..]));
        assert_eq!(forest.anomaly_count(), 2);

        assert!(matches!(
            forest.add_anomaly(&[0.0, 0.0], "x"),
            Err(HifError::AnomaliesFinalized)
        ));
        forest.finalize_anomaly_centroids();
        assert_eq!(
            forest.trees()[0]
                .leaf(0)
                .unwrap()
                .anomaly_centroid
                .as_deref(),
            Some(&[2.0, 0.0][..])
        );
    }

    #[test]
    fn reopen_allows_more_anomalies() {
        let data = grid(50, 1);
        let mut forest = HybridForest::fit(&data, ForestParams::new(16, 4, 0)).unwrap();
        forest.add_anomaly(&[0.5, 0.5], "a").unwrap();
        forest.finalize_anomaly_centroids();
        forest.reopen();
        assert!(forest.trees()[0]
            .leaves()
            .all(|l| l.anomaly_centroid.is_none()));
        forest.add_anomaly(&[0.1, 0.9], "b").unwrap();
        forest.finalize_anomaly_centroids();
        assert_eq!(forest.anomaly_count(), 2);
    }

    #[test]
    fn add_anomaly_checks_dimension() {
        let data = grid(10, 1);
        let mut forest = HybridForest::fit(&data, ForestParams::new(8, 2, 0)).unwrap();
        assert!(matches!(
            forest.add_anomaly(&[1.0], "x"),
            Err(HifError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
        assert!(forest.raw_scores(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn no_anomalies_means_zero_ratio() {
        let data = grid(200, 5);
        let forest = HybridForest::fit(&data, ForestParams::new(32, 20, 2)).unwrap();
        for x in grid(30, 6) {
            assert_eq!(forest.raw_scores(&x).unwrap().anomaly_ratio_score, 0.0);
        }
    }

    #[test]
    fn path_score_is_half_at_c_psi() {
        let data = grid(100, 5);
        let forest = HybridForest::fit(&data, ForestParams::new(64, 2, 2)).unwrap();
        assert!((forest.path_score(average_path_length(64)) - 0.5).abs() < 1e-15);
        assert_eq!(forest.path_score(0.0), 1.0);
    }

    #[test]
    fn from_nodes_rejects_bad_structure() {
        let leaf = Node::External(Leaf {
            size: 1,
            centroid: Some(vec![0.0]),
            anomalies: vec![],
            labels: vec![],
            anomaly_centroid: None,
        });
        let bad = vec![
            Node::Internal {
                split_dim: 0,
                split_val: 0.5,
                right: 3,
            },
            leaf.clone(),
            leaf.clone(),
        ];
        assert!(Tree::from_nodes(bad, 1).is_err());
        let good = vec![
            Node::Internal {
                split_dim: 0,
                split_val: 0.5,
                right: 2,
            },
            leaf.clone(),
            leaf,
        ];
        assert!(Tree::from_nodes(good.clone(), 1).is_ok());
        assert!(Tree::from_nodes(good, 0).is_err());
    }
}
