//! Regression trees that minimize within-leaf squared error over the sampled
//! points of a subregion, used to build adaptive partitions.
//!
//! The objective is the plain sum of squared deviations of each sample's
//! cumulative mean from its leaf mean, subject to a minimum leaf size and a
//! maximum depth. There is no complexity penalty. Trees are fitted by greedy
//! top-down splitting, refined by a node-wise local search, and the best of
//! several restarts is kept.
//!
//! Splits route a sample left iff `feature < threshold`, which matches the
//! `a·x < b` / `a·x >= b` sides of region cuts.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::error::{EsbbError, Result};
use crate::problem::{IntegerPoint, ProblemDefinition};
use crate::region::{Partition, RegionIdAllocator, Subregion};
use crate::sampling::{RandomStream, StreamLineage};

/// Relative SSE decrease a split or move must achieve to count as an
/// improvement.
const IMPROVEMENT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    /// Decision variable `x_i`.
    Axis(usize),
    /// Linear combination `y_j = a_j·x`.
    Hyperplane(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitFeature {
    kind: FeatureKind,
    coefficients: Vec<f64>,
}

impl SplitFeature {
    pub fn axis(index: usize, dimension: usize) -> Self {
        let mut coefficients = vec![0.0; dimension];
        coefficients[index] = 1.0;
        SplitFeature { kind: FeatureKind::Axis(index), coefficients }
    }

    pub fn hyperplane(index: usize, coefficients: Vec<f64>) -> Self {
        SplitFeature { kind: FeatureKind::Hyperplane(index), coefficients }
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn is_axis(&self) -> bool {
        matches!(self.kind, FeatureKind::Axis(_))
    }

    /// `a·x`, summed in the same order as region cuts evaluate it.
    pub fn value(&self, coords: &[i64]) -> f64 {
        self.coefficients.iter().zip(coords).fold(0.0, |acc, (a, &x)| acc + a * x as f64)
    }

    pub fn label(&self) -> String {
        match self.kind {
            FeatureKind::Axis(i) => format!("x{i}"),
            FeatureKind::Hyperplane(j) => format!("y{j}"),
        }
    }
}

/// One axis feature per decision variable.
pub fn axis_features(dimension: usize) -> Vec<SplitFeature> {
    (0..dimension).map(|i| SplitFeature::axis(i, dimension)).collect()
}

/// Cluster-total features `y_j = Σ_{i∈C_j} x_i`; duplicate clusters collapse.
pub fn make_cluster_features(clusters: &[Vec<usize>], dimension: usize) -> Result<Vec<SplitFeature>> {
    let mut seen: Vec<Vec<usize>> = Vec::new();
    let mut out = Vec::new();
    for cluster in clusters {
        if cluster.is_empty() {
            return Err(EsbbError::InvalidArgument("empty cluster".into()));
        }
        if let Some(&i) = cluster.iter().find(|&&i| i >= dimension) {
            return Err(EsbbError::InvalidArgument(format!("cluster index {i} out of range 0..{dimension}")));
        }
        let mut key = cluster.clone();
        key.sort_unstable();
        key.dedup();
        if seen.contains(&key) {
            continue;
        }
        let mut coefficients = vec![0.0; dimension];
        for &i in &key {
            coefficients[i] = 1.0;
        }
        out.push(SplitFeature::hyperplane(out.len(), coefficients));
        seen.push(key);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub point: IntegerPoint,
    pub label: f64,
    pub feature_values: Vec<f64>,
}

impl TrainingSample {
    pub fn new(point: IntegerPoint, label: f64, features: &[SplitFeature]) -> Self {
        let feature_values = features.iter().map(|f| f.value(point.coords())).collect();
        TrainingSample { point, label, feature_values }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub restarts: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { max_depth: 2, min_leaf: 2, restarts: 10 }
    }
}

impl TreeConfig {
    pub fn new(max_depth: usize, min_leaf: usize, restarts: usize) -> Result<Self> {
        if max_depth < 1 || min_leaf < 1 || restarts < 1 {
            return Err(EsbbError::InvalidArgument(
                "tree depth, minimum leaf size and restarts must all be >= 1".into(),
            ));
        }
        Ok(TreeConfig { max_depth, min_leaf, restarts })
    }

    /// Upper bound on the number of leaves (subregions).
    pub fn max_subregions(&self) -> usize {
        1usize << self.max_depth.min(usize::BITS as usize - 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Leaf { members: Vec<usize>, mean: f64 },
    Branch { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
}

fn label_mean(samples: &[TrainingSample], members: &[usize]) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    members.iter().map(|&i| samples[i].label).sum::<f64>() / members.len() as f64
}

/// Two-pass within-group squared error.
fn group_sse(samples: &[TrainingSample], members: &[usize]) -> f64 {
    let m = label_mean(samples, members);
    members.iter().map(|&i| (samples[i].label - m).powi(2)).sum()
}

impl TreeNode {
    fn leaf(members: Vec<usize>, samples: &[TrainingSample]) -> Self {
        let mean = label_mean(samples, &members);
        TreeNode::Leaf { members, mean }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Branch { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn collect_members(&self, out: &mut Vec<usize>) {
        match self {
            TreeNode::Leaf { members, .. } => out.extend_from_slice(members),
            TreeNode::Branch { left, right, .. } => {
                left.collect_members(out);
                right.collect_members(out);
            }
        }
    }

    fn members(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_members(&mut out);
        out
    }

    fn sse(&self, samples: &[TrainingSample]) -> f64 {
        match self {
            TreeNode::Leaf { members, .. } => group_sse(samples, members),
            TreeNode::Branch { left, right, .. } => left.sse(samples) + right.sse(samples),
        }
    }

    fn min_leaf_size(&self) -> usize {
        match self {
            TreeNode::Leaf { members, .. } => members.len(),
            TreeNode::Branch { left, right, .. } => left.min_leaf_size().min(right.min_leaf_size()),
        }
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a TreeNode>) {
        match self {
            TreeNode::Leaf { .. } => out.push(self),
            TreeNode::Branch { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    /// Same split structure with `members` routed through it afresh.
    fn reroute(&self, members: &[usize], samples: &[TrainingSample]) -> TreeNode {
        match self {
            TreeNode::Leaf { .. } => TreeNode::leaf(members.to_vec(), samples),
            TreeNode::Branch { feature, threshold, left, right } => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    members.iter().partition(|&&i| samples[i].feature_values[*feature] < *threshold);
                TreeNode::Branch {
                    feature: *feature,
                    threshold: *threshold,
                    left: Box::new(left.reroute(&l, samples)),
                    right: Box::new(right.reroute(&r, samples)),
                }
            }
        }
    }

    /// Collapses, bottom-up, every branch with a child leaf below `min_leaf`.
    fn repair(self, min_leaf: usize, samples: &[TrainingSample]) -> TreeNode {
        match self {
            TreeNode::Leaf { .. } => self,
            TreeNode::Branch { feature, threshold, left, right } => {
                let left = left.repair(min_leaf, samples);
                let right = right.repair(min_leaf, samples);
                if left.min_leaf_size() < min_leaf || right.min_leaf_size() < min_leaf {
                    let mut members = left.members();
                    members.extend(right.members());
                    members.sort_unstable();
                    TreeNode::leaf(members, samples)
                } else {
                    TreeNode::Branch { feature, threshold, left: Box::new(left), right: Box::new(right) }
                }
            }
        }
    }

    fn get(&self, path: &[bool]) -> Option<&TreeNode> {
        match (path.split_first(), self) {
            (None, _) => Some(self),
            (Some((&go_right, rest)), TreeNode::Branch { left, right, .. }) => {
                if go_right { right.get(rest) } else { left.get(rest) }
            }
            (Some(_), TreeNode::Leaf { .. }) => None,
        }
    }

    fn get_mut(&mut self, path: &[bool]) -> Option<&mut TreeNode> {
        match path.split_first() {
            None => Some(self),
            Some((&go_right, rest)) => match self {
                TreeNode::Branch { left, right, .. } => {
                    if go_right { right.get_mut(rest) } else { left.get_mut(rest) }
                }
                TreeNode::Leaf { .. } => None,
            },
        }
    }

    fn collect_paths(&self, prefix: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
        out.push(prefix.clone());
        if let TreeNode::Branch { left, right, .. } = self {
            prefix.push(false);
            left.collect_paths(prefix, out);
            prefix.pop();
            prefix.push(true);
            right.collect_paths(prefix, out);
            prefix.pop();
        }
    }

    fn render(&self, features: &[SplitFeature], indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        match self {
            TreeNode::Leaf { members, mean } => {
                let _ = writeln!(out, "{pad}leaf mean={mean} n={}", members.len());
            }
            TreeNode::Branch { feature, threshold, left, right } => {
                let name = features.get(*feature).map_or_else(|| format!("f{feature}"), SplitFeature::label);
                let _ = writeln!(out, "{pad}split {name} < {threshold}");
                left.render(features, indent + 1, out);
                right.render(features, indent + 1, out);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTree {
    root: TreeNode,
    config: TreeConfig,
}

impl RegressionTree {
    pub fn new(root: TreeNode, config: TreeConfig) -> Self {
        RegressionTree { root, config }
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn config(&self) -> TreeConfig {
        self.config
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn is_single_leaf(&self) -> bool {
        self.root.is_leaf()
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        self.root.collect_leaves(&mut out);
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    /// Member sample indices of each leaf, left to right.
    pub fn leaf_members(&self) -> Vec<Vec<usize>> {
        self.leaves()
            .into_iter()
            .map(|l| match l {
                TreeNode::Leaf { members, .. } => members.clone(),
                TreeNode::Branch { .. } => unreachable!(),
            })
            .collect()
    }

    pub fn sse(&self, samples: &[TrainingSample]) -> f64 {
        self.root.sse(samples)
    }

    /// Index (left to right) of the leaf a feature vector routes to.
    pub fn route(&self, feature_values: &[f64]) -> usize {
        fn go(node: &TreeNode, fv: &[f64], offset: usize) -> usize {
            match node {
                TreeNode::Leaf { .. } => offset,
                TreeNode::Branch { feature, threshold, left, right } => {
                    if fv[*feature] < *threshold {
                        go(left, fv, offset)
                    } else {
                        let mut n = Vec::new();
                        left.collect_leaves(&mut n);
                        go(right, fv, offset + n.len())
                    }
                }
            }
        }
        go(&self.root, feature_values, 0)
    }

    /// Depth and leaf-size constraints, and that leaf members are exactly the
    /// samples routed there.
    pub fn check(&self, samples: &[TrainingSample]) -> Result<()> {
        if self.depth() > self.config.max_depth {
            return Err(EsbbError::Internal(format!("tree depth {} exceeds {}", self.depth(), self.config.max_depth)));
        }
        if !self.root.is_leaf() && self.root.min_leaf_size() < self.config.min_leaf {
            return Err(EsbbError::Internal("tree has a leaf below the minimum size".into()));
        }
        for (leaf, members) in self.leaf_members().iter().enumerate() {
            for &i in members {
                if self.route(&samples[i].feature_values) != leaf {
                    return Err(EsbbError::Internal(format!("sample {i} is stored in the wrong leaf")));
                }
            }
        }
        Ok(())
    }

    /// Indented text form, one node per line.
    pub fn render(&self, features: &[SplitFeature]) -> String {
        let mut out = String::new();
        self.root.render(features, 0, &mut out);
        out
    }
}

/// Sum over groups of squared deviations from the group mean.
pub fn partition_sse(groups: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for g in groups {
        if g.is_empty() {
            return Err(EsbbError::InvalidArgument("partition contains an empty group".into()));
        }
        let m = g.iter().sum::<f64>() / g.len() as f64;
        total += g.iter().map(|y| (y - m).powi(2)).sum::<f64>();
    }
    Ok(total)
}

/// Midpoints between consecutive distinct sorted values.
pub fn candidate_thresholds(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.windows(2).map(|w| midpoint(w[0], w[1])).collect()
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = 0.5 * (lo + hi);
    if lo < m && m <= hi { m } else { hi }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Two-leaf SSE of the split.
    pub sse: f64,
}

/// Per-feature sorted orders of the full training set; subsets are scanned by
/// filtering these orders with a generation stamp.
struct Scanner<'a> {
    samples: &'a [TrainingSample],
    orders: Vec<Vec<usize>>,
    stamp: Vec<u32>,
    generation: u32,
    min_leaf: usize,
}

impl<'a> Scanner<'a> {
    fn new(samples: &'a [TrainingSample], n_features: usize, min_leaf: usize) -> Self {
        let orders = (0..n_features)
            .map(|f| {
                let mut o: Vec<usize> = (0..samples.len()).collect();
                o.sort_by(|&a, &b| samples[a].feature_values[f].total_cmp(&samples[b].feature_values[f]).then(a.cmp(&b)));
                o
            })
            .collect();
        Scanner { samples, orders, stamp: vec![0; samples.len()], generation: 0, min_leaf }
    }

    fn mark(&mut self, members: &[usize]) {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        for &i in members {
            self.stamp[i] = self.generation;
        }
    }

    fn ordered(&self, feature: usize, buf: &mut Vec<usize>) {
        buf.clear();
        buf.extend(self.orders[feature].iter().copied().filter(|&i| self.stamp[i] == self.generation));
    }

    fn value(&self, i: usize, feature: usize) -> f64 {
        self.samples[i].feature_values[feature]
    }

    /// Best strictly improving two-leaf split of `members`. Features are tried
    /// in `feature_order`; among equal SSEs the earlier feature and lower
    /// threshold win.
    fn best_split(&mut self, members: &[usize], feature_order: &[usize]) -> Option<SplitChoice> {
        let n = members.len();
        if n < 2 * self.min_leaf {
            return None;
        }
        let parent = group_sse(self.samples, members);
        if parent <= 0.0 {
            return None;
        }
        let centre = label_mean(self.samples, members);
        let tol = IMPROVEMENT * parent;
        let total_s: f64 = members.iter().map(|&i| self.samples[i].label - centre).sum();
        let total_q: f64 = members.iter().map(|&i| (self.samples[i].label - centre).powi(2)).sum();
        self.mark(members);
        let mut buf = Vec::with_capacity(n);
        let mut best: Option<SplitChoice> = None;
        for &f in feature_order {
            self.ordered(f, &mut buf);
            let (mut s, mut q) = (0.0, 0.0);
            for k in 1..n {
                let y = self.samples[buf[k - 1]].label - centre;
                s += y;
                q += y * y;
                if k < self.min_leaf || n - k < self.min_leaf {
                    continue;
                }
                let (v0, v1) = (self.value(buf[k - 1], f), self.value(buf[k], f));
                if !(v0 < v1) {
                    continue;
                }
                let kl = k as f64;
                let kr = (n - k) as f64;
                let sse = (q - s * s / kl).max(0.0) + ((total_q - q) - (total_s - s).powi(2) / kr).max(0.0);
                if best.is_none_or(|b| sse < b.sse - tol) {
                    best = Some(SplitChoice { feature: f, threshold: midpoint(v0, v1), sse });
                }
            }
        }
        let best = best?;
        let (l, r): (Vec<usize>, Vec<usize>) =
            members.iter().partition(|&&i| self.value(i, best.feature) < best.threshold);
        let exact = group_sse(self.samples, &l) + group_sse(self.samples, &r);
        (exact < parent * (1.0 - IMPROVEMENT)).then_some(SplitChoice { sse: exact, ..best })
    }

    /// Greedy top-down tree on `members` with `depth_left` levels available.
    fn grow(&mut self, members: Vec<usize>, depth_left: usize, feature_order: &[usize]) -> TreeNode {
        if depth_left == 0 || members.len() < 2 * self.min_leaf {
            return TreeNode::leaf(members, self.samples);
        }
        match self.best_split(&members, feature_order) {
            None => TreeNode::leaf(members, self.samples),
            Some(split) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    members.iter().partition(|&&i| self.value(i, split.feature) < split.threshold);
                TreeNode::Branch {
                    feature: split.feature,
                    threshold: split.threshold,
                    left: Box::new(self.grow(l, depth_left - 1, feature_order)),
                    right: Box::new(self.grow(r, depth_left - 1, feature_order)),
                }
            }
        }
    }

    /// Best subtree over `members` whose root split is any (feature,
    /// threshold) candidate and whose children are grown greedily with the
    /// remaining depth. `None` when no admissible split exists.
    fn best_resplit(&mut self, members: &[usize], depth_left: usize, feature_order: &[usize]) -> Option<(f64, TreeNode)> {
        let n = members.len();
        if depth_left == 0 || n < 2 * self.min_leaf {
            return None;
        }
        let centre = label_mean(self.samples, members);
        let total_s: f64 = members.iter().map(|&i| self.samples[i].label - centre).sum();
        let total_q: f64 = members.iter().map(|&i| (self.samples[i].label - centre).powi(2)).sum();
        let mut best: Option<(f64, usize, f64, Option<(TreeNode, TreeNode)>)> = None;
        let mut buf = Vec::with_capacity(n);
        for &f in feature_order {
            self.mark(members);
            self.ordered(f, &mut buf);
            let order = std::mem::take(&mut buf);
            let (mut s, mut q) = (0.0, 0.0);
            for k in 1..n {
                let y = self.samples[order[k - 1]].label - centre;
                s += y;
                q += y * y;
                if k < self.min_leaf || n - k < self.min_leaf {
                    continue;
                }
                let (v0, v1) = (self.value(order[k - 1], f), self.value(order[k], f));
                if !(v0 < v1) {
                    continue;
                }
                let threshold = midpoint(v0, v1);
                let (sse, children) = if depth_left == 1 {
                    let kl = k as f64;
                    let kr = (n - k) as f64;
                    let sse = (q - s * s / kl).max(0.0) + ((total_q - q) - (total_s - s).powi(2) / kr).max(0.0);
                    (sse, None)
                } else {
                    let left = self.grow(order[..k].to_vec(), depth_left - 1, feature_order);
                    let right = self.grow(order[k..].to_vec(), depth_left - 1, feature_order);
                    (left.sse(self.samples) + right.sse(self.samples), Some((left, right)))
                };
                let tol = IMPROVEMENT * sse.abs();
                if best.as_ref().is_none_or(|b| sse < b.0 - tol) {
                    best = Some((sse, f, threshold, children));
                }
            }
            buf = order;
        }
        let (sse, feature, threshold, children) = best?;
        let (left, right) = match children {
            Some(c) => c,
            None => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    members.iter().partition(|&&i| self.value(i, feature) < threshold);
                (TreeNode::leaf(l, self.samples), TreeNode::leaf(r, self.samples))
            }
        };
        Some((sse, TreeNode::Branch { feature, threshold, left: Box::new(left), right: Box::new(right) }))
    }
}

fn natural_order(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn check_features(samples: &[TrainingSample], features: &[SplitFeature]) -> Result<()> {
    if features.is_empty() {
        return Err(EsbbError::InvalidArgument("at least one split feature is required".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.feature_values.len() != features.len()) {
        return Err(EsbbError::DimensionMismatch { expected: features.len(), actual: s.feature_values.len() });
    }
    Ok(())
}

/// Exhaustive best two-leaf split of all samples. `None` when no split leaves
/// `min_leaf` samples on both sides and strictly lowers the SSE.
pub fn best_split(samples: &[TrainingSample], features: &[SplitFeature], min_leaf: usize) -> Result<Option<SplitChoice>> {
    check_features(samples, features)?;
    if min_leaf == 0 {
        return Err(EsbbError::InvalidArgument("minimum leaf size must be >= 1".into()));
    }
    let mut scanner = Scanner::new(samples, features.len(), min_leaf);
    let members = natural_order(samples.len());
    Ok(scanner.best_split(&members, &natural_order(features.len())))
}

/// CART-style greedy tree.
pub fn greedy_tree(samples: &[TrainingSample], features: &[SplitFeature], cfg: &TreeConfig) -> Result<RegressionTree> {
    check_features(samples, features)?;
    if samples.len() < cfg.min_leaf {
        return Err(EsbbError::InvalidArgument(format!(
            "{} samples cannot fill a leaf of minimum size {}",
            samples.len(),
            cfg.min_leaf
        )));
    }
    let mut scanner = Scanner::new(samples, features.len(), cfg.min_leaf);
    let root = scanner.grow(natural_order(samples.len()), cfg.max_depth, &natural_order(features.len()));
    Ok(RegressionTree::new(root, *cfg))
}

/// Local search state shared across restarts. Re-split candidates depend only
/// on a node's member set and remaining depth, so they are cached.
struct LocalSearch<'a> {
    scanner: Scanner<'a>,
    samples: &'a [TrainingSample],
    cfg: TreeConfig,
    features: Vec<usize>,
    cache: HashMap<(Vec<usize>, usize), Option<(f64, TreeNode)>>,
}

impl<'a> LocalSearch<'a> {
    fn new(samples: &'a [TrainingSample], n_features: usize, cfg: TreeConfig) -> Self {
        LocalSearch {
            scanner: Scanner::new(samples, n_features, cfg.min_leaf),
            samples,
            cfg,
            features: natural_order(n_features),
            cache: HashMap::new(),
        }
    }

    fn resplit(&mut self, members: &[usize], depth_left: usize) -> Option<(f64, TreeNode)> {
        let mut key = members.to_vec();
        key.sort_unstable();
        if let Some(hit) = self.cache.get(&(key.clone(), depth_left)) {
            return hit.clone();
        }
        let features = self.features.clone();
        let result = self.scanner.best_resplit(&key, depth_left, &features);
        self.cache.insert((key, depth_left), result.clone());
        result
    }

    /// Best replacement for the subtree at `node` sitting at depth `depth`.
    fn best_move(&mut self, node: &TreeNode, depth: usize) -> Option<TreeNode> {
        let members = node.members();
        let min_leaf = self.cfg.min_leaf;
        let mut candidates: Vec<TreeNode> = Vec::new();
        if let TreeNode::Branch { left, right, .. } = node {
            candidates.push(TreeNode::leaf(members.clone(), self.samples));
            for child in [left, right] {
                let promoted = child.reroute(&members, self.samples);
                if promoted.is_leaf() || promoted.min_leaf_size() >= min_leaf {
                    candidates.push(promoted);
                }
            }
        }
        if let Some((_, subtree)) = self.resplit(&members, self.cfg.max_depth - depth) {
            candidates.push(subtree);
        }
        let mut best: Option<(f64, TreeNode)> = None;
        for c in candidates {
            let sse = c.sse(self.samples);
            if best.as_ref().is_none_or(|b| sse < b.0) {
                best = Some((sse, c));
            }
        }
        let current = node.sse(self.samples);
        best.filter(|(sse, _)| *sse < current * (1.0 - IMPROVEMENT)).map(|(_, t)| t)
    }

    fn run(&mut self, mut root: TreeNode, stream: &mut RandomStream, trace: &mut Vec<f64>) -> TreeNode {
        trace.push(root.sse(self.samples));
        loop {
            let mut paths = Vec::new();
            root.collect_paths(&mut Vec::new(), &mut paths);
            paths.shuffle(stream);
            let mut improved = false;
            for path in paths {
                let Some(node) = root.get(&path) else { continue };
                if let Some(replacement) = self.best_move(node, path.len()) {
                    *root.get_mut(&path).expect("path resolved above") = replacement;
                    trace.push(root.sse(self.samples));
                    improved = true;
                }
            }
            if !improved {
                return root;
            }
        }
    }
}

/// Node-wise local search from `init`. At every node (visited in random
/// order) it tries: re-splitting on every (feature, threshold) with greedily
/// regrown children, collapsing to a leaf, and promoting either child. A move
/// is taken only if the total SSE strictly drops; passes repeat until none
/// improves.
pub fn local_search(
    init: &RegressionTree,
    samples: &[TrainingSample],
    features: &[SplitFeature],
    cfg: &TreeConfig,
    stream: &mut RandomStream,
) -> Result<RegressionTree> {
    Ok(local_search_traced(init, samples, features, cfg, stream)?.0)
}

/// [`local_search`] also returning the SSE after the initial tree and after
/// every accepted move.
pub fn local_search_traced(
    init: &RegressionTree,
    samples: &[TrainingSample],
    features: &[SplitFeature],
    cfg: &TreeConfig,
    stream: &mut RandomStream,
) -> Result<(RegressionTree, Vec<f64>)> {
    check_features(samples, features)?;
    init.check(samples)?;
    let mut search = LocalSearch::new(samples, features.len(), *cfg);
    let mut trace = Vec::new();
    let root = search.run(init.root.clone(), stream, &mut trace);
    Ok((RegressionTree::new(root, *cfg), trace))
}

/// Fits the partitioning tree: the greedy tree and `restarts − 1` randomized
/// greedy trees (grown on a bootstrap subset with a shuffled feature order,
/// then re-routed and repaired on the full set), each refined by local
/// search. The lowest-SSE result wins, earlier restarts on ties. Fewer than
/// `2·min_leaf` samples give a single leaf.
pub fn fit_adaptive(
    samples: &[TrainingSample],
    features: &[SplitFeature],
    cfg: &TreeConfig,
    stream: &mut RandomStream,
) -> Result<RegressionTree> {
    check_features(samples, features)?;
    let all = natural_order(samples.len());
    if samples.len() < 2 * cfg.min_leaf {
        return Ok(RegressionTree::new(TreeNode::leaf(all, samples), *cfg));
    }
    let seeds: Vec<u64> = (0..cfg.restarts).map(|_| rand::RngCore::next_u64(stream)).collect();
    let mut search = LocalSearch::new(samples, features.len(), *cfg);
    let mut best: Option<(f64, TreeNode)> = None;
    for (r, seed) in seeds.into_iter().enumerate() {
        let mut restart_stream = RandomStream::new(StreamLineage::new(seed, r as u64, 0, 0));
        let init = if r == 0 {
            search.scanner.grow(all.clone(), cfg.max_depth, &search.features.clone())
        } else {
            let mut order = natural_order(features.len());
            order.shuffle(&mut restart_stream);
            let mut subset: Vec<usize> = (0..samples.len()).map(|_| restart_stream.index(samples.len())).collect();
            subset.sort_unstable();
            subset.dedup();
            let structure = search.scanner.grow(subset, cfg.max_depth, &order);
            structure.reroute(&all, samples).repair(cfg.min_leaf, samples)
        };
        let refined = search.run(init, &mut restart_stream, &mut Vec::new());
        let sse = refined.sse(samples);
        if best.as_ref().is_none_or(|b| sse < b.0) {
            best = Some((sse, refined));
        }
    }
    let (_, root) = best.expect("at least one restart");
    Ok(RegressionTree::new(root, *cfg))
}

/// Turns each leaf into a subregion of `parent`. Axis splits tighten the box
/// and hyperplane splits add `a·x < t` / `a·x >= t` cuts. Every leaf region
/// takes its first member sample as witness.
pub fn tree_to_partition(
    tree: &RegressionTree,
    parent: &Subregion,
    problem: &ProblemDefinition,
    samples: &[TrainingSample],
    features: &[SplitFeature],
    ids: &mut RegionIdAllocator,
) -> Result<Partition> {
    if tree.is_single_leaf() {
        return Ok(Partition::new(vec![parent.clone()], Some(parent.id())));
    }
    let mut scratch = RegionIdAllocator::new();
    let mut leaves: Vec<(Subregion, Vec<usize>)> = Vec::new();
    fn descend(
        node: &TreeNode,
        region: Subregion,
        problem: &ProblemDefinition,
        features: &[SplitFeature],
        scratch: &mut RegionIdAllocator,
        out: &mut Vec<(Subregion, Vec<usize>)>,
    ) -> Result<()> {
        match node {
            TreeNode::Leaf { members, .. } => {
                out.push((region, members.clone()));
                Ok(())
            }
            TreeNode::Branch { feature, threshold, left, right } => {
                let f = features
                    .get(*feature)
                    .ok_or_else(|| EsbbError::Internal(format!("tree references unknown feature {feature}")))?;
                let (l, r) = region.apply_cut(problem, f.coefficients(), *threshold, scratch)?;
                descend(left, l, problem, features, scratch, out)?;
                descend(right, r, problem, features, scratch, out)
            }
        }
    }
    descend(&tree.root, parent.clone(), problem, features, &mut scratch, &mut leaves)?;
    let mut members = Vec::with_capacity(leaves.len());
    for (region, leaf_members) in leaves {
        let witness = leaf_members
            .first()
            .map(|&i| samples[i].point.clone())
            .ok_or_else(|| EsbbError::Internal("tree leaf without member samples".into()))?;
        let mut sub = Subregion::new(
            ids.fresh(),
            Some(parent.id()),
            region.lower().to_vec(),
            region.upper().to_vec(),
            region.cuts().to_vec(),
        )?;
        sub.set_witness(problem, witness)?;
        members.push(sub);
    }
    Ok(Partition::new(members, Some(parent.id())))
}
