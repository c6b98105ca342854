//! Gradient-boosted regression trees with exact split accounting.
//!
//! Squared-error boosting: every round fits a regression tree to the current
//! residuals by exact greedy variance reduction and shrinks it by the learning
//! rate. Split candidates are midpoints between adjacent distinct values; on
//! equal gain the lower feature index and then the lower threshold win, so the
//! only sources of randomness are per-tree row and column subsampling.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Stream};
use crate::synthdata::Dataset;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub colsample: f64,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
            subsample: 0.8,
            colsample: 1.0,
            min_leaf: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig {
            seed,
            ..self.clone()
        }
    }

    /// True when neither rows nor columns are subsampled, i.e. the fit does
    /// not depend on the seed.
    pub fn is_deterministic(&self) -> bool {
        self.subsample >= 1.0 && self.colsample >= 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::param("rounds must be at least 1"));
        }
        if self.max_depth == 0 {
            return Err(Error::param("max_depth must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate must be positive and finite"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::param("subsample must lie in (0, 1]"));
        }
        if !(self.colsample > 0.0 && self.colsample <= 1.0) {
            return Err(Error::param("colsample must lie in (0, 1]"));
        }
        if self.min_leaf == 0 {
            return Err(Error::param("min_leaf must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] < threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        cover: usize,
    },
}

/// Flat tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, cover: usize) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value, cover }],
        }
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => idx = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn root_feature(&self) -> Option<usize> {
        match self.nodes.first() {
            Some(Node::Split { feature, .. }) => Some(*feature),
            _ => None,
        }
    }

    pub fn n_internal(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }

    /// Length of the longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], idx: usize) -> usize {
            match nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Sorted distinct split features.
    pub fn features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn uses_feature(&self, j: usize) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n, Node::Split { feature, .. } if *feature == j))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub tree: usize,
    pub depth: usize,
    pub feature: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    pub split_log: Vec<SplitRecord>,
    pub config: TrainConfig,
    pub seed: u64,
    /// Set when the training target was constant; no trees are grown.
    #[serde(default)]
    pub degenerate: bool,
}

impl Ensemble {
    pub fn predict(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::param(format!(
                "feature vector has length {} but the model expects {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: ArrayView1<f64>) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn predict_batch(&self, rows: ArrayView2<f64>) -> Result<Array1<f64>> {
        if rows.ncols() != self.n_features {
            return Err(Error::param(format!(
                "matrix has {} columns but the model expects {}",
                rows.ncols(),
                self.n_features
            )));
        }
        Ok(rows.rows().into_iter().map(|r| self.predict_unchecked(r)).collect())
    }

    pub fn training_mse(&self, data: &Dataset) -> Result<f64> {
        let pred = self.predict_batch(data.features.view())?;
        let n = pred.len() as f64;
        Ok(pred
            .iter()
            .zip(data.target.iter())
            .map(|(p, y)| (p - y).powi(2))
            .sum::<f64>()
            / n)
    }

    pub fn n_internal(&self) -> usize {
        self.trees.iter().map(Tree::n_internal).sum()
    }

    /// Number of trees containing at least one split on `j`.
    pub fn trees_using(&self, j: usize) -> usize {
        self.trees.iter().filter(|t| t.uses_feature(j)).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Per-feature count of internal nodes across all trees.
pub fn split_counts(ensemble: &Ensemble) -> Vec<usize> {
    let mut counts = vec![0; ensemble.n_features];
    for rec in &ensemble.split_log {
        counts[rec.feature] += 1;
    }
    counts
}

/// First-mover per group: the root feature of the earliest tree whose root
/// splits on a member of that group. Groups are numbered densely from 0.
pub fn first_mover(ensemble: &Ensemble, group_of: &[Option<usize>]) -> Vec<Option<usize>> {
    let n_groups = group_of.iter().flatten().max().map_or(0, |g| g + 1);
    let mut movers = vec![None; n_groups];
    for tree in &ensemble.trees {
        if let Some(f) = tree.root_feature() {
            if let Some(Some(g)) = group_of.get(f) {
                if movers[*g].is_none() {
                    movers[*g] = Some(f);
                }
            }
        }
    }
    movers
}

pub fn fit(dataset: &Dataset, config: &TrainConfig) -> Result<Ensemble> {
    config.validate()?;
    let n = dataset.n_samples();
    let p = dataset.n_features();
    if p == 0 {
        return Err(Error::param("dataset has no features"));
    }
    if n < 2 * config.min_leaf || n < 2 {
        return Err(Error::param(format!(
            "need at least {} samples for min_leaf = {}, got {n}",
            2 * config.min_leaf.max(1),
            config.min_leaf
        )));
    }
    if !dataset.is_finite() {
        return Err(Error::param("dataset contains non-finite values"));
    }

    let y = &dataset.target;
    let first = y[0];
    if y.iter().all(|&v| v == first) {
        return Ok(Ensemble {
            base_score: first,
            learning_rate: config.learning_rate,
            n_features: p,
            trees: Vec::new(),
            split_log: Vec::new(),
            config: config.clone(),
            seed: config.seed,
            degenerate: true,
        });
    }

    let base_score = y.sum() / n as f64;
    let mut residual: Vec<f64> = y.iter().map(|v| v - base_score).collect();
    let total_sse: f64 = residual.iter().map(|r| r * r).sum();
    let builder = TreeBuilder {
        data: dataset.features.view(),
        sorted: presort(dataset.features.view()),
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
        gain_floor: 1e-12 * total_sse,
    };

    let mut rng = rng::stream(config.seed, Stream::Training);
    let row_count = ((config.subsample * n as f64).floor() as usize).max(1);
    let col_count = ((config.colsample * p as f64).ceil() as usize).clamp(1, p);
    let all_rows: Vec<usize> = (0..n).collect();
    let all_cols: Vec<usize> = (0..p).collect();

    let mut trees = Vec::with_capacity(config.rounds);
    let mut split_log = Vec::new();
    for t in 0..config.rounds {
        let rows = if config.subsample < 1.0 {
            rng::sample_sorted(&mut rng, n, row_count)
        } else {
            all_rows.clone()
        };
        let cols = if config.colsample < 1.0 {
            rng::sample_sorted(&mut rng, p, col_count)
        } else {
            all_cols.clone()
        };
        let (tree, splits) = builder.build(&residual, &rows, &cols);
        split_log.extend(splits.into_iter().map(|(depth, feature)| SplitRecord {
            tree: t,
            depth,
            feature,
        }));
        for (i, r) in residual.iter_mut().enumerate() {
            *r -= config.learning_rate * tree.predict(dataset.features.row(i));
        }
        trees.push(tree);
    }

    Ok(Ensemble {
        base_score,
        learning_rate: config.learning_rate,
        n_features: p,
        trees,
        split_log,
        config: config.clone(),
        seed: config.seed,
        degenerate: false,
    })
}

/// Fits one model per seed in parallel; output order follows `seeds`.
pub fn fit_many(dataset: &Dataset, config: &TrainConfig, seeds: &[u64]) -> Result<Vec<Ensemble>> {
    seeds
        .par_iter()
        .map(|&s| fit(dataset, &config.with_seed(s)))
        .collect()
}

fn presort(data: ArrayView2<f64>) -> Vec<Vec<u32>> {
    (0..data.ncols())
        .map(|f| {
            let col = data.column(f);
            let mut idx: Vec<u32> = (0..data.nrows() as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

struct TreeBuilder<'a> {
    data: ArrayView2<'a, f64>,
    sorted: Vec<Vec<u32>>,
    max_depth: usize,
    min_leaf: usize,
    gain_floor: f64,
}

#[derive(Clone, Copy)]
struct NodeStats {
    count: usize,
    sum: f64,
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

#[derive(Clone, Copy)]
struct ScanState {
    count: usize,
    sum: f64,
    last: f64,
}

const UNASSIGNED: u32 = u32::MAX;

impl TreeBuilder<'_> {
    /// Grows one tree level by level. Returns the tree and its splits as
    /// `(depth, feature)` in creation order.
    fn build(&self, residual: &[f64], rows: &[usize], cols: &[usize]) -> (Tree, Vec<(usize, usize)>) {
        let n = self.data.nrows();
        let mut node_of = vec![UNASSIGNED; n];
        let mut root = NodeStats { count: 0, sum: 0.0 };
        for &i in rows {
            node_of[i] = 0;
            root.count += 1;
            root.sum += residual[i];
        }
        let mut nodes = vec![Node::Leaf {
            value: 0.0,
            cover: 0,
        }];
        let mut stats = vec![root];
        let mut frontier = vec![0usize];
        let mut splits = Vec::new();

        for depth in 0..self.max_depth {
            let mut slot = vec![usize::MAX; nodes.len()];
            let mut active = Vec::new();
            for &a in &frontier {
                if stats[a].count >= 2 * self.min_leaf {
                    slot[a] = active.len();
                    active.push(a);
                }
            }
            if active.is_empty() {
                break;
            }
            let mut best: Vec<Option<Candidate>> = vec![None; active.len()];
            let mut scan = vec![
                ScanState {
                    count: 0,
                    sum: 0.0,
                    last: 0.0,
                };
                active.len()
            ];
            for &f in cols {
                for s in scan.iter_mut() {
                    s.count = 0;
                    s.sum = 0.0;
                }
                let col = self.data.column(f);
                for &i in &self.sorted[f] {
                    let i = i as usize;
                    let a = node_of[i];
                    if a == UNASSIGNED {
                        continue;
                    }
                    let li = slot[a as usize];
                    if li == usize::MAX {
                        continue;
                    }
                    let v = col[i];
                    let st = &mut scan[li];
                    let tot = stats[a as usize];
                    if st.count >= self.min_leaf && v > st.last && tot.count - st.count >= self.min_leaf {
                        let right_count = tot.count - st.count;
                        let right_sum = tot.sum - st.sum;
                        let gain = st.sum * st.sum / st.count as f64
                            + right_sum * right_sum / right_count as f64
                            - tot.sum * tot.sum / tot.count as f64;
                        if best[li].is_none_or(|b| gain > b.gain) {
                            best[li] = Some(Candidate {
                                feature: f,
                                threshold: midpoint(st.last, v),
                                gain,
                            });
                        }
                    }
                    st.count += 1;
                    st.sum += residual[i];
                    st.last = v;
                }
            }

            let mut next = Vec::new();
            let mut children: Vec<Option<(usize, usize, usize, f64)>> = vec![None; active.len()];
            for (li, &a) in active.iter().enumerate() {
                let Some(c) = best[li] else { continue };
                if !(c.gain > self.gain_floor) {
                    continue;
                }
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf {
                    value: 0.0,
                    cover: 0,
                });
                nodes.push(Node::Leaf {
                    value: 0.0,
                    cover: 0,
                });
                stats.push(NodeStats { count: 0, sum: 0.0 });
                stats.push(NodeStats { count: 0, sum: 0.0 });
                nodes[a] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right,
                };
                splits.push((depth, c.feature));
                children[li] = Some((c.feature, left, right, c.threshold));
                next.push(left);
                next.push(right);
            }
            if next.is_empty() {
                break;
            }
            for &i in rows {
                let a = node_of[i] as usize;
                let li = match slot.get(a) {
                    Some(&li) if li != usize::MAX => li,
                    _ => continue,
                };
                if let Some((f, left, right, thr)) = children[li] {
                    let child = if self.data[[i, f]] < thr { left } else { right };
                    node_of[i] = child as u32;
                    stats[child].count += 1;
                    stats[child].sum += residual[i];
                }
            }
            frontier = next;
        }

        for (idx, node) in nodes.iter_mut().enumerate() {
            if let Node::Leaf { value, cover } = node {
                let s = stats[idx];
                *cover = s.count;
                *value = if s.count > 0 { s.sum / s.count as f64 } else { 0.0 };
            }
        }
        (Tree { nodes }, splits)
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo {
        mid
    } else {
        hi
    }
}
