//! Gradient boosted regression trees for binary relevance.
//!
//! Each iteration fits a regression tree to the Bernoulli negative gradient
//! `y - sigmoid(F)`. Trees grow best-first: the leaf whose best split
//! removes the most squared error is split next, until the tree holds
//! `interaction_depth` splits or no split leaves both children with at least
//! `min_obs_per_node` instances. Leaves take a Newton step. The number of
//! trees used for prediction is the iteration with the best validation MAP.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::average_precision;

const NEWTON_EPS: f64 = 1e-12;
const LEAF_CLIP: f64 = 10.0;
/// Gains at or below this fraction of a leaf's residual energy are noise.
const MIN_RELATIVE_GAIN: f64 = 1e-10;
/// Below this many (instances x features) the split search stays on one thread.
const PARALLEL_SEARCH_MIN_WORK: usize = 1 << 15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub max_trees: usize,
    /// Number of splits per tree.
    pub interaction_depth: usize,
    pub min_obs_per_node: usize,
    pub shrinkage: f64,
    /// Seeds the train/validation split; boosting itself is deterministic.
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            max_trees: 3000,
            interaction_depth: 5,
            min_obs_per_node: 10,
            shrinkage: 0.01,
            seed: 0,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::InvalidConfig(format!("shrinkage {} not in (0, 1]", self.shrinkage)));
        }
        if self.interaction_depth == 0 {
            return Err(Error::InvalidConfig("interaction depth must be at least 1".into()));
        }
        if self.min_obs_per_node == 0 {
            return Err(Error::InvalidConfig("min observations per node must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Squared-error reduction of this split, for relative influence.
        #[serde(default)]
        gain: f64,
    },
    Leaf {
        value: f64,
    },
}

/// Rows with `row[feature] <= threshold` go left. Node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// Index of the leaf node `row` routes to.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    pub fn num_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub f0: f64,
    pub shrinkage: f64,
    pub best_iteration: usize,
    pub feature_names: Vec<String>,
    pub trees: Vec<RegressionTree>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli deviance `-2 Σ [y ln p + (1 - y) ln(1 - p)]` with `p = sigmoid(F)`.
pub fn deviance(labels: &[u8], raw_scores: &[f64]) -> f64 {
    labels
        .iter()
        .zip(raw_scores)
        .map(|(&y, &f)| 2.0 * if y == 1 { softplus(-f) } else { softplus(f) })
        .sum()
}

/// Initial log-odds `ln(p / (1 - p))` of the mean label.
pub fn init_score(labels: &[u8]) -> Result<f64> {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::DegenerateLabels);
    }
    let p = pos as f64 / labels.len() as f64;
    Ok((p / (1.0 - p)).ln())
}

pub fn negative_gradient(labels: &[u8], raw_scores: &[f64]) -> Vec<f64> {
    debug_assert_eq!(labels.len(), raw_scores.len());
    labels
        .iter()
        .zip(raw_scores)
        .map(|(&y, &f)| y as f64 - sigmoid(f))
        .collect()
}

/// Columns of a training matrix with each column's row order presorted.
struct Presorted {
    columns: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
    n_rows: usize,
}

impl Presorted {
    fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_features) {
            return Err(Error::LengthMismatch {
                expected: n_features,
                got: bad.len(),
            });
        }
        let columns: Vec<Vec<f64>> = (0..n_features)
            .map(|f| rows.iter().map(|r| r[f]).collect())
            .collect();
        let order = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..rows.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Ok(Presorted {
            columns,
            order,
            n_rows: rows.len(),
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
    left_count: usize,
}

struct OpenLeaf {
    node: usize,
    start: usize,
    end: usize,
    best: Option<SplitChoice>,
}

/// Threshold `t` with `lo <= t < hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

struct TreeGrower<'a> {
    data: &'a Presorted,
    residuals: &'a [f64],
    hessians: &'a [f64],
    config: &'a GbtConfig,
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
}

impl<'a> TreeGrower<'a> {
    fn new(data: &'a Presorted, residuals: &'a [f64], hessians: &'a [f64], config: &'a GbtConfig) -> Self {
        TreeGrower {
            data,
            residuals,
            hessians,
            config,
            order: data.order.clone(),
            goes_left: vec![false; data.n_rows],
            scratch: Vec::with_capacity(data.n_rows),
        }
    }

    fn best_on_feature(&self, feature: usize, start: usize, end: usize, total: f64) -> Option<SplitChoice> {
        let min_obs = self.config.min_obs_per_node;
        let n = end - start;
        let idx = &self.order[feature][start..end];
        let col = &self.data.columns[feature];
        let parent = total * total / n as f64;
        let mut left_sum = 0.0;
        let mut best: Option<SplitChoice> = None;
        for i in 0..n - 1 {
            left_sum += self.residuals[idx[i] as usize];
            let left_n = i + 1;
            let right_n = n - left_n;
            if right_n < min_obs {
                break;
            }
            if left_n < min_obs {
                continue;
            }
            let here = col[idx[i] as usize];
            let next = col[idx[i + 1] as usize];
            if here == next {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / left_n as f64 + right_sum * right_sum / right_n as f64 - parent;
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitChoice {
                    feature,
                    threshold: midpoint(here, next),
                    gain,
                    left_count: left_n,
                });
            }
        }
        best
    }

    fn best_split(&self, start: usize, end: usize) -> Option<SplitChoice> {
        let n = end - start;
        if n < 2 * self.config.min_obs_per_node {
            return None;
        }
        let reference = &self.order[0][start..end];
        let total: f64 = reference.iter().map(|&i| self.residuals[i as usize]).sum();
        let energy: f64 = reference.iter().map(|&i| self.residuals[i as usize].powi(2)).sum();
        let n_features = self.data.columns.len();

        let per_feature: Vec<Option<SplitChoice>> = if n * n_features >= PARALLEL_SEARCH_MIN_WORK {
            crate::exec::map_range(n_features, |f| self.best_on_feature(f, start, end, total))
        } else {
            (0..n_features).map(|f| self.best_on_feature(f, start, end, total)).collect()
        };
        // lowest feature index wins ties
        let best = per_feature
            .into_iter()
            .flatten()
            .fold(None, |acc: Option<SplitChoice>, c| match acc {
                Some(a) if a.gain >= c.gain => Some(a),
                _ => Some(c),
            })?;
        (best.gain > MIN_RELATIVE_GAIN * energy && best.gain > 0.0).then_some(best)
    }

    /// Reorders every column's segment so left rows precede right rows.
    fn partition(&mut self, leaf: &OpenLeaf, split: &SplitChoice) {
        let col = &self.data.columns[split.feature];
        for &i in &self.order[split.feature][leaf.start..leaf.end] {
            self.goes_left[i as usize] = col[i as usize] <= split.threshold;
        }
        for order in &mut self.order {
            let segment = &mut order[leaf.start..leaf.end];
            self.scratch.clear();
            self.scratch.extend(segment.iter().filter(|&&i| self.goes_left[i as usize]));
            let left = self.scratch.len();
            self.scratch.extend(segment.iter().filter(|&&i| !self.goes_left[i as usize]));
            debug_assert_eq!(left, split.left_count);
            segment.copy_from_slice(&self.scratch);
        }
    }

    fn newton_value(&self, start: usize, end: usize) -> f64 {
        let rows = &self.order[0][start..end];
        let num: f64 = rows.iter().map(|&i| self.residuals[i as usize]).sum();
        let den: f64 = rows.iter().map(|&i| self.hessians[i as usize]).sum();
        (num / (den + NEWTON_EPS)).clamp(-LEAF_CLIP, LEAF_CLIP)
    }

    fn grow(mut self) -> RegressionTree {
        let n = self.data.n_rows;
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut leaves = vec![OpenLeaf {
            node: 0,
            start: 0,
            end: n,
            best: self.best_split(0, n),
        }];
        for _ in 0..self.config.interaction_depth {
            // largest gain; earliest leaf on ties
            let pick = leaves
                .iter()
                .enumerate()
                .filter_map(|(i, l)| l.best.map(|b| (i, b.gain)))
                .fold(None, |acc: Option<(usize, f64)>, (i, g)| match acc {
                    Some((_, best)) if best >= g => acc,
                    _ => Some((i, g)),
                });
            let Some((at, _)) = pick else { break };
            let leaf = leaves.swap_remove(at);
            let split = leaf.best.expect("picked leaf has a split");
            self.partition(&leaf, &split);
            let mid = leaf.start + split.left_count;
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[leaf.node] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
                gain: split.gain,
            };
            let left_leaf = OpenLeaf {
                node: left,
                start: leaf.start,
                end: mid,
                best: self.best_split(leaf.start, mid),
            };
            let right_leaf = OpenLeaf {
                node: right,
                start: mid,
                end: leaf.end,
                best: self.best_split(mid, leaf.end),
            };
            // keep creation order stable for the tie rule
            leaves.push(left_leaf);
            leaves.push(right_leaf);
            leaves.sort_by_key(|l| l.node);
        }
        for leaf in &leaves {
            nodes[leaf.node] = Node::Leaf {
                value: self.newton_value(leaf.start, leaf.end),
            };
        }
        RegressionTree { nodes }
    }
}

fn check_min_instances(n: usize, config: &GbtConfig) -> Result<()> {
    let need = 2 * config.min_obs_per_node;
    if n < need {
        return Err(Error::TooFewInstances { need, have: n });
    }
    Ok(())
}

/// Fits one tree to `residuals`; leaf values are Newton steps using the
/// Bernoulli curvature `p (1 - p)` at `raw_scores`.
pub fn fit_tree(features: &[Vec<f64>], residuals: &[f64], raw_scores: &[f64], config: &GbtConfig) -> Result<RegressionTree> {
    config.validate()?;
    check_min_instances(features.len(), config)?;
    if residuals.len() != features.len() || raw_scores.len() != features.len() {
        return Err(Error::LengthMismatch {
            expected: features.len(),
            got: residuals.len().min(raw_scores.len()),
        });
    }
    let data = Presorted::new(features)?;
    let hessians: Vec<f64> = raw_scores
        .iter()
        .map(|&f| {
            let p = sigmoid(f);
            p * (1.0 - p)
        })
        .collect();
    Ok(TreeGrower::new(&data, residuals, &hessians, config).grow())
}

/// One validation query: candidate rows in tie-break order.
#[derive(Clone, Debug)]
pub struct RankingGroup {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    /// Relevant items for the query, including any outside the candidates.
    pub num_relevant: usize,
}

impl RankingGroup {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Self {
        let num_relevant = labels.iter().filter(|&&y| y == 1).count();
        RankingGroup {
            rows,
            labels,
            num_relevant,
        }
    }
}

/// Average precision of `labels` ranked by `scores` descending; equal scores
/// keep their given order.
pub fn ranked_average_precision(scores: &[f64], labels: &[u8], num_relevant: usize) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let flags: Vec<bool> = order.iter().map(|&i| labels[i] == 1).collect();
    average_precision(&flags, num_relevant)
}

/// Mean average precision over groups with at least one relevant item.
pub fn groups_map(groups: &[RankingGroup], scores: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for (g, s) in groups.iter().zip(scores) {
        if g.num_relevant > 0 {
            sum += ranked_average_precision(s, &g.labels, g.num_relevant);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// 1-based iteration with the highest value; the earliest wins ties.
/// Zero when nothing was recorded.
pub fn best_iteration(validation_map: &[f64]) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, &m) in validation_map.iter().enumerate() {
        if m > best_value {
            best_value = m;
            best = i + 1;
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: GbtModel,
    /// Validation MAP after iteration `i + 1`.
    pub validation_map: Vec<f64>,
    /// Training deviance after iteration `i + 1`.
    pub train_deviance: Vec<f64>,
}

pub fn train(
    rows: &[Vec<f64>],
    labels: &[u8],
    validation: &[RankingGroup],
    feature_names: Vec<String>,
    config: &GbtConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if rows.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: rows.len(),
            got: labels.len(),
        });
    }
    let f0 = init_score(labels)?;
    if !validation.iter().any(|g| g.num_relevant > 0) {
        return Err(Error::InvalidConfig("validation set has no query with a relevant item".into()));
    }
    let n_features = feature_names.len();
    for row in rows.iter().chain(validation.iter().flat_map(|g| g.rows.iter())) {
        if row.len() != n_features {
            return Err(Error::LengthMismatch {
                expected: n_features,
                got: row.len(),
            });
        }
    }
    if config.max_trees > 0 {
        check_min_instances(rows.len(), config)?;
    }

    let data = Presorted::new(rows)?;
    let mut raw = vec![f0; rows.len()];
    let mut valid_raw: Vec<Vec<f64>> = validation.iter().map(|g| vec![f0; g.rows.len()]).collect();
    let mut trees = Vec::with_capacity(config.max_trees);
    let mut validation_map = Vec::with_capacity(config.max_trees);
    let mut train_deviance = Vec::with_capacity(config.max_trees);
    let mut residuals = vec![0.0; rows.len()];
    let mut hessians = vec![0.0; rows.len()];

    for iteration in 0..config.max_trees {
        for i in 0..rows.len() {
            let p = sigmoid(raw[i]);
            residuals[i] = labels[i] as f64 - p;
            hessians[i] = p * (1.0 - p);
        }
        let tree = TreeGrower::new(&data, &residuals, &hessians, config).grow();
        for (score, row) in raw.iter_mut().zip(rows) {
            *score += config.shrinkage * tree.predict(row);
        }
        for (scores, group) in valid_raw.iter_mut().zip(validation) {
            for (score, row) in scores.iter_mut().zip(&group.rows) {
                *score += config.shrinkage * tree.predict(row);
            }
        }
        validation_map.push(groups_map(validation, &valid_raw));
        train_deviance.push(deviance(labels, &raw));
        trees.push(tree);
        if (iteration + 1) % 500 == 0 {
            log::debug!(
                "iteration {}: train deviance {:.4}, validation MAP {:.4}",
                iteration + 1,
                train_deviance[iteration],
                validation_map[iteration]
            );
        }
    }

    let best = best_iteration(&validation_map);
    Ok(TrainOutcome {
        model: GbtModel {
            f0,
            shrinkage: config.shrinkage,
            best_iteration: best,
            feature_names,
            trees,
        },
        validation_map,
        train_deviance,
    })
}

impl GbtModel {
    fn check(&self, row: &[f64], n_trees: usize) -> Result<()> {
        if row.len() != self.feature_names.len() {
            return Err(Error::LengthMismatch {
                expected: self.feature_names.len(),
                got: row.len(),
            });
        }
        if n_trees > self.trees.len() {
            return Err(Error::TooManyTrees {
                requested: n_trees,
                available: self.trees.len(),
            });
        }
        Ok(())
    }

    /// Log-odds from the first `n_trees` trees (default: `best_iteration`).
    pub fn raw_score(&self, row: &[f64], n_trees: Option<usize>) -> Result<f64> {
        let n = n_trees.unwrap_or(self.best_iteration);
        self.check(row, n)?;
        let sum: f64 = self.trees[..n].iter().map(|t| t.predict(row)).sum();
        Ok(self.f0 + self.shrinkage * sum)
    }

    pub fn predict(&self, row: &[f64], n_trees: Option<usize>) -> Result<f64> {
        self.raw_score(row, n_trees).map(sigmoid)
    }

    /// Share of total split gain per feature, in percent, over the first
    /// `n_trees` trees (default: `best_iteration`). Sums to 100 unless no
    /// split was made.
    pub fn relative_influence(&self, n_trees: Option<usize>) -> Vec<(String, f64)> {
        let n = n_trees.unwrap_or(self.best_iteration).min(self.trees.len());
        let mut totals = vec![0.0; self.feature_names.len()];
        for tree in &self.trees[..n] {
            for node in &tree.nodes {
                if let Node::Split { feature, gain, .. } = node {
                    totals[*feature] += gain.max(0.0);
                }
            }
        }
        let sum: f64 = totals.iter().sum();
        self.feature_names
            .iter()
            .cloned()
            .zip(totals.into_iter().map(|g| if sum > 0.0 { 100.0 * g / sum } else { 0.0 }))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: GbtModel = serde_json::from_str(text)?;
        if model.best_iteration > model.trees.len() {
            return Err(Error::TooManyTrees {
                requested: model.best_iteration,
                available: model.trees.len(),
            });
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GbtModel::from_json(&text)
    }
}

/// Convenience for callers that already hold a relative-influence list.
pub fn top_influences(influence: &[(String, f64)], k: usize) -> Vec<(String, f64)> {
    let mut sorted = influence.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    sorted.truncate(k);
    sorted
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_config() -> GbtConfig {
        GbtConfig {
            max_trees: 50,
            interaction_depth: 3,
            min_obs_per_node: 2,
            shrinkage: 0.1,
            seed: 1,
        }
    }

    #[test]
    fn defaults() {
        let c = GbtConfig::default();
        assert_eq!((c.max_trees, c.interaction_depth, c.min_obs_per_node), (3000, 5, 10));
        assert_eq!(c.shrinkage, 0.01);
        assert!(GbtConfig { shrinkage: 0.0, ..c.clone() }.validate().is_err());
        assert!(GbtConfig { shrinkage: 1.5, ..c.clone() }.validate().is_err());
        assert!(GbtConfig { interaction_depth: 0, ..c.clone() }.validate().is_err());
        assert!(GbtConfig { min_obs_per_node: 0, ..c }.validate().is_err());
    }

    #[test]
    fn init_score_examples() {
        assert_eq!(init_score(&[0, 1]).unwrap(), 0.0);
        let mut labels = vec![0u8; 2600];
        labels[..148].fill(1);
        assert_relative_eq!(init_score(&labels).unwrap(), (148.0f64 / 2452.0).ln(), epsilon = 1e-12);
        assert!((init_score(&labels).unwrap() + 2.80745).abs() < 1e-4);
        let mut nine = vec![1u8; 9];
        nine.push(0);
        assert_relative_eq!(init_score(&nine).unwrap(), 9f64.ln(), epsilon = 1e-12);
        assert!(matches!(init_score(&[1, 1]), Err(Error::DegenerateLabels)));
        assert!(matches!(init_score(&[]), Err(Error::DegenerateLabels)));
    }

    #[test]
    fn gradient_examples() {
        let g = negative_gradient(&[1, 0, 1], &[0.0, 0.0, 2.0]);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[1], -0.5);
        assert_relative_eq!(g[2], 1.0 - 1.0 / (1.0 + (-2f64).exp()), epsilon = 1e-15);
        assert!((g[2] - 0.11920).abs() < 1e-5);
    }

    #[test]
    fn separable_one_dimensional_split() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 - 10.0]).collect();
        let labels: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let raw = vec![0.0; 20];
        let residuals = negative_gradient(&labels, &raw);
        let cfg = GbtConfig {
            interaction_depth: 1,
            min_obs_per_node: 2,
            ..GbtConfig::default()
        };
        let tree = fit_tree(&rows, &residuals, &raw, &cfg).unwrap();
        assert_eq!(tree.num_splits(), 1);
        match tree.nodes[0] {
            Node::Split { feature, threshold, left, right, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, -0.5);
                assert!(tree.predict(&rows[0]) < 0.0);
                assert!(tree.predict(&rows[19]) > 0.0);
                assert_ne!(left, right);
            }
            Node::Leaf { .. } => panic!("expected a split"),
        }
    }

    #[test]
    fn constant_residuals_give_a_single_leaf() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
        let tree = fit_tree(&rows, &[0.25; 30], &[0.0; 30], &GbtConfig::default()).unwrap();
        assert_eq!(tree.nodes.len(), 1);
    }

    #[test]
    fn pure_leaves_hit_the_clip() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let labels: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        // nearly certain predictions: tiny curvature, residuals not tiny enough
        let raw: Vec<f64> = labels.iter().map(|&y| if y == 1 { -30.0 } else { 30.0 }).collect();
        let residuals = negative_gradient(&labels, &raw);
        let cfg = GbtConfig {
            interaction_depth: 1,
            min_obs_per_node: 2,
            ..GbtConfig::default()
        };
        let tree = fit_tree(&rows, &residuals, &raw, &cfg).unwrap();
        assert_eq!(tree.predict(&rows[0]), -10.0);
        assert_eq!(tree.predict(&rows[19]), 10.0);
    }

    #[test]
    fn too_few_instances() {
        let rows = vec![vec![0.0]; 19];
        assert!(matches!(
            fit_tree(&rows, &[0.0; 19], &[0.0; 19], &GbtConfig::default()),
            Err(Error::TooFewInstances { need: 20, have: 19 })
        ));
    }

    #[test]
    fn thresholds_split_adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let t = midpoint(a, b);
        assert!(a <= t && t < b);
    }

    #[test]
    fn best_iteration_tie_rule() {
        assert_eq!(best_iteration(&[0.2, 0.5, 0.5, 0.4]), 2);
        assert_eq!(best_iteration(&[]), 0);
    }

    fn toy_problem() -> (Vec<Vec<f64>>, Vec<u8>, Vec<RankingGroup>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let x = (i % 12) as f64;
            let z = ((i * 5) % 7) as f64;
            rows.push(vec![x, z]);
            labels.push(u8::from(x > 6.0 || (z == 3.0 && x > 2.0)));
        }
        let group = RankingGroup::new(
            (0..12).map(|i| vec![i as f64, (i % 7) as f64]).collect(),
            (0..12).map(|i| u8::from(i > 6)).collect(),
        );
        (rows, labels, vec![group])
    }

    #[test]
    fn zero_trees_is_the_prior() {
        let (rows, labels, groups) = toy_problem();
        let cfg = GbtConfig {
            max_trees: 0,
            ..small_config()
        };
        let out = train(&rows, &labels, &groups, vec!["x".into(), "z".into()], &cfg).unwrap();
        assert_eq!(out.model.best_iteration, 0);
        assert!(out.model.trees.is_empty());
        let p = out.model.predict(&rows[0], None).unwrap();
        assert_relative_eq!(p, sigmoid(out.model.f0), epsilon = 1e-15);
    }

    #[test]
    fn training_is_deterministic_and_respects_tree_limits() {
        let (rows, labels, groups) = toy_problem();
        let cfg = small_config();
        let names = vec!["x".to_string(), "z".to_string()];
        let a = train(&rows, &labels, &groups, names.clone(), &cfg).unwrap();
        let b = train(&rows, &labels, &groups, names, &cfg).unwrap();
        assert_eq!(a.model.to_json().unwrap(), b.model.to_json().unwrap());
        for tree in &a.model.trees {
            assert!(tree.num_splits() <= cfg.interaction_depth);
            let mut counts = vec![0usize; tree.nodes.len()];
            for row in &rows {
                counts[tree.leaf_index(row)] += 1;
            }
            for (i, node) in tree.nodes.iter().enumerate() {
                if matches!(node, Node::Leaf { .. }) {
                    assert!(counts[i] >= cfg.min_obs_per_node);
                }
            }
        }
        assert!(a.train_deviance.windows(2).take(20).all(|w| w[1] < w[0]));
        let best = a.model.best_iteration;
        assert!(best >= 1);
        let best_map = a.validation_map[best - 1];
        assert!(a.validation_map.iter().all(|&m| m <= best_map));
    }

    #[test]
    fn predict_examples() {
        let model = GbtModel {
            f0: 0.0,
            shrinkage: 0.01,
            best_iteration: 1,
            feature_names: vec!["x".into()],
            trees: vec![RegressionTree::leaf(1.0)],
        };
        let p = model.predict(&[3.0], None).unwrap();
        assert_relative_eq!(p, sigmoid(0.01), epsilon = 1e-15);
        assert!((p - 0.50250).abs() < 1e-5);
        assert_eq!(model.predict(&[3.0], Some(0)).unwrap(), 0.5);
        assert!(p > model.predict(&[3.0], Some(0)).unwrap());
        assert!(matches!(model.predict(&[1.0, 2.0], None), Err(Error::LengthMismatch { .. })));
        assert!(matches!(model.predict(&[1.0], Some(2)), Err(Error::TooManyTrees { .. })));
    }

    #[test]
    fn relative_influence_examples() {
        let split = |feature, gain| RegressionTree {
            nodes: vec![
                Node::Split {
                    feature,
                    threshold: 0.0,
                    left: 1,
                    right: 2,
                    gain,
                },
                Node::Leaf { value: -1.0 },
                Node::Leaf { value: 1.0 },
            ],
        };
        let mut model = GbtModel {
            f0: 0.0,
            shrinkage: 0.1,
            best_iteration: 2,
            feature_names: vec!["a".into(), "b".into(), "c".into()],
            trees: vec![split(1, 3.0), split(1, 2.0)],
        };
        let ri = model.relative_influence(None);
        assert_eq!(ri[1], ("b".to_string(), 100.0));
        assert_eq!(ri[0].1, 0.0);
        model.trees = vec![split(0, 2.5), split(2, 2.5)];
        let ri = model.relative_influence(None);
        assert_eq!(ri[0].1, 50.0);
        assert_eq!(ri[2].1, 50.0);
        assert_eq!(top_influences(&ri, 1)[0].0, "a");
    }

    #[test]
    fn json_roundtrip_preserves_predictions() {
        let (rows, labels, groups) = toy_problem();
        let out = train(&rows, &labels, &groups, vec!["x".into(), "z".into()], &small_config()).unwrap();
        let text = out.model.to_json().unwrap();
        let back = GbtModel::from_json(&text).unwrap();
        assert_eq!(back, out.model);
        for row in &rows {
            let a = out.model.raw_score(row, Some(out.model.trees.len())).unwrap();
            let b = back.raw_score(row, Some(back.trees.len())).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["f0", "shrinkage", "best_iteration", "feature_names", "trees"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}
