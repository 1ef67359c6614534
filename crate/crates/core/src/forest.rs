//! Random forest classifier: bootstrap ensembles of Gini-split binary
//! trees with per-node feature subsampling and mean-decrease-in-Gini
//! importance.
//!
//! Trees are grown without a depth cap; a node becomes a leaf when it is
//! pure, smaller than `min_node_size`, or no split yields a positive
//! impurity decrease. Per-tree RNG substreams derive from (seed, tree
//! index), so serial and parallel fits produce identical forests.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::Dataset;
use crate::rng::substream;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForestError {
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("prediction rows have {got} columns, forest expects {expected}")]
    ColumnMismatch { expected: usize, got: usize },
    #[error("out-of-bag prediction needs the {expected} training rows, got {got}")]
    RowCountMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub ntree: usize,
    pub mtry: usize,
    pub min_node_size: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { ntree: 1000, mtry: 5, min_node_size: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
    Leaf { counts: [usize; 2] },
}

impl Node {
    fn leaf_counts(&self, row: &[f64]) -> [usize; 2] {
        match self {
            Node::Leaf { counts } => *counts,
            Node::Internal { feature, threshold, left, right } => {
                if row[*feature] <= *threshold {
                    left.leaf_counts(row)
                } else {
                    right.leaf_counts(row)
                }
            }
        }
    }

    /// Tree vote: majority class of the reached leaf, ties to class 1.
    pub fn vote(&self, row: &[f64]) -> u8 {
        let [c0, c1] = self.leaf_counts(row);
        u8::from(c1 >= c0)
    }
}

#[derive(Debug, Clone)]
pub struct ForestFit {
    pub trees: Vec<Node>,
    /// Per tree, true where the row was never drawn into the bootstrap.
    pub oob_masks: Vec<Vec<bool>>,
    /// Accumulated weighted Gini decrease per feature, divided by ntree.
    pub importance: Vec<f64>,
    pub n_features: usize,
    pub config: ForestConfig,
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

struct SplitSearch<'a> {
    rows: &'a [Vec<f64>],
    y: &'a [u8],
    mtry: usize,
    min_node_size: usize,
    n_total: usize,
    importance: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl SplitSearch<'_> {
    fn grow<R: Rng>(&mut self, indices: Vec<usize>, rng: &mut R) -> Node {
        let mut counts = [0usize; 2];
        for &i in &indices {
            counts[self.y[i] as usize] += 1;
        }
        if counts[0] == 0 || counts[1] == 0 || indices.len() < self.min_node_size {
            return Node::Leaf { counts };
        }

        let p = self.rows[0].len();
        let mut candidates: Vec<usize> = (0..p).collect();
        candidates.shuffle(rng);
        candidates.truncate(self.mtry.min(p));
        candidates.sort_unstable();

        let node_gini = gini(counts);
        let n_node = indices.len() as f64;
        let mut best: Option<BestSplit> = None;

        for &feature in &candidates {
            let mut order = indices.clone();
            order.sort_by(|&a, &b| self.rows[a][feature].partial_cmp(&self.rows[b][feature]).unwrap());
            let mut left_counts = [0usize; 2];
            for w in 0..order.len() - 1 {
                left_counts[self.y[order[w]] as usize] += 1;
                let v = self.rows[order[w]][feature];
                let next = self.rows[order[w + 1]][feature];
                if v == next {
                    continue;
                }
                let right_counts = [counts[0] - left_counts[0], counts[1] - left_counts[1]];
                let n_left = (w + 1) as f64;
                let n_right = n_node - n_left;
                let decrease =
                    node_gini - (n_left / n_node) * gini(left_counts) - (n_right / n_node) * gini(right_counts);
                if best.as_ref().map_or(decrease > 1e-12, |b| decrease > b.decrease + 1e-12) {
                    let threshold = 0.5 * (v + next);
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        decrease,
                        left: order[..=w].to_vec(),
                        right: order[w + 1..].to_vec(),
                    });
                }
            }
        }

        match best {
            None => Node::Leaf { counts },
            Some(split) => {
                // importance weight: node fraction of the tree's sample
                self.importance[split.feature] += (n_node / self.n_total as f64) * split.decrease;
                let left = Box::new(self.grow(split.left, rng));
                let right = Box::new(self.grow(split.right, rng));
                Node::Internal { feature: split.feature, threshold: split.threshold, left, right }
            }
        }
    }
}

/// Grows one tree on the given sample. Returns the tree and its per-feature
/// weighted Gini decrease (weights relative to `sample_indices.len()`).
pub fn fit_tree<R: Rng>(
    rows: &[Vec<f64>],
    y: &[u8],
    sample_indices: &[usize],
    mtry: usize,
    min_node_size: usize,
    rng: &mut R,
) -> (Node, Vec<f64>) {
    let p = rows.first().map_or(0, Vec::len);
    let mut search = SplitSearch {
        rows,
        y,
        mtry,
        min_node_size,
        n_total: sample_indices.len(),
        importance: vec![0.0; p],
    };
    let root = search.grow(sample_indices.to_vec(), rng);
    (root, search.importance)
}

/// Fits `ntree` trees on bootstrap samples of size n; deterministic given
/// the seed, identical under serial and parallel execution.
pub fn fit_forest(ds: &Dataset, cfg: &ForestConfig) -> Result<ForestFit, ForestError> {
    let (zeros, ones) = ds.class_counts();
    if zeros == 0 || ones == 0 {
        return Err(ForestError::DegenerateLabels);
    }
    let n = ds.n();
    let p = ds.p();
    let fitted: Vec<(Node, Vec<f64>, Vec<bool>)> = (0..cfg.ntree)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(cfg.seed, "forest/tree", t as u64);
            let mut oob = vec![true; n];
            let sample: Vec<usize> = (0..n)
                .map(|_| {
                    let i = rng.gen_range(0..n);
                    oob[i] = false;
                    i
                })
                .collect();
            let (tree, importance) = fit_tree(ds.rows(), ds.labels(), &sample, cfg.mtry, cfg.min_node_size, &mut rng);
            (tree, importance, oob)
        })
        .collect();

    let mut importance = vec![0.0; p];
    let mut trees = Vec::with_capacity(cfg.ntree);
    let mut oob_masks = Vec::with_capacity(cfg.ntree);
    for (tree, imp, oob) in fitted {
        for (acc, v) in importance.iter_mut().zip(imp) {
            *acc += v;
        }
        trees.push(tree);
        oob_masks.push(oob);
    }
    for v in &mut importance {
        *v /= cfg.ntree as f64;
    }
    Ok(ForestFit { trees, oob_masks, importance, n_features: p, config: cfg.clone() })
}

/// Probability = fraction of trees voting class 1; class = probability >=
/// threshold.
pub fn predict_forest(
    fit: &ForestFit,
    rows: &[Vec<f64>],
    threshold: f64,
) -> Result<(Vec<f64>, Vec<u8>), ForestError> {
    let width = rows.first().map_or(fit.n_features, Vec::len);
    if width != fit.n_features {
        return Err(ForestError::ColumnMismatch { expected: fit.n_features, got: width });
    }
    let probs: Vec<f64> = rows
        .iter()
        .map(|row| {
            let votes = fit.trees.iter().filter(|t| t.vote(row) == 1).count();
            votes as f64 / fit.trees.len() as f64
        })
        .collect();
    let classes = probs.iter().map(|&pr| u8::from(pr >= threshold)).collect();
    Ok((probs, classes))
}

/// Mean decrease in Gini impurity per feature; zero for never-split features.
pub fn gini_importance(fit: &ForestFit) -> &[f64] {
    &fit.importance
}

/// Out-of-bag predictions for the training rows, in training order: each
/// row is voted on only by trees whose bootstrap missed it. Rows that no
/// tree missed (vanishingly rare for ntree >= 100) fall back to the full
/// ensemble.
pub fn predict_oob(fit: &ForestFit, rows: &[Vec<f64>], threshold: f64) -> Result<(Vec<f64>, Vec<u8>), ForestError> {
    let n = fit.oob_masks.first().map_or(0, Vec::len);
    if rows.len() != n {
        return Err(ForestError::RowCountMismatch { expected: n, got: rows.len() });
    }
    let probs: Vec<f64> = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut votes = 0usize;
            let mut total = 0usize;
            for (tree, mask) in fit.trees.iter().zip(&fit.oob_masks) {
                if mask[i] {
                    total += 1;
                    votes += usize::from(tree.vote(row) == 1);
                }
            }
            if total == 0 {
                let all = fit.trees.iter().filter(|t| t.vote(row) == 1).count();
                all as f64 / fit.trees.len() as f64
            } else {
                votes as f64 / total as f64
            }
        })
        .collect();
    let classes = probs.iter().map(|&pr| u8::from(pr >= threshold)).collect();
    Ok((probs, classes))
}
