use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::argmax;
use crate::error::{invalid, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        let m = match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (d as f64).log2().floor() as usize,
            MaxFeatures::All => d,
        };
        m.clamp(1, d.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
            min_samples_split: 2,
            min_samples_leaf: 1,
            bootstrap: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(Vec<f64>),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART classification tree with Gini splits over a random feature subset.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

struct Best {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl DecisionTree {
    /// Grows a tree on the rows listed in `rows` (repeats allowed).
    ///
    /// At each node features are visited in a fresh random order until
    /// `max_features` non-constant ones have been scored.
    pub fn fit(
        x: &Matrix,
        y: &[usize],
        rows: &[usize],
        n_classes: usize,
        params: &ForestParams,
        rng: &mut seed::Rng,
    ) -> Self {
        let d = x.cols();
        let mtry = params.max_features.resolve(d);
        let min_leaf = params.min_samples_leaf.max(1);
        let mut nodes = Vec::new();
        // (slot, rows, depth)
        let mut stack = vec![(0usize, rows.to_vec(), 0usize)];
        nodes.push(Node::Leaf(Vec::new()));
        while let Some((slot, idx, depth)) = stack.pop() {
            let n = idx.len();
            let mut counts = vec![0usize; n_classes];
            for &i in &idx {
                counts[y[i]] += 1;
            }
            let dist: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            if pure
                || params.max_depth.is_some_and(|m| depth >= m)
                || n < params.min_samples_split.max(2)
                || n < 2 * min_leaf
            {
                nodes[slot] = Node::Leaf(dist);
                continue;
            }
            let mut order: Vec<usize> = (0..d).collect();
            let mut visited = 0;
            let mut best: Option<Best> = None;
            let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
            for pos in 0..d {
                if visited >= mtry {
                    break;
                }
                let pick = rng.random_range(pos..d);
                order.swap(pos, pick);
                let f = order[pos];
                pairs.clear();
                pairs.extend(idx.iter().map(|&i| (x.get(i, f), y[i])));
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                if pairs[0].0 == pairs[n - 1].0 {
                    continue;
                }
                visited += 1;
                let mut left = vec![0usize; n_classes];
                let mut right = counts.clone();
                let mut left_sq = 0.0;
                let mut right_sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
                for p in 0..n - 1 {
                    let c = pairs[p].1;
                    left_sq += (2 * left[c] + 1) as f64;
                    right_sq -= (2 * right[c] - 1) as f64;
                    left[c] += 1;
                    right[c] -= 1;
                    let (nl, nr) = (p + 1, n - p - 1);
                    if pairs[p].0 == pairs[p + 1].0 || nl < min_leaf || nr < min_leaf {
                        continue;
                    }
                    // n · weighted child Gini impurity
                    let score = nl as f64 - left_sq / nl as f64 + nr as f64 - right_sq / nr as f64;
                    if best.as_ref().is_none_or(|b| score < b.score) {
                        let (a, b) = (pairs[p].0, pairs[p + 1].0);
                        let mut t = a + (b - a) / 2.0;
                        if t >= b {
                            t = a;
                        }
                        best = Some(Best {
                            score,
                            feature: f,
                            threshold: t,
                        });
                    }
                }
            }
            let Some(b) = best else {
                nodes[slot] = Node::Leaf(dist);
                continue;
            };
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x.get(i, b.feature) <= b.threshold);
            let (ls, rs) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf(Vec::new()));
            nodes.push(Node::Leaf(Vec::new()));
            nodes[slot] = Node::Split {
                feature: b.feature,
                threshold: b.threshold,
                left: ls,
                right: rs,
            };
            stack.push((rs, r, depth + 1));
            stack.push((ls, l, depth + 1));
        }
        Self { nodes }
    }

    /// Class distribution of the leaf reached by `row`.
    pub fn leaf(&self, row: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(p) => return p,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        argmax(self.leaf(row))
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

/// Bagged decision trees; the score of a class is its share of tree votes.
#[derive(Clone, Debug)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    n_classes: usize,
}

/// Bootstrap (or identity) row sample for tree `t`, plus the generator
/// that grows it.
pub(crate) fn tree_rng_and_rows(seed_: u64, t: usize, n: usize, bootstrap: bool) -> (seed::Rng, Vec<usize>) {
    let mut rng = seed::rng(seed::derive(seed_, t as u64));
    let rows = if bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    (rng, rows)
}

impl RandomForest {
    pub fn fit(params: &ForestParams, x: &Matrix, y: &[usize], n_classes: usize, seed_: u64) -> Result<Self> {
        if params.trees == 0 {
            return Err(invalid("random forest needs at least one tree"));
        }
        let trees = (0..params.trees)
            .into_par_iter()
            .map(|t| {
                let (mut rng, rows) = tree_rng_and_rows(seed_, t, x.rows(), params.bootstrap);
                DecisionTree::fit(x, y, &rows, n_classes, params, &mut rng)
            })
            .collect();
        Ok(Self { trees, n_classes })
    }

    pub fn scores(&self, x: &Matrix) -> Matrix {
        let share = 1.0 / self.trees.len() as f64;
        let rows: Vec<Vec<f64>> = (0..x.rows())
            .into_par_iter()
            .map(|i| {
                let mut votes = vec![0usize; self.n_classes];
                for t in &self.trees {
                    votes[t.predict_row(x.row(i))] += 1;
                }
                votes.iter().map(|&v| v as f64 * share).collect()
            })
            .collect();
        Matrix::from_rows(&rows).expect("rectangular")
    }
}
