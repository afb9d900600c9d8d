use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::softmax;
use crate::error::{invalid, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtParams {
    pub rounds: usize,
    pub leaves: usize,
    pub learning_rate: f64,
    pub max_bins: usize,
    pub min_data_in_leaf: usize,
    pub min_sum_hessian: f64,
    pub lambda_l2: f64,
    pub min_gain: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            rounds: 100,
            leaves: 31,
            learning_rate: 0.1,
            max_bins: 255,
            min_data_in_leaf: 20,
            min_sum_hessian: 1e-3,
            lambda_l2: 0.0,
            min_gain: 0.0,
        }
    }
}

/// Per-feature bin upper bounds; the last bound is `+∞`.
fn bin_bounds(column: &mut [f64], max_bins: usize) -> Vec<f64> {
    column.sort_by(f64::total_cmp);
    let mut distinct: Vec<f64> = column.to_vec();
    distinct.dedup();
    let mid = |a: f64, b: f64| {
        let m = a + (b - a) / 2.0;
        if m >= b {
            a
        } else {
            m
        }
    };
    let mut bounds = Vec::new();
    if distinct.len() <= max_bins {
        bounds.extend(distinct.windows(2).map(|w| mid(w[0], w[1])));
    } else {
        let n = column.len();
        for b in 1..max_bins {
            let q = column[(b * n) / max_bins];
            let at = distinct.partition_point(|&v| v < q);
            if at + 1 < distinct.len() {
                let bound = mid(distinct[at], distinct[at + 1]);
                if bounds.last().is_none_or(|&l| bound > l) {
                    bounds.push(bound);
                }
            }
        }
    }
    bounds.push(f64::INFINITY);
    bounds
}

fn bin_of(bounds: &[f64], v: f64) -> u8 {
    bounds.partition_point(|&u| u < v) as u8
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

struct Binned {
    n: usize,
    bounds: Vec<Vec<f64>>,
    offsets: Vec<usize>,
    total_bins: usize,
    /// Column-major bin codes.
    codes: Vec<u8>,
}

impl Binned {
    fn new(x: &Matrix, max_bins: usize) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let bounds: Vec<Vec<f64>> = (0..d)
            .into_par_iter()
            .map(|f| bin_bounds(&mut x.column(f).collect::<Vec<_>>(), max_bins))
            .collect();
        let mut offsets = Vec::with_capacity(d);
        let mut total_bins = 0;
        for b in &bounds {
            offsets.push(total_bins);
            total_bins += b.len();
        }
        let codes = (0..d)
            .into_par_iter()
            .flat_map_iter(|f| {
                let b = &bounds[f];
                (0..n).map(move |i| bin_of(b, x.get(i, f)))
            })
            .collect();
        Self {
            n,
            bounds,
            offsets,
            total_bins,
            codes,
        }
    }

    fn code(&self, f: usize, i: usize) -> usize {
        self.codes[f * self.n + i] as usize
    }
}

#[derive(Clone)]
struct Hist {
    g: Vec<f64>,
    h: Vec<f64>,
    c: Vec<u32>,
}

impl Hist {
    fn build(b: &Binned, rows: &[u32], grad: &[f64], hess: &[f64]) -> Self {
        let mut hist = Hist {
            g: vec![0.0; b.total_bins],
            h: vec![0.0; b.total_bins],
            c: vec![0; b.total_bins],
        };
        for f in 0..b.bounds.len() {
            let off = b.offsets[f];
            let col = &b.codes[f * b.n..(f + 1) * b.n];
            for &i in rows {
                let i = i as usize;
                let k = off + col[i] as usize;
                hist.g[k] += grad[i];
                hist.h[k] += hess[i];
                hist.c[k] += 1;
            }
        }
        hist
    }

    fn minus(&self, other: &Hist) -> Hist {
        Hist {
            g: self.g.iter().zip(&other.g).map(|(a, b)| a - b).collect(),
            h: self.h.iter().zip(&other.h).map(|(a, b)| a - b).collect(),
            c: self.c.iter().zip(&other.c).map(|(a, b)| a - b).collect(),
        }
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    bin: usize,
}

struct Leaf {
    slot: usize,
    rows: Vec<u32>,
    hist: Hist,
    g: f64,
    h: f64,
    best: Option<Candidate>,
}

fn best_split(b: &Binned, leaf_hist: &Hist, g: f64, h: f64, n: usize, p: &GbdtParams) -> Option<Candidate> {
    let lambda = p.lambda_l2;
    let parent = g * g / (h + lambda);
    let mut best: Option<Candidate> = None;
    for f in 0..b.bounds.len() {
        let off = b.offsets[f];
        let nb = b.bounds[f].len();
        let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
        for bin in 0..nb.saturating_sub(1) {
            gl += leaf_hist.g[off + bin];
            hl += leaf_hist.h[off + bin];
            cl += leaf_hist.c[off + bin] as usize;
            let (gr, hr, cr) = (g - gl, h - hl, n - cl);
            if cl < p.min_data_in_leaf || cr < p.min_data_in_leaf {
                continue;
            }
            if hl < p.min_sum_hessian || hr < p.min_sum_hessian {
                continue;
            }
            let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
            if gain > p.min_gain && best.is_none_or(|c| gain > c.gain) {
                best = Some(Candidate { gain, feature: f, bin });
            }
        }
    }
    best
}

/// Grows one leaf-wise tree; returns it with the leaf value of every row.
/// A fitted tree plus, per leaf, its member rows and output value.
type GrownTree = (RegressionTree, Vec<(Vec<u32>, f64)>);

fn grow(b: &Binned, grad: &[f64], hess: &[f64], p: &GbdtParams, scale: f64) -> GrownTree {
    let rows: Vec<u32> = (0..b.n as u32).collect();
    let hist = Hist::build(b, &rows, grad, hess);
    let (g, h) = (grad.iter().sum::<f64>(), hess.iter().sum::<f64>());
    let best = best_split(b, &hist, g, h, rows.len(), p);
    let mut nodes = vec![Node::Leaf(0.0)];
    let mut leaves = vec![Leaf {
        slot: 0,
        rows,
        hist,
        g,
        h,
        best,
    }];
    while leaves.len() < p.leaves.max(1) {
        let mut pick: Option<usize> = None;
        for (i, l) in leaves.iter().enumerate() {
            if let Some(c) = l.best {
                if pick.is_none_or(|j| c.gain > leaves[j].best.unwrap().gain) {
                    pick = Some(i);
                }
            }
        }
        let Some(i) = pick else { break };
        let leaf = leaves.remove(i);
        let c = leaf.best.unwrap();
        let (left, right): (Vec<u32>, Vec<u32>) =
            leaf.rows.iter().partition(|&&r| b.code(c.feature, r as usize) <= c.bin);
        let (small, large_is_left) = if left.len() <= right.len() {
            (&left, false)
        } else {
            (&right, true)
        };
        let small_hist = Hist::build(b, small, grad, hess);
        let large_hist = leaf.hist.minus(&small_hist);
        let (lh, rh) = if large_is_left {
            (large_hist, small_hist)
        } else {
            (small_hist, large_hist)
        };
        let sum = |rows: &[u32], v: &[f64]| rows.iter().map(|&r| v[r as usize]).sum::<f64>();
        let (lg, lhs) = (sum(&left, grad), sum(&left, hess));
        let (rg, rhs) = (leaf.g - lg, leaf.h - lhs);
        let (ls, rs) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf(0.0));
        nodes.push(Node::Leaf(0.0));
        nodes[leaf.slot] = Node::Split {
            feature: c.feature,
            threshold: b.bounds[c.feature][c.bin],
            left: ls,
            right: rs,
        };
        let lbest = best_split(b, &lh, lg, lhs, left.len(), p);
        let rbest = best_split(b, &rh, rg, rhs, right.len(), p);
        // children take the parent's place so gain ties resolve by position
        leaves.insert(
            i,
            Leaf {
                slot: rs,
                rows: right,
                hist: rh,
                g: rg,
                h: rhs,
                best: rbest,
            },
        );
        leaves.insert(
            i,
            Leaf {
                slot: ls,
                rows: left,
                hist: lh,
                g: lg,
                h: lhs,
                best: lbest,
            },
        );
    }
    let mut assignment = Vec::with_capacity(leaves.len());
    for l in leaves {
        let value = -scale * l.g / (l.h + p.lambda_l2).max(f64::MIN_POSITIVE);
        nodes[l.slot] = Node::Leaf(value);
        assignment.push((l.rows, value));
    }
    (RegressionTree { nodes }, assignment)
}

/// Histogram gradient-boosted trees on the softmax cross-entropy.
#[derive(Clone, Debug)]
pub struct Gbdt {
    /// Round-0 raw scores: log class priors.
    pub init: Vec<f64>,
    /// `trees[round][class]`.
    trees: Vec<Vec<RegressionTree>>,
}

impl Gbdt {
    pub fn fit(p: &GbdtParams, x: &Matrix, y: &[usize], n_classes: usize) -> Result<Self> {
        if p.max_bins < 2 || p.max_bins > 255 {
            return Err(invalid("gbdt max_bins must be in 2..=255"));
        }
        let n = x.rows();
        let k = n_classes;
        let mut counts = vec![0usize; k];
        for &c in y {
            counts[c] += 1;
        }
        let init: Vec<f64> = counts.iter().map(|&c| (c as f64 / n as f64).ln()).collect();
        let binned = Binned::new(x, p.max_bins);
        let mut raw: Vec<f64> = (0..n).flat_map(|_| init.iter().copied()).collect();
        // the Newton step is damped by (K−1)/K
        let scale = p.learning_rate * (k as f64 - 1.0) / k as f64;
        let mut trees = Vec::with_capacity(p.rounds);
        for _ in 0..p.rounds {
            let mut prob = raw.clone();
            prob.chunks_mut(k).for_each(softmax);
            let round: Vec<GrownTree> = (0..k)
                .into_par_iter()
                .map(|c| {
                    let grad: Vec<f64> = (0..n)
                        .map(|i| prob[i * k + c] - f64::from(u8::from(y[i] == c)))
                        .collect();
                    let hess: Vec<f64> = (0..n)
                        .map(|i| {
                            let q = prob[i * k + c];
                            (q * (1.0 - q)).max(1e-16)
                        })
                        .collect();
                    grow(&binned, &grad, &hess, p, scale)
                })
                .collect();
            let mut row = Vec::with_capacity(k);
            for (c, (tree, assignment)) in round.into_iter().enumerate() {
                for (rows, value) in assignment {
                    for r in rows {
                        raw[r as usize * k + c] += value;
                    }
                }
                row.push(tree);
            }
            trees.push(row);
        }
        Ok(Self { init, trees })
    }

    pub fn rounds(&self) -> usize {
        self.trees.len()
    }

    /// Class probabilities using only the first `rounds` boosting rounds.
    pub fn scores_at(&self, x: &Matrix, rounds: usize) -> Matrix {
        let k = self.init.len();
        let rows: Vec<Vec<f64>> = (0..x.rows())
            .into_par_iter()
            .map(|i| {
                let mut r = self.init.clone();
                for round in self.trees.iter().take(rounds) {
                    for (c, t) in round.iter().enumerate() {
                        r[c] += t.predict(x.row(i));
                    }
                }
                softmax(&mut r);
                r
            })
            .collect();
        if rows.is_empty() {
            return Matrix::zeros(0, k);
        }
        Matrix::from_rows(&rows).expect("rectangular")
    }

    pub fn scores(&self, x: &Matrix) -> Matrix {
        self.scores_at(x, self.trees.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{gaussian_blobs, BlobSpec};

    #[test]
    fn bins_are_ordered_and_consistent() {
        let mut col = vec![3.0, 1.0, 2.0, 2.0, 5.0];
        let b = bin_bounds(&mut col, 255);
        assert_eq!(b, vec![1.5, 2.5, 4.0, f64::INFINITY]);
        assert_eq!(bin_of(&b, 1.0), 0);
        assert_eq!(bin_of(&b, 2.5), 1);
        assert_eq!(bin_of(&b, 5.0), 3);
        let mut many: Vec<f64> = (0..10_000).map(|i| (i % 997) as f64).collect();
        let b = bin_bounds(&mut many, 16);
        assert!(b.len() <= 16 && b.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn round_zero_is_the_prior() {
        let x = Matrix::from_vec(20, 1, (0..20).map(f64::from).collect()).unwrap();
        let mut y = vec![0usize; 20];
        y[7] = 1;
        let m = Gbdt::fit(&GbdtParams::default(), &x, &y, 2).unwrap();
        let s = m.scores_at(&x, 0);
        for r in s.iter_rows() {
            assert!((r[0] - 0.95).abs() < 1e-12 && (r[1] - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn learns_blobs() {
        let (x, y) = gaussian_blobs(&BlobSpec::isotropic(vec![200, 150, 100], 3, 5.0, 1.0), 2);
        let params = GbdtParams {
            rounds: 30,
            ..GbdtParams::default()
        };
        let m = Gbdt::fit(&params, &x, &y, 3).unwrap();
        let s = m.scores(&x);
        let acc = s
            .iter_rows()
            .zip(&y)
            .filter(|(r, &c)| crate::classify::argmax(r) == c)
            .count() as f64
            / y.len() as f64;
        assert!(acc > 0.95, "{acc}");
        // training loss falls with rounds
        let loss = |s: &Matrix| -> f64 { s.iter_rows().zip(&y).map(|(r, &c)| -r[c].ln()).sum::<f64>() };
        assert!(loss(&m.scores_at(&x, 30)) < loss(&m.scores_at(&x, 5)));
    }

    #[test]
    fn leaf_budget_is_respected() {
        let (x, y) = gaussian_blobs(&BlobSpec::isotropic(vec![100, 100], 2, 1.0, 1.0), 4);
        let p = GbdtParams {
            rounds: 1,
            leaves: 4,
            min_data_in_leaf: 1,
            ..GbdtParams::default()
        };
        let m = Gbdt::fit(&p, &x, &y, 2).unwrap();
        for t in &m.trees[0] {
            let leaves = t.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count();
            assert!((2..=4).contains(&leaves));
        }
    }
}
