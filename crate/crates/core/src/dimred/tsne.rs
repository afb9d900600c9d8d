use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Embedding;
use crate::error::{invalid, Result};
use crate::matrix::{squared_euclidean, Matrix};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub dims: usize,
    pub iters: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            dims: 2,
            iters: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 42,
        }
    }
}

/// Symmetrized input affinities.
#[derive(Clone, Debug)]
pub struct JointProbabilities {
    pub n: usize,
    /// Row-major `n × n`, symmetric, zero diagonal, summing to 1.
    pub p: Vec<f64>,
    /// Shannon entropy (nats) of each conditional distribution `P(·|i)`.
    pub entropies: Vec<f64>,
    /// Gaussian precision `1 / (2σᵢ²)` found for each point.
    pub betas: Vec<f64>,
}

const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 200;

/// Conditional distribution of one point: bisection on the precision until
/// the entropy matches `ln(perplexity)`.
fn conditional_row(dist: &[f64], i: usize, target: f64) -> (Vec<f64>, f64, f64) {
    let n = dist.len();
    let d_min = dist
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, d)| *d)
        .fold(f64::INFINITY, f64::min);
    let mut beta = 1.0;
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let mut row = vec![0.0; n];
    let mut entropy = 0.0;
    for _ in 0..MAX_BISECTIONS {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for j in 0..n {
            if j == i {
                row[j] = 0.0;
                continue;
            }
            let shifted = dist[j] - d_min;
            let v = (-beta * shifted).exp();
            row[j] = v;
            sum += v;
            weighted += shifted * v;
        }
        entropy = sum.ln() + beta * weighted / sum;
        let diff = entropy - target;
        if diff.abs() < ENTROPY_TOL {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
    }
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= sum);
    (row, entropy, beta)
}

/// Perplexity-calibrated affinities `P = (P_{j|i} + P_{i|j}) / 2n`.
pub fn joint_probabilities(x: &Matrix, perplexity: f64) -> Result<JointProbabilities> {
    let n = x.rows();
    if n < 4 {
        return Err(invalid("t-SNE needs at least 4 rows"));
    }
    if !(perplexity > 0.0 && perplexity < (n - 1) as f64 / 3.0) {
        return Err(invalid(format!(
            "perplexity {perplexity} must be in (0, {:.3}) for {n} rows",
            (n - 1) as f64 / 3.0
        )));
    }
    if !x.all_finite() {
        return Err(invalid("t-SNE input contains missing values"));
    }
    let target = perplexity.ln();
    let rows: Vec<(Vec<f64>, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let dist: Vec<f64> = (0..n).map(|j| squared_euclidean(x.row(i), x.row(j))).collect();
            conditional_row(&dist, i, target)
        })
        .collect();
    if rows.iter().all(|(_, _, b)| !b.is_finite()) || all_identical(x) {
        return Err(invalid("all rows are identical; t-SNE is undefined"));
    }
    let mut p = vec![0.0; n * n];
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (rows[i].0[j] + rows[j].0[i]) / denom;
        }
    }
    Ok(JointProbabilities {
        n,
        p,
        entropies: rows.iter().map(|r| r.1).collect(),
        betas: rows.iter().map(|r| r.2).collect(),
    })
}

fn all_identical(x: &Matrix) -> bool {
    let first = x.row(0);
    x.iter_rows().all(|r| r == first)
}

#[derive(Clone, Debug)]
pub struct TsneResult {
    pub embedding: Embedding,
    /// `kl_history[t]` is KL(P‖Q) (unexaggerated P) after iteration `t + 1`.
    pub kl_history: Vec<f64>,
}

impl TsneResult {
    /// KL divergence after the 1-based iteration `iter`.
    pub fn kl_at(&self, iter: usize) -> Option<f64> {
        iter.checked_sub(1).and_then(|i| self.kl_history.get(i).copied())
    }
}

struct Step {
    grad: Vec<f64>,
    kl: f64,
}

/// Gradient of KL(exaggeration·P ‖ Q) and the plain KL(P ‖ Q) at `y`.
fn gradient(p: &[f64], y: &[f64], n: usize, dims: usize, exaggeration: f64) -> Step {
    let dist = |i: usize, j: usize| -> f64 { (0..dims).map(|k| (y[i * dims + k] - y[j * dims + k]).powi(2)).sum() };
    // unnormalized Student-t kernel, row by row
    let num: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { 1.0 / (1.0 + dist(i, j)) })
                .collect()
        })
        .collect();
    let z: f64 = num.iter().map(|r| r.iter().sum::<f64>()).sum();
    let per_row: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = vec![0.0; dims];
            let mut kl = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let pij = p[i * n + j];
                let q = (num[i][j] / z).max(1e-12);
                if pij > 0.0 {
                    kl += pij * (pij / q).ln();
                }
                let mult = (exaggeration * pij - num[i][j] / z) * num[i][j];
                for k in 0..dims {
                    g[k] += 4.0 * mult * (y[i * dims + k] - y[j * dims + k]);
                }
            }
            (g, kl)
        })
        .collect();
    let mut grad = Vec::with_capacity(n * dims);
    let mut kl = 0.0;
    for (g, k) in per_row {
        grad.extend(g);
        kl += k;
    }
    Step { grad, kl }
}

/// Exact t-SNE by gradient descent with momentum and per-parameter gains.
pub fn tsne(x: &Matrix, config: &TsneConfig, row_ids: &[String]) -> Result<TsneResult> {
    if !(config.dims == 2 || config.dims == 3) {
        return Err(invalid(format!(
            "t-SNE output dimension must be 2 or 3, got {}",
            config.dims
        )));
    }
    let jp = joint_probabilities(x, config.perplexity)?;
    let (n, dims) = (jp.n, config.dims);
    let mut rng = seed::rng(config.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<f64> = (0..n * dims).map(|_| normal.sample(&mut rng)).collect();
    let mut update = vec![0.0f64; n * dims];
    let mut gains = vec![1.0f64; n * dims];
    let mut kl_history = Vec::with_capacity(config.iters);
    for it in 0..config.iters {
        let early = it < config.exaggeration_iters;
        let exaggeration = if early { config.early_exaggeration } else { 1.0 };
        let momentum = if early {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        let step = gradient(&jp.p, &y, n, dims, exaggeration);
        for ((g, u), gain) in step.grad.iter().zip(&mut update).zip(&mut gains) {
            *gain = if (*g > 0.0) != (*u > 0.0) {
                *gain + 0.2
            } else {
                *gain * 0.8
            }
            .max(0.01);
            *u = momentum * *u - config.learning_rate * *gain * g;
        }
        for (v, u) in y.iter_mut().zip(&update) {
            *v += u;
        }
        for k in 0..dims {
            let mean = (0..n).map(|i| y[i * dims + k]).sum::<f64>() / n as f64;
            for i in 0..n {
                y[i * dims + k] -= mean;
            }
        }
        // KL of the configuration that produced this gradient
        kl_history.push(step.kl);
    }
    let params = serde_json::json!({
        "perplexity": config.perplexity,
        "dims": dims,
        "iters": config.iters,
        "learning_rate": config.learning_rate,
        "early_exaggeration": config.early_exaggeration,
        "seed": config.seed,
    });
    Ok(TsneResult {
        embedding: Embedding::computed(Matrix::from_vec(n, dims, y)?, "tsne", params, row_ids.to_vec()),
        kl_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(seed_: u64) -> Matrix {
        let mut rng = seed::rng(seed_);
        let mut rows = Vec::new();
        for b in 0..2 {
            for _ in 0..10 {
                let c = if b == 0 { 0.0 } else { 20.0 };
                rows.push([
                    c + rng.random_range(-1.0..1.0),
                    c + rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]);
            }
        }
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn affinities_normalized_and_calibrated() {
        let x = blobs(1);
        let jp = joint_probabilities(&x, 5.0).unwrap();
        let total: f64 = jp.p.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        for i in 0..jp.n {
            for j in 0..jp.n {
                assert_eq!(jp.p[i * jp.n + j], jp.p[j * jp.n + i]);
            }
            assert!((jp.entropies[i] - 5f64.ln()).abs() < 1e-4);
        }
    }

    #[test]
    fn preconditions() {
        let x = blobs(1);
        assert!(joint_probabilities(&x, 7.0).is_err());
        let dup = Matrix::from_rows(&[[1.0, 1.0]; 10]).unwrap();
        assert!(joint_probabilities(&dup, 2.0).is_err());
        let cfg = TsneConfig {
            dims: 4,
            ..TsneConfig::default()
        };
        assert!(tsne(&x, &cfg, &[]).is_err());
    }

    #[test]
    fn separates_blobs_and_descends() {
        let x = blobs(2);
        let ids: Vec<String> = (0..20).map(|i| i.to_string()).collect();
        let cfg = TsneConfig {
            perplexity: 5.0,
            seed: 3,
            ..TsneConfig::default()
        };
        let r = tsne(&x, &cfg, &ids).unwrap();
        assert!(r.kl_at(1000).unwrap() < r.kl_at(260).unwrap());
        let e = &r.embedding.values;
        let centroid = |range: std::ops::Range<usize>| {
            let mut c = [0.0; 2];
            for i in range.clone() {
                c[0] += e.get(i, 0);
                c[1] += e.get(i, 1);
            }
            c.map(|v| v / range.len() as f64)
        };
        let (a, b) = (centroid(0..10), centroid(10..20));
        let spread = |range: std::ops::Range<usize>, c: [f64; 2]| {
            range
                .map(|i| squared_euclidean(e.row(i), &c).sqrt())
                .fold(0.0, f64::max)
        };
        let max_spread = spread(0..10, a).max(spread(10..20, b));
        assert!(squared_euclidean(&a, &b).sqrt() > 3.0 * max_spread);

        let again = tsne(&x, &cfg, &ids).unwrap();
        assert_eq!(again.embedding.values, r.embedding.values);
    }
}
