use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{orient, sorted_symmetric_eigen, Embedding};
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcaConfig {
    pub components: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            components: 2,
            max_iter: 200,
            tol: 1e-4,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IcaResult {
    pub embedding: Embedding,
    /// `c × c` rotation applied to the whitened data.
    pub rotation: Matrix,
    pub converged: bool,
    pub iterations: usize,
}

/// `(W Wᵀ)^{-1/2} W`
fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let wwt = w * w.transpose();
    let eig = nalgebra::SymmetricEigen::new(wwt);
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.max(1e-300).sqrt()));
    &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w
}

/// Parallel FastICA with the log-cosh contrast on PCA-whitened data.
///
/// Output components have unit (population) variance. Non-convergence is
/// reported through [`IcaResult::converged`], not as an error.
pub fn fast_ica(x: &Matrix, config: &IcaConfig, row_ids: &[String]) -> Result<IcaResult> {
    let (n, d) = (x.rows(), x.cols());
    let c = config.components;
    if c == 0 || c > d {
        return Err(invalid(format!("FastICA components {c} must be in 1..={d}")));
    }
    if n < 2 || !x.all_finite() {
        return Err(invalid("FastICA needs at least 2 complete rows"));
    }
    let mean = x.column_means();
    let mut xc = DMatrix::<f64>::zeros(d, n);
    for (i, r) in x.iter_rows().enumerate() {
        for j in 0..d {
            xc[(j, i)] = r[j] - mean[j];
        }
    }
    let cov = &xc * xc.transpose() / n as f64;
    let (values, vectors) = sorted_symmetric_eigen(cov);
    let floor = values[0].max(0.0) * 1e-12 * d as f64;
    let rank = values.iter().filter(|&&v| v > floor).count();
    if c > rank {
        return Err(Error::RankDeficient { requested: c, rank });
    }
    let mut whitening = DMatrix::<f64>::zeros(c, d);
    for k in 0..c {
        let s = 1.0 / values[k].sqrt();
        for j in 0..d {
            whitening[(k, j)] = vectors[k][j] * s;
        }
    }
    let xw = &whitening * &xc; // c × n

    let mut rng = seed::rng(config.seed);
    let init = DMatrix::<f64>::from_fn(c, c, |_, _| StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelation(&init);
    let mut converged = false;
    let mut iterations = 0;
    let inv_n = 1.0 / n as f64;
    for it in 0..config.max_iter {
        iterations = it + 1;
        let wx = &w * &xw;
        let g = wx.map(f64::tanh);
        let g_prime_mean: Vec<f64> = (0..c)
            .map(|k| g.row(k).iter().map(|t| 1.0 - t * t).sum::<f64>() * inv_n)
            .collect();
        let mut w_new = &g * xw.transpose() * inv_n;
        for k in 0..c {
            for j in 0..c {
                w_new[(k, j)] -= g_prime_mean[k] * w[(k, j)];
            }
        }
        let w_new = symmetric_decorrelation(&w_new);
        let lim = (0..c)
            .map(|k| (w_new.row(k).dot(&w.row(k)).abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = w_new;
        if lim < config.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("FastICA did not converge in {} iterations", config.max_iter);
    }
    let mut rotation = Matrix::zeros(c, c);
    for k in 0..c {
        let mut row: Vec<f64> = w.row(k).iter().copied().collect();
        orient(&mut row);
        rotation.row_mut(k).copy_from_slice(&row);
    }
    let rot = rotation.to_nalgebra();
    let sources = rot * xw; // c × n
    let mut values_out = Matrix::zeros(n, c);
    for i in 0..n {
        for k in 0..c {
            values_out.set(i, k, sources[(k, i)]);
        }
    }
    let params = serde_json::json!({
        "components": c,
        "max_iter": config.max_iter,
        "tol": config.tol,
        "seed": config.seed,
        "converged": converged,
    });
    Ok(IcaResult {
        embedding: Embedding::computed(values_out, "fastica", params, row_ids.to_vec()),
        rotation,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn recovers_mixed_uniform_sources() {
        let mut rng = seed::rng(11);
        let n = 2000;
        let s1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s2: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rows: Vec<[f64; 2]> = (0..n)
            .map(|i| [1.0 * s1[i] + 0.6 * s2[i], 0.4 * s1[i] + 1.0 * s2[i]])
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let r = fast_ica(
            &x,
            &IcaConfig {
                components: 2,
                ..IcaConfig::default()
            },
            &ids(n),
        )
        .unwrap();
        assert!(r.converged);
        let y0: Vec<f64> = r.embedding.values.column(0).collect();
        let y1: Vec<f64> = r.embedding.values.column(1).collect();
        let direct = correlation(&y0, &s1).abs().min(correlation(&y1, &s2).abs());
        let swapped = correlation(&y0, &s2).abs().min(correlation(&y1, &s1).abs());
        assert!(direct.max(swapped) >= 0.95, "{direct} {swapped}");
        // unit variance, uncorrelated
        for y in [&y0, &y1] {
            let m = y.iter().sum::<f64>() / n as f64;
            let v = y.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n as f64;
            assert!((v - 1.0).abs() < 1e-9);
        }
        assert!(correlation(&y0, &y1).abs() < 1e-6);
    }

    #[test]
    fn one_dimensional_is_standardized() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [6.0]]).unwrap();
        let r = fast_ica(
            &x,
            &IcaConfig {
                components: 1,
                ..IcaConfig::default()
            },
            &ids(4),
        )
        .unwrap();
        let std = (14.0f64 / 4.0).sqrt();
        for (i, v) in [1.0, 2.0, 3.0, 6.0].iter().enumerate() {
            assert!((r.embedding.values.get(i, 0) - (v - 3.0) / std).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let mut rng = seed::rng(3);
        let data: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Matrix::from_vec(100, 3, data).unwrap();
        let cfg = IcaConfig {
            components: 3,
            ..IcaConfig::default()
        };
        let a = fast_ica(&x, &cfg, &ids(100)).unwrap();
        let b = fast_ica(&x, &cfg, &ids(100)).unwrap();
        assert_eq!(a.embedding.values, b.embedding.values);
        assert!(fast_ica(&x, &IcaConfig { components: 4, ..cfg }, &ids(100)).is_err());
    }
}
