use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sorted_symmetric_eigen, Embedding};
use crate::error::{invalid, Result};
use crate::matrix::{squared_euclidean, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum Kernel {
    /// `exp(−gamma · ‖x − y‖²)`; `gamma = None` means `1 / d`.
    Rbf {
        gamma: Option<f64>,
    },
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelPcaConfig {
    pub kernel: Kernel,
    pub components: usize,
    /// Refuse inputs with more rows than this (the kernel matrix is `n × n`).
    pub max_rows: usize,
}

impl Default for KernelPcaConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Rbf { gamma: None },
            components: 2,
            max_rows: 20_000,
        }
    }
}

/// Kernel PCA on the double-centered Gram matrix.
///
/// Training points are projected as `K̃ α` with `α = v / √λ`, which equals
/// `√λ · v`. Components whose eigenvalue falls below a numerical floor are
/// dropped with a warning.
pub fn kernel_pca(x: &Matrix, config: &KernelPcaConfig, row_ids: &[String]) -> Result<Embedding> {
    let n = x.rows();
    if n < 2 {
        return Err(invalid("kernel PCA needs at least two rows"));
    }
    if n > config.max_rows {
        return Err(invalid(format!(
            "kernel PCA on {n} rows exceeds the {}-row limit",
            config.max_rows
        )));
    }
    if config.components == 0 {
        return Err(invalid("kernel PCA needs at least one component"));
    }
    if !x.all_finite() {
        return Err(invalid("kernel PCA input contains missing values"));
    }
    let gamma = match config.kernel {
        Kernel::Rbf { gamma } => {
            let g = gamma.unwrap_or(1.0 / x.cols().max(1) as f64);
            if g <= 0.0 || !g.is_finite() {
                return Err(invalid(format!("RBF gamma must be positive, got {g}")));
            }
            Some(g)
        }
        Kernel::Linear => None,
    };
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = x.row(i);
            (0..n)
                .map(|j| {
                    let b = x.row(j);
                    match gamma {
                        Some(g) => (-g * squared_euclidean(a, b)).exp(),
                        None => a.iter().zip(b).map(|(p, q)| p * q).sum(),
                    }
                })
                .collect()
        })
        .collect();
    let row_means: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let k = nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j] - row_means[i] - row_means[j] + grand);
    drop(rows);
    let (values, vectors) = sorted_symmetric_eigen(k);
    let floor = values[0].max(0.0) * 1e-10;
    let kept = values
        .iter()
        .take(config.components)
        .take_while(|&&v| v > floor && v > 0.0)
        .count();
    if kept < config.components {
        log::warn!(
            "kernel PCA: only {kept} of {} components have eigenvalues above the floor",
            config.components
        );
    }
    if kept == 0 {
        return Err(invalid("kernel matrix has no positive eigenvalues"));
    }
    let mut out = Matrix::zeros(n, kept);
    for c in 0..kept {
        let s = values[c].sqrt();
        for (i, v) in vectors[c].iter().enumerate().take(n) {
            out.set(i, c, v * s);
        }
    }
    let params = serde_json::json!({
        "kernel": config.kernel,
        "gamma": gamma,
        "components": kept,
        "requested_components": config.components,
    });
    Ok(Embedding::computed(out, "kernel-pca", params, row_ids.to_vec()))
}
