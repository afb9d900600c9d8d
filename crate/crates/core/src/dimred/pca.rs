use serde::{Deserialize, Serialize};

use super::{sorted_symmetric_eigen, Embedding};
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

/// How many principal components to keep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Components {
    Count(usize),
    /// Smallest count whose cumulative explained-variance ratio reaches the fraction.
    VarianceFraction(f64),
}

/// Principal axes of the sample covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// `p × d`, one orthonormal component per row.
    pub components: Matrix,
    /// Eigenvalues of the covariance (divisor `n − 1`), descending.
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub mean: Vec<f64>,
    /// Trace of the covariance matrix.
    pub total_variance: f64,
    /// Numerical rank of the centered data.
    pub rank: usize,
}

impl PcaModel {
    pub fn fit(x: &Matrix, components: Components) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if n < 2 || d == 0 {
            return Err(invalid(format!("PCA needs at least 2 rows and 1 column, got {n}×{d}")));
        }
        if !x.all_finite() {
            return Err(invalid("PCA input contains missing or non-finite values"));
        }
        let mean = x.column_means();
        let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
        let mut centered = vec![0.0; d];
        for r in x.iter_rows() {
            for (c, (v, m)) in centered.iter_mut().zip(r.iter().zip(&mean)) {
                *c = v - m;
            }
            for a in 0..d {
                let ca = centered[a];
                for b in a..d {
                    cov[(a, b)] += ca * centered[b];
                }
            }
        }
        let denom = (n - 1) as f64;
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] /= denom;
                cov[(b, a)] = cov[(a, b)];
            }
        }
        let total_variance: f64 = (0..d).map(|a| cov[(a, a)]).sum();
        let (values, vectors) = sorted_symmetric_eigen(cov);
        let values: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
        let floor = values[0] * 1e-12 * d as f64;
        let rank = values.iter().filter(|&&v| v > floor).count().min(n - 1);
        let ratio = |v: f64| if total_variance > 0.0 { v / total_variance } else { 0.0 };
        let p = match components {
            Components::Count(p) => {
                if p == 0 {
                    return Err(invalid("PCA needs at least one component"));
                }
                if p > rank {
                    return Err(Error::RankDeficient { requested: p, rank });
                }
                p
            }
            Components::VarianceFraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(invalid(format!("variance fraction {f} outside (0, 1]")));
                }
                let mut cum = 0.0;
                let mut p = rank.max(1);
                for (i, v) in values.iter().enumerate().take(rank.max(1)) {
                    cum += ratio(*v);
                    if cum >= f - 1e-12 {
                        p = i + 1;
                        break;
                    }
                }
                p
            }
        };
        let comps: Vec<f64> = vectors[..p].iter().flatten().copied().collect();
        Ok(Self {
            components: Matrix::from_vec(p, d, comps)?,
            explained_variance: values[..p].to_vec(),
            explained_variance_ratio: values[..p].iter().map(|v| ratio(*v)).collect(),
            mean,
            total_variance,
            rank,
        })
    }

    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    /// Projects rows onto the components.
    pub fn transform(&self, x: &Matrix) -> Matrix {
        let p = self.n_components();
        let mut out = Matrix::zeros(x.rows(), p);
        for (i, r) in x.iter_rows().enumerate() {
            let o = out.row_mut(i);
            for (k, ok) in o.iter_mut().enumerate() {
                *ok = self
                    .components
                    .row(k)
                    .iter()
                    .zip(r.iter().zip(&self.mean))
                    .map(|(c, (v, m))| c * (v - m))
                    .sum();
            }
        }
        out
    }

    pub fn inverse_transform(&self, scores: &Matrix) -> Matrix {
        let d = self.mean.len();
        let mut out = Matrix::zeros(scores.rows(), d);
        for (i, s) in scores.iter_rows().enumerate() {
            let o = out.row_mut(i);
            o.copy_from_slice(&self.mean);
            for (k, sk) in s.iter().enumerate() {
                for (oj, cj) in o.iter_mut().zip(self.components.row(k)) {
                    *oj += sk * cj;
                }
            }
        }
        out
    }
}

/// Fits PCA and projects the same rows.
pub fn pca_fit_transform(x: &Matrix, components: Components, row_ids: &[String]) -> Result<(PcaModel, Embedding)> {
    let model = PcaModel::fit(x, components)?;
    let values = model.transform(x);
    let params = serde_json::json!({ "components": model.n_components(), "requested": components });
    Ok((model, Embedding::computed(values, "pca", params, row_ids.to_vec())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    #[test]
    fn rank_one_line() {
        let rows: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 2.0 * i as f64]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = PcaModel::fit(&x, Components::Count(1)).unwrap();
        assert!((m.explained_variance_ratio[0] - 1.0).abs() <= 1e-12);
        assert_eq!(m.rank, 1);
        match PcaModel::fit(&x, Components::Count(2)) {
            Err(Error::RankDeficient { requested: 2, rank: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn orthogonal_columns_give_axes() {
        let x = Matrix::from_rows(&[[3.0, 0.0], [-3.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
        let m = PcaModel::fit(&x, Components::Count(2)).unwrap();
        assert_eq!(m.components.row(0), &[1.0, 0.0]);
        assert_eq!(m.components.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn variance_fraction_mode() {
        let x = Matrix::from_rows(&[[3.0, 0.0], [-3.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
        // variances 6 and 2/3 → ratios 0.9, 0.1
        let m = PcaModel::fit(&x, Components::VarianceFraction(0.85)).unwrap();
        assert_eq!(m.n_components(), 1);
        let m = PcaModel::fit(&x, Components::VarianceFraction(0.95)).unwrap();
        assert_eq!(m.n_components(), 2);
    }

    #[test]
    fn full_rank_round_trip() {
        let mut rng = crate::seed::rng(5);
        let data: Vec<f64> = (0..500 * 20).map(|_| rng.random_range(-3.0..3.0)).collect();
        let x = Matrix::from_vec(500, 20, data).unwrap();
        let (model, emb) = pca_fit_transform(&x, Components::Count(20), &ids(500)).unwrap();
        let back = model.inverse_transform(&emb.values);
        let err = x
            .as_slice()
            .iter()
            .zip(back.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        for a in 0..20 {
            for b in 0..20 {
                let dot: f64 = model
                    .components
                    .row(a)
                    .iter()
                    .zip(model.components.row(b))
                    .map(|(p, q)| p * q)
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-8);
            }
        }
        let total: f64 = model.explained_variance.iter().sum();
        assert!((total - model.total_variance).abs() < 1e-8);
        assert!(model.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        let origin = model.transform(&Matrix::from_rows(std::slice::from_ref(&model.mean)).unwrap());
        assert!(origin.as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rejects_missing() {
        let x = Matrix::from_rows(&[[1.0, f64::NAN], [2.0, 3.0]]).unwrap();
        assert!(PcaModel::fit(&x, Components::Count(1)).is_err());
    }
}
