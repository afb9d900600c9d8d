use serde::{Deserialize, Serialize};

use super::softmax;
use crate::error::Result;
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NbParams {
    /// Added to every variance as a fraction of the largest feature variance.
    pub var_smoothing: f64,
}

impl Default for NbParams {
    fn default() -> Self {
        Self { var_smoothing: 1e-9 }
    }
}

/// Gaussian naive Bayes with per-class feature means and variances.
#[derive(Clone, Debug)]
pub struct GaussianNb {
    pub log_prior: Vec<f64>,
    pub means: Matrix,
    pub variances: Matrix,
}

impl GaussianNb {
    pub fn fit(params: &NbParams, x: &Matrix, y: &[usize], n_classes: usize) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        let mut counts = vec![0usize; n_classes];
        let mut means = Matrix::zeros(n_classes, d);
        for (r, &c) in x.iter_rows().zip(y) {
            counts[c] += 1;
            for (m, v) in means.row_mut(c).iter_mut().zip(r) {
                *m += v;
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            means.row_mut(c).iter_mut().for_each(|m| *m /= count as f64);
        }
        let mut variances = Matrix::zeros(n_classes, d);
        for (r, &c) in x.iter_rows().zip(y) {
            for (j, v) in r.iter().enumerate() {
                let dv = v - means.get(c, j);
                variances.set(c, j, variances.get(c, j) + dv * dv);
            }
        }
        let overall = x.column_means();
        let max_var = (0..d)
            .map(|j| x.column(j).map(|v| (v - overall[j]).powi(2)).sum::<f64>() / n as f64)
            .fold(0.0, f64::max);
        let mut floor = params.var_smoothing * max_var;
        if floor <= 0.0 {
            floor = 1e-300;
        }
        for (c, &count) in counts.iter().enumerate() {
            variances
                .row_mut(c)
                .iter_mut()
                .for_each(|v| *v = *v / count as f64 + floor);
        }
        Ok(Self {
            log_prior: counts.iter().map(|&c| (c as f64 / n as f64).ln()).collect(),
            means,
            variances,
        })
    }

    /// Joint log-likelihood per class.
    pub fn log_joint(&self, x: &Matrix) -> Matrix {
        let k = self.log_prior.len();
        let mut out = Matrix::zeros(x.rows(), k);
        for (i, r) in x.iter_rows().enumerate() {
            for c in 0..k {
                let mut ll = self.log_prior[c];
                for (j, v) in r.iter().enumerate() {
                    let var = self.variances.get(c, j);
                    let dv = v - self.means.get(c, j);
                    ll -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + dv * dv / var);
                }
                out.set(i, c, ll);
            }
        }
        out
    }

    pub fn scores(&self, x: &Matrix) -> Matrix {
        let mut out = self.log_joint(x);
        for i in 0..out.rows() {
            softmax(out.row_mut(i));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn bayes_boundary_on_two_gaussians() {
        let mut rng = seed::rng(11);
        let mut sample = |mu: f64, n: usize| -> Vec<f64> {
            let d = Normal::new(mu, 1.0).unwrap();
            (0..n).map(|_| d.sample(&mut rng)).collect()
        };
        let mut train: Vec<f64> = sample(0.0, 500);
        train.extend(sample(10.0, 500));
        let y: Vec<usize> = (0..1000).map(|i| i / 500).collect();
        let x = Matrix::from_vec(1000, 1, train).unwrap();
        let m = GaussianNb::fit(&NbParams::default(), &x, &y, 2).unwrap();
        let mut test = sample(0.0, 500);
        test.extend(sample(10.0, 500));
        let s = m.scores(&Matrix::from_vec(1000, 1, test).unwrap());
        let correct = s
            .iter_rows()
            .zip(&y)
            .filter(|(r, &c)| crate::classify::argmax(r) == c)
            .count();
        assert!(correct as f64 / 1000.0 >= 0.99);
    }

    #[test]
    fn constant_feature_is_finite() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0], [1.0, 5.0], [1.0, 6.0]]).unwrap();
        let m = GaussianNb::fit(&NbParams::default(), &x, &[0, 0, 1, 1], 2).unwrap();
        assert!(m.scores(&x).all_finite());
    }
}
