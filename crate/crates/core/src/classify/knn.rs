use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::{squared_euclidean, Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Majority vote among the `k` nearest training rows (Euclidean).
#[derive(Clone, Debug)]
pub struct Knn {
    pub k: usize,
    x: Matrix,
    y: Vec<usize>,
    n_classes: usize,
}

impl Knn {
    pub fn fit(params: &KnnParams, x: &Matrix, y: &[usize], n_classes: usize) -> Result<Self> {
        if params.k == 0 || params.k > x.rows() {
            return Err(invalid(format!(
                "knn needs 1 ≤ k ≤ {} training rows, got k = {}",
                x.rows(),
                params.k
            )));
        }
        Ok(Self {
            k: params.k,
            x: x.clone(),
            y: y.to_vec(),
            n_classes,
        })
    }

    /// Vote shares. Neighbours at equal distance are taken in class order,
    /// then training order.
    pub fn scores(&self, x: &Matrix) -> Matrix {
        let k = self.k;
        let rows: Vec<Vec<f64>> = (0..x.rows())
            .into_par_iter()
            .map(|i| {
                let q = x.row(i);
                let mut d: Vec<(f64, usize, usize)> = self
                    .x
                    .iter_rows()
                    .enumerate()
                    .map(|(j, r)| (squared_euclidean(q, r), self.y[j], j))
                    .collect();
                let cmp = |a: &(f64, usize, usize), b: &(f64, usize, usize)| {
                    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
                };
                if k < d.len() {
                    d.select_nth_unstable_by(k - 1, cmp);
                }
                let mut votes = vec![0.0; self.n_classes];
                for &(_, c, _) in &d[..k] {
                    votes[c] += 1.0 / k as f64;
                }
                votes
            })
            .collect();
        Matrix::from_rows(&rows).expect("rectangular")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memorizes_with_k1() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [5.0]]).unwrap();
        let y = [0, 1, 0, 1];
        let m = Knn::fit(&KnnParams { k: 1 }, &x, &y, 2).unwrap();
        let s = m.scores(&x);
        let pred: Vec<usize> = s.iter_rows().map(crate::classify::argmax).collect();
        assert_eq!(pred, y);
    }

    #[test]
    fn majority_of_three() {
        // neighbours of 0.0 are a, a, b
        let x = Matrix::from_rows(&[[0.1], [-0.2], [0.3], [9.0]]).unwrap();
        let m = Knn::fit(&KnnParams { k: 3 }, &x, &[0, 0, 1, 1], 2).unwrap();
        let s = m.scores(&Matrix::from_rows(&[[0.0]]).unwrap());
        assert_eq!(s.row(0), &[2.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn equal_distance_prefers_smaller_class() {
        let x = Matrix::from_rows(&[[1.0], [-1.0]]).unwrap();
        let m = Knn::fit(&KnnParams { k: 1 }, &x, &[1, 0], 2).unwrap();
        assert_eq!(m.scores(&Matrix::from_rows(&[[0.0]]).unwrap()).row(0), &[1.0, 0.0]);
        assert!(Knn::fit(&KnnParams { k: 3 }, &x, &[1, 0], 2).is_err());
    }
}
