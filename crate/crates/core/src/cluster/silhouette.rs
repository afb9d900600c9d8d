use rand::seq::index::sample;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::matrix::{euclidean, Matrix};
use crate::seed;

fn check(x: &Matrix, labels: &[usize]) -> Result<(Vec<usize>, usize)> {
    if labels.len() != x.rows() {
        return Err(invalid(format!("{} labels for {} rows", labels.len(), x.rows())));
    }
    if x.rows() < 3 {
        return Err(invalid("silhouette needs at least 3 rows"));
    }
    if !x.all_finite() {
        return Err(invalid("silhouette input contains missing values"));
    }
    let mut map = std::collections::BTreeMap::new();
    for &l in labels {
        let next = map.len();
        map.entry(l).or_insert(next);
    }
    if map.len() < 2 {
        return Err(invalid("silhouette needs at least 2 clusters"));
    }
    Ok((labels.iter().map(|l| map[l]).collect(), map.len()))
}

/// Per-row silhouette coefficients over all pairs.
pub fn silhouette_samples(x: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    let (labels, k) = check(x, labels)?;
    let mut sizes = vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }
    Ok((0..x.rows())
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for (j, r) in x.iter_rows().enumerate() {
                if j != i {
                    sums[labels[j]] += euclidean(x.row(i), r);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect())
}

/// Mean silhouette coefficient.
pub fn silhouette(x: &Matrix, labels: &[usize]) -> Result<f64> {
    let s = silhouette_samples(x, labels)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// Exact silhouette when `n ≤ max_rows`, otherwise the exact silhouette of a
/// seeded uniform subsample of `max_rows` rows.
pub fn silhouette_subsampled(x: &Matrix, labels: &[usize], max_rows: usize, seed_: u64) -> Result<f64> {
    if x.rows() <= max_rows {
        return silhouette(x, labels);
    }
    let mut idx = sample(&mut seed::rng(seed_), x.rows(), max_rows).into_vec();
    idx.sort_unstable();
    let sub: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    silhouette(&x.select_rows(&idx), &sub)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn four_points() {
        let x = Matrix::from_rows(&[[0.0], [0.1], [10.0], [10.1]]).unwrap();
        let s = silhouette(&x, &[0, 0, 1, 1]).unwrap();
        // a = 0.1; b = 10.05 or 9.95 → (b−a)/b
        let oracle = ((10.05 - 0.1) / 10.05 + (9.95 - 0.1) / 9.95) / 2.0;
        assert!((s - oracle).abs() < 1e-12);
        assert!((s - 0.990).abs() < 1e-3);
    }

    #[test]
    fn degenerate_and_singletons() {
        let x = Matrix::from_rows(&[[1.0], [1.0], [1.0]]).unwrap();
        assert_eq!(silhouette_samples(&x, &[0, 1, 1]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert!(silhouette(&x, &[0, 0, 0]).is_err());
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(silhouette(&x, &[0, 1]).is_err());
    }

    #[test]
    fn random_split_of_one_blob_is_poor() {
        let mut rng = seed::rng(4);
        let data: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Matrix::from_vec(200, 2, data).unwrap();
        let labels: Vec<usize> = (0..200).map(|_| rng.random_range(0..2)).collect();
        let s = silhouette(&x, &labels).unwrap();
        assert!(s < 0.1);
        let sub = silhouette_subsampled(&x, &labels, 50, 1).unwrap();
        assert!((-1.0..=1.0).contains(&sub));
    }
}
