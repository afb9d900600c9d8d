use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClusterAssignment;
use crate::error::{invalid, Result};
use crate::matrix::{squared_euclidean, Matrix};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub n_init: usize,
    pub max_iter: usize,
    /// Stop once the summed squared centroid shift falls to this value.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 3,
            n_init: 10,
            max_iter: 300,
            tol: 1e-8,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub assignment: ClusterAssignment,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    /// The final assignment step changed no label.
    pub converged: bool,
}

fn plus_plus_init(x: &Matrix, k: usize, rng: &mut seed::Rng) -> Matrix {
    let n = x.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| squared_euclidean(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                acc += w;
                if acc > r && *w > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // every point coincides with a centre already
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_euclidean(x.row(i), x.row(next)));
        }
    }
    x.select_rows(&chosen)
}

/// Nearest centroid per row (ties → lower index) and the resulting inertia.
fn assign(x: &Matrix, centroids: &Matrix, labels: &mut [usize]) -> (bool, f64) {
    let best: Vec<(usize, f64)> = (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let r = x.row(i);
            let mut best = (0, f64::INFINITY);
            for (c, cen) in centroids.iter_rows().enumerate() {
                let d = squared_euclidean(r, cen);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .collect();
    let mut changed = false;
    let mut inertia = 0.0;
    for (l, (c, d)) in labels.iter_mut().zip(best) {
        changed |= *l != c;
        *l = c;
        inertia += d;
    }
    (changed, inertia)
}

/// Gives every empty cluster the point farthest from its own centroid.
fn repair_empty(x: &Matrix, centroids: &mut Matrix, labels: &mut [usize]) {
    let k = centroids.rows();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &l) in labels.iter().enumerate() {
            if sizes[l] < 2 {
                continue;
            }
            let d = squared_euclidean(x.row(i), centroids.row(l));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else { return };
        labels[i] = empty;
        centroids.row_mut(empty).copy_from_slice(x.row(i));
    }
}

fn means(x: &Matrix, labels: &[usize], k: usize) -> Matrix {
    let mut sums = Matrix::zeros(k, x.cols());
    let mut counts = vec![0usize; k];
    for (r, &l) in x.iter_rows().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(r) {
            *s += v;
        }
    }
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            sums.row_mut(c).iter_mut().for_each(|s| *s /= cnt as f64);
        }
    }
    sums
}

struct Restart {
    labels: Vec<usize>,
    centroids: Matrix,
    inertia: f64,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn lloyd(x: &Matrix, cfg: &KMeansConfig, seed_: u64) -> Restart {
    let mut rng = seed::rng(seed_);
    let mut centroids = plus_plus_init(x, cfg.k, &mut rng);
    let mut labels = vec![usize::MAX; x.rows()];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut final_pass = false;
    for it in 0..cfg.max_iter.max(1) {
        iterations = it + 1;
        let (changed, _) = assign(x, &centroids, &mut labels);
        repair_empty(x, &mut centroids, &mut labels);
        let inertia: f64 = x
            .iter_rows()
            .zip(&labels)
            .map(|(r, &l)| squared_euclidean(r, centroids.row(l)))
            .sum();
        history.push(inertia);
        if !changed && it > 0 {
            converged = true;
            break;
        }
        if final_pass {
            break;
        }
        let updated = means(x, &labels, cfg.k);
        let shift: f64 = updated
            .iter_rows()
            .zip(centroids.iter_rows())
            .map(|(a, b)| squared_euclidean(a, b))
            .sum();
        centroids = updated;
        final_pass = shift <= cfg.tol;
    }
    let centroids = means(x, &labels, cfg.k);
    let inertia = x
        .iter_rows()
        .zip(&labels)
        .map(|(r, &l)| squared_euclidean(r, centroids.row(l)))
        .sum();
    Restart {
        labels,
        centroids,
        inertia,
        history,
        iterations,
        converged,
    }
}

/// Lloyd's k-means from k-means++ seeding, keeping the best of `n_init`
/// restarts (ties → earliest restart).
pub fn kmeans(x: &Matrix, config: &KMeansConfig) -> Result<KMeansFit> {
    let n = x.rows();
    if config.k == 0 {
        return Err(invalid("k-means needs k ≥ 1"));
    }
    if config.k > n {
        return Err(invalid(format!("k = {} exceeds the {n} rows", config.k)));
    }
    if !x.all_finite() {
        return Err(invalid("k-means input contains missing values"));
    }
    let runs: Vec<Restart> = (0..config.n_init.max(1))
        .into_par_iter()
        .map(|r| lloyd(x, config, seed::derive(config.seed, r as u64)))
        .collect();
    let best = runs
        .into_iter()
        .reduce(|best, r| if r.inertia < best.inertia { r } else { best })
        .expect("at least one restart");
    Ok(KMeansFit {
        assignment: ClusterAssignment {
            labels: best.labels,
            k: config.k,
            inertia: Some(best.inertia),
            centroids: Some(best.centroids),
            dendrogram: None,
        },
        inertia_history: best.history,
        iterations: best.iterations,
        converged: best.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_pairs() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [0.0, 0.0], [10.0, 10.0], [10.0, 10.0]]).unwrap();
        let fit = kmeans(
            &x,
            &KMeansConfig {
                k: 2,
                ..KMeansConfig::default()
            },
        )
        .unwrap();
        let a = &fit.assignment;
        assert_eq!(a.inertia, Some(0.0));
        assert_eq!(a.labels[0], a.labels[1]);
        assert_eq!(a.labels[2], a.labels[3]);
        assert_ne!(a.labels[0], a.labels[2]);
        let c = a.centroids.as_ref().unwrap();
        let mut rows: Vec<Vec<f64>> = c.iter_rows().map(<[f64]>::to_vec).collect();
        rows.sort_by(|p, q| p[0].total_cmp(&q[0]));
        assert_eq!(rows, vec![vec![0.0, 0.0], vec![10.0, 10.0]]);
    }

    #[test]
    fn k_equals_n() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [5.0], [9.0], [20.0]]).unwrap();
        let fit = kmeans(
            &x,
            &KMeansConfig {
                k: 5,
                ..KMeansConfig::default()
            },
        )
        .unwrap();
        assert_eq!(fit.assignment.inertia, Some(0.0));
        let mut l = fit.assignment.labels.clone();
        l.sort_unstable();
        assert_eq!(l, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn bad_k() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(kmeans(
            &x,
            &KMeansConfig {
                k: 0,
                ..KMeansConfig::default()
            }
        )
        .is_err());
        assert!(kmeans(
            &x,
            &KMeansConfig {
                k: 3,
                ..KMeansConfig::default()
            }
        )
        .is_err());
    }

    #[test]
    fn duplicates_still_fill_clusters() {
        let x = Matrix::from_rows(&[[1.0], [1.0], [1.0], [2.0]]).unwrap();
        let fit = kmeans(
            &x,
            &KMeansConfig {
                k: 3,
                ..KMeansConfig::default()
            },
        )
        .unwrap();
        let mut seen = fit.assignment.labels.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, vec![0, 1, 2]);
    }

    #[test]
    fn monotone_and_fixed_point() {
        let mut rng = seed::rng(9);
        for s in 0..5 {
            let data: Vec<f64> = (0..200 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = Matrix::from_vec(200, 5, data).unwrap();
            let fit = kmeans(
                &x,
                &KMeansConfig {
                    k: 6,
                    seed: s,
                    ..KMeansConfig::default()
                },
            )
            .unwrap();
            assert!(fit.inertia_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
            if fit.converged {
                let mut labels = fit.assignment.labels.clone();
                let (changed, _) = assign(&x, fit.assignment.centroids.as_ref().unwrap(), &mut labels);
                assert!(!changed);
            }
        }
    }
}
