//! Labeled synthetic data for tests, benchmarks and the acceptance suite.

use rand_distr::{Distribution, Normal};

use crate::matrix::Matrix;
use crate::seed;

/// Isotropic Gaussian blobs.
#[derive(Clone, Debug, PartialEq)]
pub struct BlobSpec {
    /// Rows per class.
    pub counts: Vec<usize>,
    /// One centre per class, each of the same length.
    pub centers: Vec<Vec<f64>>,
    pub sigma: f64,
}

impl BlobSpec {
    /// Centres on a regular simplex with pairwise distance `separation`.
    /// Needs `dims ≥ counts.len()`; otherwise the centres sit on a line,
    /// `separation` apart.
    pub fn isotropic(counts: Vec<usize>, dims: usize, separation: f64, sigma: f64) -> Self {
        let k = counts.len();
        let centers = (0..k)
            .map(|c| {
                let mut v = vec![0.0; dims];
                if dims >= k {
                    v[c] = separation / std::f64::consts::SQRT_2;
                } else if dims > 0 {
                    v[0] = c as f64 * separation;
                }
                v
            })
            .collect();
        Self { counts, centers, sigma }
    }

    pub fn dims(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }
}

/// Samples the blobs. Rows are grouped by class in order.
pub fn gaussian_blobs(spec: &BlobSpec, seed_: u64) -> (Matrix, Vec<usize>) {
    let mut rng = seed::rng(seed_);
    let noise = Normal::new(0.0, spec.sigma).expect("sigma must be finite and non-negative");
    let d = spec.dims();
    let n: usize = spec.counts.iter().sum();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (c, (&count, center)) in spec.counts.iter().zip(&spec.centers).enumerate() {
        for _ in 0..count {
            data.extend(center.iter().map(|m| m + noise.sample(&mut rng)));
            labels.push(c);
        }
    }
    (Matrix::from_vec(n, d, data).expect("shape"), labels)
}

/// Splits `total` in proportion to `weights` by largest remainder
/// (ties → earlier entry).
pub fn proportional_counts(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let short = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::euclidean;

    #[test]
    fn simplex_distances() {
        let spec = BlobSpec::isotropic(vec![1, 1, 1], 3, 10.0, 0.5);
        for a in 0..3 {
            for b in a + 1..3 {
                assert!((euclidean(&spec.centers[a], &spec.centers[b]) - 10.0).abs() < 1e-12);
            }
        }
        let (x, y) = gaussian_blobs(&spec, 1);
        assert_eq!((x.rows(), x.cols()), (3, 3));
        assert_eq!(y, vec![0, 1, 2]);
    }

    #[test]
    fn proportional() {
        assert_eq!(proportional_counts(&[1.0, 1.0, 1.0], 10), vec![4, 3, 3]);
        assert_eq!(proportional_counts(&[3.0, 1.0], 8), vec![6, 2]);
        assert_eq!(proportional_counts(&[60.0, 30.0, 10.0], 100), vec![60, 30, 10]);
    }
}
