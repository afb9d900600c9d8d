//! Clustering algorithms, validity metrics and the benchmark grid.

mod agglomerative;
mod benchmark;
mod kmeans;
mod metrics;
mod silhouette;

pub use agglomerative::{agglomerative, AgglomerativeConfig, Linkage, Merge};
pub use benchmark::{
    run_benchmark, write_benchmark_csv, Balance, BenchmarkData, BenchmarkGrid, ClusterRun, ClustererSpec, ReducerKind,
    ReducerSpec, ValidityScores,
};
pub use kmeans::{kmeans, KMeansConfig, KMeansFit};
pub use metrics::{contingency, external_metrics, Contingency, ExternalScores};
pub use silhouette::{silhouette, silhouette_samples, silhouette_subsampled};

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

/// Result of a clustering run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// One label in `0..k` per row.
    pub labels: Vec<usize>,
    pub k: usize,
    /// Sum of squared distances to the assigned centroids (k-means only).
    pub inertia: Option<f64>,
    pub centroids: Option<Matrix>,
    /// Full merge history (agglomerative only).
    pub dendrogram: Option<Vec<Merge>>,
}
