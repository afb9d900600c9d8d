use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::agglomerative::{agglomerative, AgglomerativeConfig, Linkage};
use super::kmeans::{kmeans, KMeansConfig};
use super::metrics::{external_metrics, ExternalScores};
use super::silhouette::{silhouette, silhouette_subsampled};
use crate::dimred::{
    fast_ica, kernel_pca, pca_fit_transform, read_embedding, tsne, Components, IcaConfig, KernelPcaConfig, TsneConfig,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::preprocess::{impute_and_scale, random_oversample_indices, LabeledData};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum ReducerKind {
    None,
    Pca {
        components: Components,
    },
    Fastica {
        #[serde(flatten)]
        config: IcaConfig,
    },
    Kpca {
        #[serde(flatten)]
        config: KernelPcaConfig,
    },
    Tsne {
        #[serde(flatten)]
        config: TsneConfig,
    },
    /// An externally computed embedding (CSV written by `write_embedding`).
    Imported {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducerSpec {
    /// Tag shown in reports, e.g. `PCA0` or `UMAP7`.
    pub name: String,
    #[serde(flatten)]
    pub kind: ReducerKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "algorithm")]
pub enum ClustererSpec {
    Kmeans {
        #[serde(default = "default_n_init")]
        n_init: usize,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    Agglomerative {
        #[serde(default)]
        linkage: Linkage,
        #[serde(default = "default_max_rows")]
        max_rows: usize,
    },
}

fn default_n_init() -> usize {
    10
}
fn default_max_iter() -> usize {
    300
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_rows() -> usize {
    20_000
}

impl ClustererSpec {
    pub fn kmeans() -> Self {
        Self::Kmeans {
            n_init: default_n_init(),
            max_iter: default_max_iter(),
            tol: default_tol(),
        }
    }

    pub fn agglomerative(linkage: Linkage) -> Self {
        Self::Agglomerative {
            linkage,
            max_rows: default_max_rows(),
        }
    }

    pub fn tag(&self) -> String {
        match self {
            Self::Kmeans { .. } => "k-means".into(),
            Self::Agglomerative { linkage, .. } => format!("agglomerative ({linkage})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Balance {
    Imbalanced,
    Ros,
}

impl std::fmt::Display for Balance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Balance::Imbalanced => "imbalanced",
            Balance::Ros => "ros",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkGrid {
    pub reducers: Vec<ReducerSpec>,
    pub clusterers: Vec<ClustererSpec>,
    pub balance: Vec<Balance>,
    /// Estimate the silhouette from a subsample of this many rows when the
    /// clustered set is larger. `None` keeps it exact.
    pub silhouette_max_rows: Option<usize>,
}

impl Default for BenchmarkGrid {
    fn default() -> Self {
        Self {
            reducers: vec![
                ReducerSpec {
                    name: "none".into(),
                    kind: ReducerKind::None,
                },
                ReducerSpec {
                    name: "PCA".into(),
                    kind: ReducerKind::Pca {
                        components: Components::Count(11),
                    },
                },
            ],
            clusterers: vec![ClustererSpec::kmeans(), ClustererSpec::agglomerative(Linkage::Ward)],
            balance: vec![Balance::Imbalanced, Balance::Ros],
            silhouette_max_rows: None,
        }
    }
}

/// Complete, scaled features with one class index per row.
#[derive(Clone, Debug)]
pub struct BenchmarkData {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub row_ids: Vec<String>,
    pub classes: Vec<String>,
}

impl BenchmarkData {
    /// Median-imputes and standardizes the whole subset.
    pub fn from_labeled(data: &LabeledData) -> Self {
        let (fm, _) = impute_and_scale(&data.features);
        Self {
            features: fm.values,
            labels: data.labels.clone(),
            row_ids: fm.row_ids,
            classes: data.classes.clone(),
        }
    }

    /// Number of distinct classes present.
    pub fn k(&self) -> usize {
        let mut seen = self.labels.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityScores {
    #[serde(flatten)]
    pub external: ExternalScores,
    pub silhouette: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterRun {
    pub group: String,
    pub reducer: String,
    pub clusterer: String,
    pub balance: Balance,
    pub n_rows: usize,
    pub k: usize,
    pub scores: Option<ValidityScores>,
    pub error: Option<String>,
    /// Cluster index per clustered row (after oversampling when `ros`).
    pub labels: Vec<usize>,
    /// Reduce + cluster time. Kept out of the serialized form so reports stay
    /// reproducible; written to the CSV and timing log instead.
    #[serde(skip)]
    pub wall_seconds: f64,
}

struct CellOutput {
    n_rows: usize,
    labels: Vec<usize>,
    scores: ValidityScores,
    wall_seconds: f64,
}

/// Runs a computed reducer on `x`, or loads an imported embedding aligned to
/// the original rows and replicates it along `oversample`.
fn reduce(
    x: &Matrix,
    data: &BenchmarkData,
    ids: &[String],
    spec: &ReducerKind,
    oversample: Option<&[usize]>,
    seed: u64,
) -> Result<Matrix> {
    Ok(match spec {
        ReducerKind::None => x.clone(),
        ReducerKind::Pca { components } => pca_fit_transform(x, *components, ids)?.1.values,
        ReducerKind::Fastica { config } => {
            fast_ica(x, &IcaConfig { seed, ..config.clone() }, ids)?
                .embedding
                .values
        }
        ReducerKind::Kpca { config } => kernel_pca(x, config, ids)?.values,
        ReducerKind::Tsne { config } => tsne(x, &TsneConfig { seed, ..config.clone() }, ids)?.embedding.values,
        ReducerKind::Imported { path } => {
            let file = std::fs::File::open(path).map_err(|source| Error::File {
                path: path.clone(),
                source,
            })?;
            let emb = read_embedding(file, &data.row_ids)?;
            match oversample {
                Some(idx) => emb.values.select_rows(idx),
                None => emb.values,
            }
        }
    })
}

fn run_cell(
    data: &BenchmarkData,
    reducer: &ReducerSpec,
    clusterer: &ClustererSpec,
    balance: Balance,
    k: usize,
    grid: &BenchmarkGrid,
    seed: u64,
) -> Result<CellOutput> {
    let oversample = match balance {
        Balance::Imbalanced => None,
        Balance::Ros => Some(random_oversample_indices(&data.labels, seed)),
    };
    let (x, truth, ids) = match &oversample {
        Some(idx) => (
            data.features.select_rows(idx),
            idx.iter().map(|&i| data.labels[i]).collect::<Vec<_>>(),
            idx.iter().map(|&i| data.row_ids[i].clone()).collect::<Vec<_>>(),
        ),
        None => (data.features.clone(), data.labels.clone(), data.row_ids.clone()),
    };
    let start = Instant::now();
    let reduced = reduce(&x, data, &ids, &reducer.kind, oversample.as_deref(), seed)?;
    let labels = match clusterer {
        ClustererSpec::Kmeans { n_init, max_iter, tol } => {
            let cfg = KMeansConfig {
                k,
                n_init: *n_init,
                max_iter: *max_iter,
                tol: *tol,
                seed,
            };
            kmeans(&reduced, &cfg)?.assignment.labels
        }
        ClustererSpec::Agglomerative { linkage, max_rows } => {
            let cfg = AgglomerativeConfig {
                k,
                linkage: *linkage,
                max_rows: *max_rows,
            };
            agglomerative(&reduced, &cfg)?.labels
        }
    };
    let wall_seconds = start.elapsed().as_secs_f64();
    let external = external_metrics(&truth, &labels)?;
    let sil = match grid.silhouette_max_rows {
        Some(m) => silhouette_subsampled(&reduced, &labels, m, seed),
        None => silhouette(&reduced, &labels),
    };
    Ok(CellOutput {
        n_rows: reduced.rows(),
        labels,
        scores: ValidityScores {
            external,
            silhouette: sil.ok(),
        },
        wall_seconds,
    })
}

/// Runs every (clusterer, balance, reducer) cell of the grid.
///
/// Results are ordered by group (clusterer, then balance mode, in grid order)
/// and then by reducer. A failing cell carries its error and the grid
/// continues. Every cell uses the same seed.
pub fn run_benchmark(data: &BenchmarkData, grid: &BenchmarkGrid, seed: u64) -> Vec<ClusterRun> {
    let k = data.k();
    let mut cells = Vec::new();
    for clusterer in &grid.clusterers {
        for &balance in &grid.balance {
            for reducer in &grid.reducers {
                cells.push((clusterer, balance, reducer));
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(clusterer, balance, reducer)| {
            let group = format!("{} on {} data", clusterer.tag(), balance);
            let outcome = run_cell(data, reducer, clusterer, balance, k, grid, seed);
            if let Err(e) = &outcome {
                log::warn!("{group} / {}: {e}", reducer.name);
            }
            let (n_rows, labels, scores, error, wall_seconds) = match outcome {
                Ok(c) => (c.n_rows, c.labels, Some(c.scores), None, c.wall_seconds),
                Err(e) => (0, Vec::new(), None, Some(e.to_string()), 0.0),
            };
            ClusterRun {
                group,
                reducer: reducer.name.clone(),
                clusterer: clusterer.tag(),
                balance,
                n_rows,
                k,
                scores,
                error,
                labels,
                wall_seconds,
            }
        })
        .collect()
}

/// Table-1 style CSV. Failed cells leave the score columns empty.
pub fn write_benchmark_csv<W: Write>(runs: &[ClusterRun], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "group",
        "reducer",
        "clusterer",
        "balance",
        "time_s",
        "homo",
        "compl",
        "v_meas",
        "ari",
        "ami",
        "silhouette",
    ])?;
    let f = |v: f64| format!("{v:.6}");
    for r in runs {
        let mut rec = vec![
            r.group.clone(),
            r.reducer.clone(),
            r.clusterer.clone(),
            r.balance.to_string(),
            format!("{:.3}", r.wall_seconds),
        ];
        match &r.scores {
            Some(s) => {
                let e = &s.external;
                rec.extend(
                    [
                        e.homogeneity,
                        e.completeness,
                        e.v_measure,
                        e.adjusted_rand,
                        e.adjusted_mutual_info,
                    ]
                    .map(f),
                );
                rec.push(s.silhouette.map(f).unwrap_or_default());
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 6)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{gaussian_blobs, BlobSpec};

    fn blobs() -> BenchmarkData {
        let (x, labels) = gaussian_blobs(&BlobSpec::isotropic(vec![40, 20, 10], 4, 10.0, 0.5), 3);
        BenchmarkData {
            row_ids: (0..x.rows()).map(|i| format!("r{i}")).collect(),
            features: x,
            labels,
            classes: vec!["a".into(), "b".into(), "c".into()],
        }
    }

    #[test]
    fn grid_shape_and_order() {
        let mut grid = BenchmarkGrid::default();
        grid.reducers[1].kind = ReducerKind::Pca {
            components: Components::Count(2),
        };
        let runs = run_benchmark(&blobs(), &grid, 7);
        assert_eq!(runs.len(), 8);
        let order: Vec<(String, String)> = runs.iter().map(|r| (r.group.clone(), r.reducer.clone())).collect();
        assert_eq!(order[0], ("k-means on imbalanced data".into(), "none".into()));
        assert_eq!(order[1], ("k-means on imbalanced data".into(), "PCA".into()));
        assert_eq!(order[2].0, "k-means on ros data");
        assert_eq!(order[4].0, "agglomerative (ward) on imbalanced data");
        for r in &runs {
            let s = r.scores.expect("cell succeeded");
            assert!(s.external.adjusted_rand >= 0.95, "{r:?}");
            assert!(r.wall_seconds >= 0.0);
        }
        assert_eq!(runs[2].n_rows, 120);
        let mut buf = Vec::new();
        write_benchmark_csv(&runs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 9);
    }

    #[test]
    fn failures_are_recorded() {
        let grid = BenchmarkGrid {
            reducers: vec![
                ReducerSpec {
                    name: "missing".into(),
                    kind: ReducerKind::Imported {
                        path: "/nonexistent/embedding.csv".into(),
                    },
                },
                ReducerSpec {
                    name: "none".into(),
                    kind: ReducerKind::None,
                },
            ],
            clusterers: vec![ClustererSpec::kmeans()],
            balance: vec![Balance::Imbalanced],
            silhouette_max_rows: None,
        };
        let runs = run_benchmark(&blobs(), &grid, 1);
        assert!(runs[0].error.is_some() && runs[0].scores.is_none());
        assert!(runs[1].scores.is_some());
        assert!(run_benchmark(
            &blobs(),
            &BenchmarkGrid {
                reducers: vec![],
                ..grid
            },
            1
        )
        .is_empty());
    }

    #[test]
    fn imported_embedding_with_ros() {
        let data = blobs();
        let emb = crate::dimred::pca_fit_transform(&data.features, Components::Count(2), &data.row_ids)
            .unwrap()
            .1;
        let dir = std::env::temp_dir().join(format!("terpscape-bench-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("emb.csv");
        crate::dimred::write_embedding(&emb, std::fs::File::create(&path).unwrap()).unwrap();
        let grid = BenchmarkGrid {
            reducers: vec![ReducerSpec {
                name: "imported".into(),
                kind: ReducerKind::Imported { path: path.clone() },
            }],
            clusterers: vec![ClustererSpec::kmeans()],
            balance: vec![Balance::Imbalanced, Balance::Ros],
            silhouette_max_rows: Some(50),
        };
        let runs = run_benchmark(&data, &grid, 2);
        std::fs::remove_dir_all(&dir).ok();
        assert!(runs.iter().all(|r| r.error.is_none()), "{runs:?}");
        assert_eq!(runs[1].n_rows, 120);
    }

    #[test]
    fn grid_config_parses() {
        let json = r#"{
            "reducers": [
                {"name": "raw", "method": "none"},
                {"name": "PCA0", "method": "pca", "components": {"count": 11}},
                {"name": "TSNE6", "method": "tsne", "perplexity": 50.0},
                {"name": "UMAP7", "method": "imported", "path": "umap.csv"}
            ],
            "clusterers": [{"algorithm": "kmeans"}, {"algorithm": "agglomerative", "linkage": "average"}],
            "balance": ["imbalanced", "ros"]
        }"#;
        let grid: BenchmarkGrid = serde_json::from_str(json).unwrap();
        assert_eq!(grid.reducers.len(), 4);
        assert_eq!(grid.clusterers[1], ClustererSpec::agglomerative(Linkage::Average));
    }
}
