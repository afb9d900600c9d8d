//! Chemical-space profiling and machine-learning benchmarks for
//! natural-product descriptor tables.

pub mod classify;
pub mod cluster;
pub mod dimred;
pub mod error;
pub mod ingest;
pub mod matrix;
pub mod preprocess;
pub mod profile;
pub mod seed;
pub mod synthetic;

pub use cluster::{ClusterAssignment, ClusterRun, ValidityScores};
pub use dimred::Embedding;
pub use error::{Error, Result};
pub use ingest::{MoleculeRecord, RecordSet, SchemaConfig, SubclassLabel};
pub use matrix::Matrix;
