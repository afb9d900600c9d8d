use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use terpscape::classify::{Algorithm, ModelSpec, ParamSpace};
use terpscape::cluster::{BenchmarkGrid, ReducerKind};
use terpscape::ingest::SchemaConfig;
use terpscape::profile::ProfileConfig;
use terpscape::SubclassLabel;

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 42;
pub const SEED_ENV: &str = "TERPSCAPE_SEED";
const DEFAULT_SUPERCLASS: &str = "Lipids and lipid-like molecules";

/// The config file as written by the user.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    /// JSON or TOML schema file; the built-in schema when absent.
    pub schema: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub ingest: IngestSection,
    pub profile: ProfileConfig,
    pub cluster: ClusterSection,
    pub classify: ClassifySection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub superclass: String,
    pub subclasses: Vec<SubclassLabel>,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self {
            superclass: DEFAULT_SUPERCLASS.into(),
            subclasses: SubclassLabel::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub subclasses: Vec<SubclassLabel>,
    pub grid: BenchmarkGrid,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            subclasses: SubclassLabel::CLUSTERING.to_vec(),
            grid: BenchmarkGrid::default(),
        }
    }
}

/// A model given either by algorithm name or as a full spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelEntry {
    Name(String),
    Spec(ModelSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub subclasses: Vec<SubclassLabel>,
    pub models: Vec<ModelEntry>,
    pub folds: usize,
    pub test_fraction: f64,
    pub search: Option<SearchSection>,
}

impl Default for ClassifySection {
    fn default() -> Self {
        Self {
            subclasses: SubclassLabel::CLASSIFICATION.to_vec(),
            models: Algorithm::ALL
                .iter()
                .map(|a| ModelEntry::Name(a.name().into()))
                .collect(),
            folds: 5,
            test_fraction: 0.25,
            search: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub n_iter: usize,
    pub folds: usize,
    /// Per-algorithm spaces; algorithms not listed use the built-in space.
    pub spaces: std::collections::BTreeMap<String, ParamSpace>,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            n_iter: 20,
            folds: 5,
            spaces: Default::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

/// Everything that determines an artifact's content. Hashed into each artifact.
#[derive(Clone, Debug, Serialize)]
pub struct Resolved {
    pub input: Option<PathBuf>,
    pub schema: SchemaConfig,
    pub seed: u64,
    pub ingest: IngestSection,
    pub profile: ProfileConfig,
    pub cluster: ClusterSection,
    pub classify: ClassifySection,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub resolved: Resolved,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub models: Vec<ModelSpec>,
}

fn parse_text<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, CliError> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if is_json {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn resolve_against(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn seed_from_env() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not a non-negative integer"))),
        Err(_) => Ok(None),
    }
}

impl RunConfig {
    /// Loads `path` (TOML, or JSON by extension) and applies `overrides`.
    ///
    /// Relative paths in the file are taken relative to the file itself.
    /// Seed precedence: flag, then file, then the environment, then 42.
    pub fn load(path: &Path, overrides: Overrides) -> Result<Self, CliError> {
        let file: FileConfig = parse_text(path, &read_file(path)?)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let input = overrides.input.or(file.input.map(|p| resolve_against(&base, p)));
        let out = overrides
            .out
            .or(file.out.map(|p| resolve_against(&base, p)))
            .unwrap_or_else(|| PathBuf::from("terpscape-out"));
        let schema = match file.schema {
            Some(p) => {
                let p = resolve_against(&base, p);
                let schema: SchemaConfig = parse_text(&p, &read_file(&p)?)?;
                schema
                    .validate()
                    .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                schema
            }
            None => SchemaConfig::default(),
        };
        let seed = match overrides.seed.or(file.seed) {
            Some(s) => s,
            None => seed_from_env()?.unwrap_or(DEFAULT_SEED),
        };
        let workers = overrides.workers.or(file.workers);
        if workers == Some(0) {
            return Err(CliError::Usage("workers must be at least 1".into()));
        }
        let mut cluster = file.cluster;
        for r in &mut cluster.grid.reducers {
            if let ReducerKind::Imported { path } = &mut r.kind {
                *path = resolve_against(&base, std::mem::take(path));
            }
        }
        let classify = file.classify;
        if classify.folds < 2 {
            return Err(CliError::Usage(format!(
                "classify.folds must be at least 2, got {}",
                classify.folds
            )));
        }
        if !(classify.test_fraction > 0.0 && classify.test_fraction < 1.0) {
            return Err(CliError::Usage(format!(
                "classify.test_fraction must be in (0, 1), got {}",
                classify.test_fraction
            )));
        }
        let models = classify
            .models
            .iter()
            .map(|m| {
                let spec = match m {
                    ModelEntry::Name(n) => n
                        .parse::<Algorithm>()
                        .map(ModelSpec::new)
                        .map_err(|e| CliError::Usage(format!("classify.models: {e}")))?,
                    ModelEntry::Spec(s) => s.clone(),
                };
                spec.validate()
                    .map_err(|e| CliError::Usage(format!("classify.models: {e}")))?;
                Ok(spec)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(Self {
            resolved: Resolved {
                input,
                schema,
                seed,
                ingest: file.ingest,
                profile: file.profile,
                cluster,
                classify,
            },
            out,
            workers,
            models,
        })
    }

    pub fn seed(&self) -> u64 {
        self.resolved.seed
    }

    /// SHA-256 of the resolved configuration.
    pub fn config_hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(&self.resolved).expect("config serializes"))
    }

    /// SHA-256 of the parts that determine the ingested dataset.
    pub fn dataset_hash(&self) -> String {
        let r = &self.resolved;
        sha256_hex(&serde_json::to_vec(&(&r.input, &r.schema, &r.ingest)).expect("config serializes"))
    }

    pub fn input(&self) -> Result<&Path, CliError> {
        let p = self
            .resolved
            .input
            .as_deref()
            .ok_or_else(|| CliError::Usage("no input file: set `input` in the config or pass --input".into()))?;
        if !p.is_file() {
            return Err(CliError::Usage(format!("input file not found: {}", p.display())));
        }
        Ok(p)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_config_parses() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/full-benchmark.toml");
        let cfg = RunConfig::load(&path, Overrides::default()).unwrap();
        assert_eq!(cfg.resolved.cluster.grid.reducers.len(), 5);
        assert_eq!(cfg.models.len(), 5);
        assert_eq!(cfg.seed(), 42);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "sed = 4\n").unwrap();
        assert!(matches!(RunConfig::load(&p, Overrides::default()), Err(CliError::Usage(_))));
    }
}
