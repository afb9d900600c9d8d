//! Output-directory plumbing: the artifact envelope, the lockfile and the
//! timings log.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub const DATASET: &str = "dataset.csv";
pub const INGEST: &str = "ingest.json";
pub const PROFILE: &str = "profile.json";
pub const CLUSTER: &str = "cluster.json";
pub const CLASSIFY: &str = "classify.json";
pub const REPORT: &str = "report.json";
pub const SUMMARY: &str = "summary.txt";
pub const TIMINGS: &str = "timings.log";
const LOCK: &str = ".terpscape.lock";

/// Common wrapper of every JSON artifact.
#[derive(Debug, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    /// Hash of the configuration that produced the dataset the artifact was computed from.
    pub dataset_hash: String,
    pub seed: u64,
    pub data: T,
}

/// Exclusive ownership of an output directory, released on drop.
pub struct OutDir {
    pub path: PathBuf,
    lock: PathBuf,
}

impl OutDir {
    pub fn acquire(path: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let lock = path.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(CliError::Usage(format!(
                    "{} is in use by another run (remove {} if that run is gone)",
                    path.display(),
                    lock.display()
                )));
            }
            Err(e) => return Err(CliError::Usage(format!("{}: {e}", lock.display()))),
        }
        Ok(Self {
            path: path.to_path_buf(),
            lock,
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let p = self.file(name);
        File::create(&p).map(BufWriter::new).map_err(|e| CliError::io(&p, e))
    }

    pub fn write_json<T: Serialize>(
        &self,
        name: &str,
        cfg: &RunConfig,
        command: &str,
        data: T,
    ) -> Result<(), CliError> {
        self.write_json_for(name, cfg, command, cfg.dataset_hash(), data)
    }

    pub fn write_json_for<T: Serialize>(
        &self,
        name: &str,
        cfg: &RunConfig,
        command: &str,
        dataset_hash: String,
        data: T,
    ) -> Result<(), CliError> {
        let artifact = Artifact {
            tool: "terpscape".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: cfg.config_hash(),
            dataset_hash,
            seed: cfg.seed(),
            data,
        };
        let mut text = serde_json::to_string_pretty(&artifact).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        let p = self.file(name);
        fs::write(&p, text).map_err(|e| CliError::io(&p, e))
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.file(name);
        fs::write(&p, text).map_err(|e| CliError::io(&p, e))
    }

    /// Reads an upstream artifact; a missing file is a data error naming it.
    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<Artifact<T>, CliError> {
        let p = self.file(name);
        let text = fs::read_to_string(&p).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::Data(format!("missing upstream artifact {}", p.display()))
            } else {
                CliError::io(&p, e)
            }
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
    }

    /// Appends one line per timed stage. Kept apart from the JSON artifacts
    /// so those stay reproducible.
    pub fn log_timing(&self, command: &str, stage: &str, seconds: f64) {
        let p = self.file(TIMINGS);
        let line = format!("{command}\t{stage}\t{seconds:.3}\n");
        if let Err(e) = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&p)
            .and_then(|mut f| f.write_all(line.as_bytes()))
        {
            log::warn!("could not write {}: {e}", p.display());
        }
    }
}

impl Drop for OutDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}
