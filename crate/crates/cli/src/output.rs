//! Run configuration, config hashing and the output directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use levywave_core::ModelDocument;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Usage or configuration problem; maps to exit code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Everything that determines a run's numbers. Thread count and output
/// location are left out on purpose: they must not change results.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub model: ModelDocument,
    pub model_path: Option<PathBuf>,
    pub seed: u64,
    pub params: Value,
}

impl RunConfig {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = json!({
            "command": self.command,
            "model": self.model,
            "seed": self.seed,
            "params": self.params,
        });
        let bytes = serde_json::to_vec(&canonical).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Output directory that refuses to overwrite unless forced.
#[derive(Debug)]
pub struct Output {
    dir: PathBuf,
    seed: u64,
    hash: String,
}

impl Output {
    /// Creates `dir` and checks up front that none of `files` exist.
    pub fn prepare(dir: &Path, force: bool, files: &[&str], config: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        if !force {
            let clash: Vec<String> = files
                .iter()
                .map(|f| dir.join(f))
                .filter(|p| p.exists())
                .map(|p| p.display().to_string())
                .collect();
            if !clash.is_empty() {
                return Err(UsageError(format!(
                    "refusing to overwrite {} (pass --force to replace)",
                    clash.join(", ")
                ))
                .into());
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            seed: config.seed,
            hash: config.hash(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    /// CSV with two `#` comment lines carrying the seed and config hash.
    pub fn write_csv<R: AsRef<[String]>>(
        &self,
        name: &str,
        header: &[&str],
        rows: &[R],
    ) -> Result<()> {
        let mut buf = format!("# seed={}\n# config_hash={}\n", self.seed, self.hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for row in rows {
                w.write_record(row.as_ref())?;
            }
            w.flush()?;
        }
        let path = self.path(name);
        fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))
    }

    /// Pretty JSON with `seed` and `config_hash` added at the top level.
    pub fn write_json(&self, name: &str, mut value: Value) -> Result<()> {
        if let Value::Object(map) = &mut value {
            map.insert("seed".into(), json!(self.seed));
            map.insert("config_hash".into(), json!(self.hash));
        }
        let path = self.path(name);
        let text = serde_json::to_string_pretty(&value)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

/// Shortest round-trip text for a float.
pub fn num(x: f64) -> String {
    format!("{x}")
}
