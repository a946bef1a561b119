//! Per-run output directories and their manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{Local, SecondsFormat};
use serde::Serialize;
use serde_json::{Map, Value};

/// Environment variable naming the output root.
pub const OUTPUT_DIR_ENV: &str = "SECO_INR_OUTPUT_DIR";
pub const MANIFEST_NAME: &str = "manifest.json";

/// Picks the output root: the `--out` flag, then the environment, then the
/// config's `output_dir`.
pub fn output_root(flag: Option<&Path>, configured: &Path) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured.to_path_buf(),
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub created: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Input files and the resolved config, keyed by role.
    pub inputs: Map<String, Value>,
    /// Files written by the run, relative to its directory.
    pub artifacts: Vec<String>,
    /// Headline numbers of the run.
    pub summary: Map<String, Value>,
}

/// A freshly created run directory. Files are registered as they are named
/// and listed in the manifest written by [`RunDir::finish`].
#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
    pub manifest: Manifest,
}

impl RunDir {
    /// Creates `<root>/<command>-<timestamp>`, adding a numeric suffix when
    /// two runs start within the same second.
    pub fn create(root: &Path, command: &str) -> Result<Self> {
        let now = Local::now();
        fs::create_dir_all(root).with_context(|| format!("cannot create output root {}", root.display()))?;
        let stem = format!("{command}-{}", now.format("%Y%m%d-%H%M%S"));
        let mut path = root.join(&stem);
        let mut n = 1;
        loop {
            match fs::create_dir(&path) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    path = root.join(format!("{stem}-{n}"));
                    n += 1;
                }
                Err(e) => return Err(e).with_context(|| format!("cannot create {}", path.display())),
            }
        }
        Ok(Self {
            path,
            manifest: Manifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION"),
                created: now.to_rfc3339_opts(SecondsFormat::Secs, false),
                seed: None,
                inputs: Map::new(),
                artifacts: Vec::new(),
                summary: Map::new(),
            },
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Path for a new artifact, recorded in the manifest.
    pub fn artifact(&mut self, name: &str) -> PathBuf {
        self.manifest.artifacts.push(name.to_string());
        self.path.join(name)
    }

    pub fn input(&mut self, role: &str, value: impl Serialize) -> Result<()> {
        self.manifest.inputs.insert(role.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn summary(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.manifest.summary.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    /// Writes the manifest and returns the run directory.
    pub fn finish(self) -> Result<PathBuf> {
        let path = self.path.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, text + "\n").with_context(|| format!("cannot write {}", path.display()))?;
        Ok(self.path)
    }
}
