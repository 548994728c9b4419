use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use flowtx_core::TrainConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// A file read or written by a command.
#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path) -> CliResult<Self> {
        let data = fs::read(path).map_err(|source| CliError::File { path: path.into(), source })?;
        Ok(Self {
            path: path.into(),
            bytes: data.len() as u64,
            sha256: hex::encode(Sha256::digest(&data)),
        })
    }
}

/// Everything needed to rerun a command: its resolved options and config,
/// plus checksums of what it read and wrote.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    pub options: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub started_at: String,
    pub duration_secs: f64,
}

pub struct Recorder {
    command: &'static str,
    started: Instant,
    started_at: String,
}

impl Recorder {
    pub fn start(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            started_at: chrono::Utc::now().to_rfc3339(),
        }
    }

    pub fn finish(
        self,
        options: &impl Serialize,
        config: Option<TrainConfig>,
        inputs: &[&Path],
        outputs: &[&Path],
    ) -> CliResult<RunManifest> {
        Ok(RunManifest {
            tool: format!("flowtx {}", env!("CARGO_PKG_VERSION")),
            command: self.command.to_string(),
            options: serde_json::to_value(options).expect("options serialize"),
            seed: config.as_ref().map(|c| c.seed),
            config,
            inputs: inputs.iter().map(|p| Artifact::of(p)).collect::<CliResult<_>>()?,
            outputs: outputs.iter().map(|p| Artifact::of(p)).collect::<CliResult<_>>()?,
            started_at: self.started_at,
            duration_secs: self.started.elapsed().as_secs_f64(),
        })
    }
}

impl RunManifest {
    /// Writes to `path`, or to standard error when there is none.
    pub fn emit(&self, path: Option<&Path>) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        match path {
            Some(p) => fs::write(p, json + "\n").map_err(|source| CliError::File { path: p.into(), source }),
            None => {
                let _ = writeln!(std::io::stderr(), "{json}");
                Ok(())
            }
        }
    }
}

/// `d.csv` → `d.csv.manifest.json`.
pub fn beside(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
