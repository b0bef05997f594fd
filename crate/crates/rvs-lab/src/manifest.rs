//! Run manifests: every command writes one `manifest.json` into its output
//! directory recording the exact invocation, the resolved settings, the
//! seeds, and content hashes of every input and output file — enough to
//! audit what a run saw and to rerun it.

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// File name of the manifest inside an output directory.
pub const MANIFEST_FILE: &str = "manifest.json";

/// Version stamp recorded in manifests.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A file the run read or wrote, pinned by content hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileStamp {
    pub path: String,
    pub sha256: String,
}

/// Record of one command execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Subcommand name ("collect", "train", ...).
    pub command: String,
    /// Full argument vector as invoked; rerunning it reproduces the run.
    pub argv: Vec<String>,
    pub seeds: Vec<u64>,
    /// Fully resolved settings after defaults, config file, and flag
    /// overrides have been merged.
    pub config: serde_json::Value,
    pub inputs: Vec<FileStamp>,
    pub outputs: Vec<FileStamp>,
    /// Unix time the command started, in seconds.
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
}

/// SHA-256 of a file's bytes, lowercase hex.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn stamp(path: &Path) -> Result<FileStamp> {
    Ok(FileStamp {
        path: path.display().to_string(),
        sha256: file_sha256(path)?,
    })
}

/// Seconds since the Unix epoch; used for manifest stamps and timestamped
/// analysis file names.
pub fn unix_timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Collects a [`RunManifest`] over the lifetime of one command.
pub struct ManifestBuilder {
    command: String,
    argv: Vec<String>,
    seeds: Vec<u64>,
    config: serde_json::Value,
    inputs: Vec<FileStamp>,
    started_unix: u64,
    t0: Instant,
}

impl ManifestBuilder {
    /// Starts the clock. `argv` should be the process arguments verbatim.
    pub fn new(command: &str, argv: Vec<String>) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            argv,
            seeds: Vec::new(),
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            started_unix: unix_timestamp(),
            t0: Instant::now(),
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seeds.push(seed);
        self
    }

    /// Records the fully resolved settings the run actually used.
    pub fn config<T: Serialize>(&mut self, config: &T) -> Result<&mut Self> {
        self.config = serde_json::to_value(config)
            .map_err(|e| Error::InvalidArgument(format!("unserializable config: {e}")))?;
        Ok(self)
    }

    /// Hashes an input file as it is right now.
    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.inputs.push(stamp(path)?);
        Ok(self)
    }

    /// Stops the clock, hashes the output files, and writes
    /// `manifest.json` into `out_dir`. Returns the manifest written.
    pub fn finish(self, out_dir: &Path, outputs: &[&Path]) -> Result<RunManifest> {
        let manifest = RunManifest {
            tool_version: TOOL_VERSION.to_string(),
            command: self.command,
            argv: self.argv,
            seeds: self.seeds,
            config: self.config,
            inputs: self.inputs,
            outputs: outputs.iter().map(|p| stamp(p)).collect::<Result<_>>()?,
            started_unix: self.started_unix,
            wall_clock_seconds: self.t0.elapsed().as_secs_f64(),
        };
        manifest.write(out_dir)?;
        Ok(manifest)
    }
}

impl RunManifest {
    /// Writes the manifest as pretty JSON to `dir/manifest.json`,
    /// replacing any previous manifest so the directory always holds
    /// exactly one.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidArgument(format!("unserializable manifest: {e}")))?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    /// Reads `dir/manifest.json`.
    pub fn load(dir: &Path) -> Result<RunManifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            location: format!("line {}", e.line()),
            message: e.to_string(),
        })
    }

    /// Checks every recorded stamp (inputs and outputs) against the files
    /// on disk; returns the paths whose hash no longer matches.
    pub fn stale_stamps(&self) -> Result<Vec<String>> {
        let mut stale = Vec::new();
        for s in self.inputs.iter().chain(&self.outputs) {
            if file_sha256(Path::new(&s.path))? != s.sha256 {
                stale.push(s.path.clone());
            }
        }
        Ok(stale)
    }
}
