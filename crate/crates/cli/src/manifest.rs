//! Per-run manifest: effective configuration, its hash, and file digests.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn digest(path: &Path) -> anyhow::Result<FileDigest> {
    let mut file =
        BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = file
            .read(&mut buf)
            .with_context(|| format!("reading {}", path.display()))?;
        if n == 0 {
            break;
        }
        bytes += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok(FileDigest {
        path: path.display().to_string(),
        bytes,
        sha256: hex::encode(hasher.finalize()),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Value,
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub threads: usize,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// Builder collecting what a command read and wrote.
pub struct Recorder {
    command: String,
    config: Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(command: &str, config: impl Serialize) -> Self {
        Self {
            command: command.to_owned(),
            config: serde_json::to_value(config).expect("configs serialize"),
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_owned());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_owned());
    }

    pub fn primary_output(&self) -> Option<&Path> {
        self.outputs.first().map(PathBuf::as_path)
    }

    pub fn finish(self) -> anyhow::Result<Manifest> {
        // serde_json maps are sorted, so this is a canonical encoding.
        let canonical =
            serde_json::to_vec(&(&self.command, &self.config)).expect("values serialize");
        Ok(Manifest {
            tool: "orqa",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config: self.config,
            config_sha256: hex::encode(Sha256::digest(&canonical)),
            seed: self.seed,
            threads: rayon::current_num_threads(),
            inputs: self
                .inputs
                .iter()
                .map(|p| digest(p))
                .collect::<anyhow::Result<_>>()?,
            outputs: self
                .outputs
                .iter()
                .map(|p| digest(p))
                .collect::<anyhow::Result<_>>()?,
        })
    }
}

/// `<output>.manifest.json`.
pub fn default_path(primary_output: &Path) -> PathBuf {
    let mut name = primary_output.file_name().unwrap_or_default().to_owned();
    name.push(".manifest.json");
    primary_output.with_file_name(name)
}
