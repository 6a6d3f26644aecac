//! Stage manifests: enough provenance to re-derive every artifact.
//!
//! A manifest lists the command, the hash of the full effective config and
//! the hashes of all input and output files. It contains no timestamps or
//! absolute paths, so reruns with identical inputs produce byte-identical
//! manifests.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

fn hex(digest: &[u8]) -> String {
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("cannot hash {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub fn sha256_text(text: &str) -> String {
    hex(&Sha256::digest(text.as_bytes()))
}

pub struct Manifest {
    command: String,
    config_hash: String,
    inputs: Vec<(String, String)>,
    outputs: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, config_canonical: &str) -> Self {
        Manifest {
            command: command.to_string(),
            config_hash: sha256_text(config_canonical),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, label: &str, path: &Path) -> Result<()> {
        self.inputs.push((label.to_string(), sha256_file(path)?));
        Ok(())
    }

    pub fn output(&mut self, label: &str, path: &Path) -> Result<()> {
        self.outputs.push((label.to_string(), sha256_file(path)?));
        Ok(())
    }

    /// Write `<dir>/MANIFEST`.
    pub fn write(mut self, dir: &Path) -> Result<()> {
        self.inputs.sort();
        self.outputs.sort();
        let mut text = String::new();
        let _ = writeln!(text, "command={}", self.command);
        let _ = writeln!(text, "config_sha256={}", self.config_hash);
        for (label, hash) in &self.inputs {
            let _ = writeln!(text, "input={label} sha256={hash}");
        }
        for (label, hash) in &self.outputs {
            let _ = writeln!(text, "output={label} sha256={hash}");
        }
        std::fs::write(dir.join("MANIFEST"), text)
            .with_context(|| format!("cannot write manifest in {}", dir.display()))?;
        Ok(())
    }
}
