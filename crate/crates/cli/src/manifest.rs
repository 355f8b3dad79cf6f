//! Artifact bookkeeping: every emitted file is recorded with its SHA-256
//! content hash in `manifest.json`.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::PathBuf;

#[derive(Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    spec_sha256: String,
    seed: u64,
    threads: usize,
    crate_version: &'a str,
    wall_time_s: f64,
    files: Vec<FileEntry>,
}

pub struct ArtifactWriter {
    out_dir: PathBuf,
    files: Vec<FileEntry>,
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

impl ArtifactWriter {
    pub fn new(out_dir: PathBuf) -> Self {
        ArtifactWriter {
            out_dir,
            files: Vec::new(),
        }
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents)
            .with_context(|| format!("writing artifact {}", path.display()))?;
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: hex_digest(contents),
            bytes: contents.len(),
        });
        Ok(())
    }

    pub fn finish(
        self,
        command: &str,
        spec_source: &str,
        seed: u64,
        threads: usize,
        elapsed: std::time::Duration,
    ) -> Result<()> {
        let manifest = Manifest {
            command,
            spec_sha256: hex_digest(spec_source.as_bytes()),
            seed,
            threads,
            crate_version: env!("CARGO_PKG_VERSION"),
            wall_time_s: elapsed.as_secs_f64(),
            files: self.files,
        };
        let path = self.out_dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
