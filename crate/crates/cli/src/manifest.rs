use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use specmon_core::datasets::{list_recordings, sidecar_path};
use specmon_core::synthgen::CORPUS_MANIFEST;
use specmon_core::{Error, Result};

/// File name of the run manifest written into every output directory.
pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// What a run read, how it was configured, and what it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub config: Value,
    pub threads: usize,
    pub platform: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv: std::env::args().collect(),
            seed,
            config,
            threads: rayon::current_num_threads(),
            platform: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(hash_file(path)?);
        Ok(())
    }

    /// Every recording, sidecar and corpus manifest under `dir`.
    pub fn input_corpus(&mut self, dir: &Path) -> Result<()> {
        for data in list_recordings(dir)? {
            self.input(&data)?;
            let meta = sidecar_path(&data);
            if meta.is_file() {
                self.input(&meta)?;
            }
        }
        let manifest = dir.join(CORPUS_MANIFEST);
        if manifest.is_file() {
            self.input(&manifest)?;
        }
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(hash_file(path)?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("run manifest serializes");
        write_atomic(&dir.join(RUN_MANIFEST), text.as_bytes())
    }
}

pub fn hash_file(path: &Path) -> Result<FileHash> {
    let mut f = fs::File::open(path).map_err(|e| io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(FileHash {
        path: path.to_path_buf(),
        sha256: format!("{:x}", hasher.finalize()),
    })
}

pub fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io(path, e))
}
