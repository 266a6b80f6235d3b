//! Output directories and their run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const OUT_ENV: &str = "HIERLSTM_OUT";
const DEFAULT_OUT_ROOT: &str = "hierlstm-out";

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a, C: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub tool_version: &'a str,
    pub config: &'a C,
    pub seeds: &'a [u64],
    pub inputs: &'a [FileDigest],
    pub outputs: &'a [FileDigest],
    pub duration_secs: f64,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

/// One command invocation owning one output directory.
pub struct Run {
    command: &'static str,
    dir: PathBuf,
    started: Instant,
    inputs: Vec<FileDigest>,
    outputs: BTreeMap<String, ()>,
}

impl Run {
    /// Uses `out` if given, else `$HIERLSTM_OUT/<command>`, else
    /// `./hierlstm-out/<command>`.
    pub fn start(command: &'static str, out: Option<&Path>) -> Result<Self, CliError> {
        let dir = match out {
            Some(d) => d.to_path_buf(),
            None => std::env::var_os(OUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
                .join(command),
        };
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self {
            command,
            dir,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let sha256 = sha256_file(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    /// Path for an output file, recorded for the manifest digest list.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.insert(name.to_string(), ());
        self.dir.join(name)
    }

    pub fn finish<C: Serialize>(self, config: &C, seeds: &[u64]) -> Result<PathBuf, CliError> {
        let outputs = self
            .outputs
            .keys()
            .map(|name| {
                let p = self.dir.join(name);
                sha256_file(&p).map(|sha256| FileDigest {
                    path: name.clone(),
                    sha256,
                })
            })
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| CliError::io(&self.dir, e))?;
        let manifest = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION"),
            config,
            seeds,
            inputs: &self.inputs,
            outputs: &outputs,
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = self.dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::data(e.to_string()))?;
        fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(self.dir)
    }
}
