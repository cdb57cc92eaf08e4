//! Run provenance and file output.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use rkct::recon::ImageRaster;

/// Parameters of one invocation, hashed into every file it writes.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: String,
    pub params: Vec<(String, String)>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        RunConfig {
            command: command.to_string(),
            params: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    /// SHA-256 over `command` and the `key=value` lines in insertion order.
    /// Output paths are deliberately not part of it.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.command.as_bytes());
        h.update(b"\n");
        for (k, v) in &self.params {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Header comment lines: command, hash, then each parameter.
    pub fn comments(&self) -> Vec<String> {
        let mut c = vec![
            format!("command: {}", self.command),
            format!("config_hash: {}", self.hash()),
        ];
        c.extend(self.params.iter().map(|(k, v)| format!("{k}: {v}")));
        c
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Splits `--out a.pgm[,b.csv]` into the PGM and CSV paths; the CSV
/// defaults to the PGM path with its extension replaced.
pub fn image_paths(out: &str) -> std::result::Result<(PathBuf, PathBuf), String> {
    let mut parts = out.split(',').map(str::trim);
    let pgm = PathBuf::from(
        parts
            .next()
            .filter(|p| !p.is_empty())
            .ok_or("empty output path")?,
    );
    let csv = match parts.next() {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        Some(_) => return Err("empty CSV path".into()),
        None => pgm.with_extension("csv"),
    };
    if parts.next().is_some() {
        return Err("expected at most two comma-separated output paths".into());
    }
    if pgm == csv {
        return Err("PGM and CSV outputs must differ".into());
    }
    Ok((pgm, csv))
}

/// Writes the lossy PGM and the lossless CSV of `img`.
pub fn write_image(img: &ImageRaster, pgm: &Path, csv: &Path, comments: &[String]) -> Result<()> {
    write_file(pgm, &img.to_pgm(comments))?;
    write_file(csv, img.to_csv(comments).as_bytes())
}
