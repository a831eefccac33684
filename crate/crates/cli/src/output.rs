//! CSV artifacts and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Fixed 17-significant-digit decimal form.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.16e}")
    }
}

/// Writes through a temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Collects artifacts written into one output directory.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    names: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            names: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> io::Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        self.file(name, &bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.file(name, &bytes)
    }

    fn file(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.names.push(name.to_string());
        Ok(())
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub threads: usize,
}

/// Metadata written next to the CSV files after a successful run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub experiment: String,
    pub config: BTreeMap<String, String>,
    pub config_sha256: String,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub timing: Timing,
    pub diagnostics: serde_json::Value,
    pub results: serde_json::Value,
}

pub const MANIFEST: &str = "manifest.json";

impl RunManifest {
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(&dir.join(MANIFEST), &bytes)
    }
}
