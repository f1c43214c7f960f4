//! Run directories and the manifest that makes every output file traceable.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use dicke_core::grid::PolarGrid;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::settings::Settings;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    /// Effective settings, defaults included.
    pub params: Settings,
    pub tolerances: BTreeMap<String, f64>,
    pub grid: Option<PolarGrid>,
    pub thresholds: BTreeMap<String, f64>,
    /// Content hashes of inputs: config text, cache keys of reused spectra and maps.
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<OutputFile>,
    pub audits: Vec<Audit>,
    pub notes: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, params: Settings) -> Self {
        Self {
            command: command.into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            params,
            tolerances: BTreeMap::new(),
            grid: None,
            thresholds: BTreeMap::new(),
            input_hashes: BTreeMap::new(),
            outputs: Vec::new(),
            audits: Vec::new(),
            notes: Vec::new(),
            started_unix: unix_now(),
            finished_unix: 0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::config("manifest", e.to_string()))
    }

    pub fn audit(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.audits.push(Audit {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn failed_audits(&self) -> usize {
        self.audits.iter().filter(|a| !a.passed).count()
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// 12 significant digits.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    format!("{x:.11e}")
}

/// Output directory plus the manifest being assembled for it.
pub struct RunDir {
    pub path: PathBuf,
    pub manifest: RunManifest,
}

impl RunDir {
    pub fn create(path: PathBuf, manifest: RunManifest) -> CliResult<Self> {
        fs::create_dir_all(&path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
        Ok(Self { path, manifest })
    }

    /// Write a CSV with `header`; each row is already formatted.
    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> CliResult<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(format!("writing {name}"), e.into_error()))?;
        self.bytes(name, &bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).expect("output serialises");
        self.bytes(name, text.as_bytes())
    }

    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.path.join(name);
        let file = fs::File::create(&path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
        let mut w = BufWriter::new(file);
        w.write_all(bytes)
            .and_then(|_| w.flush())
            .and_then(|_| w.get_ref().sync_all())
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        self.manifest.outputs.retain(|o| o.name != name);
        self.manifest.outputs.push(OutputFile {
            name: name.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Write the manifest last; it lists everything above.
    pub fn finish(mut self) -> CliResult<RunManifest> {
        self.manifest.finished_unix = unix_now();
        let path = self.path.join(MANIFEST_FILE);
        fs::write(&path, self.manifest.to_json()).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        Ok(self.manifest)
    }
}

pub fn read_manifest(dir: &Path) -> CliResult<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    RunManifest::from_json(&text)
}
