//! Writes a sweep's artifacts and its manifest.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SweepConfig;
use crate::engine::{execute, Artifacts};
use crate::error::WorkbenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub task: String,
    pub file: String,
    pub columns: Vec<String>,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTiming {
    pub task: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub parallel: bool,
    pub config: SweepConfig,
    pub tables: Vec<TableEntry>,
    pub timings: Vec<TaskTiming>,
    pub total_wall_time_s: f64,
    /// Every file written except the manifest itself.
    pub files: Vec<FileEntry>,
}

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_ECHO: &str = "config.toml";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs the sweep and writes tables, documents, figures, the config echo and the
/// manifest into `cfg.out`.
pub fn run(cfg: &SweepConfig, format: Format) -> Result<Manifest, WorkbenchError> {
    let start = Instant::now();
    let artifacts = execute(cfg)?;
    let total = start.elapsed().as_secs_f64();
    write(cfg, &artifacts, format, total)
}

pub fn write(cfg: &SweepConfig, a: &Artifacts, format: Format, total_wall_time_s: f64) -> Result<Manifest, WorkbenchError> {
    let dir = &cfg.out;
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<(), WorkbenchError> {
        fs::write(dir.join(&name), &bytes)?;
        files.push(FileEntry { path: name, sha256: sha256_hex(&bytes), bytes: bytes.len() });
        Ok(())
    };
    put(CONFIG_ECHO.into(), cfg.to_toml().into_bytes())?;
    let mut tables = Vec::new();
    for t in &a.tables {
        let file = format!("{}.{}", t.name, format.extension());
        let body = match format {
            Format::Csv => t.to_csv(),
            Format::Json => pretty(&t.to_json()),
        };
        put(file.clone(), body.into_bytes())?;
        tables.push(TableEntry { task: t.name.clone(), file, columns: t.columns.clone(), rows: t.rows.len() });
    }
    for (name, doc) in &a.documents {
        put(name.clone(), pretty(doc).into_bytes())?;
    }
    for (name, svg) in &a.figures {
        put(name.clone(), svg.clone().into_bytes())?;
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        parallel: cfg!(feature = "parallel"),
        config: cfg.clone(),
        tables,
        timings: a.timings.iter().map(|(t, s)| TaskTiming { task: t.id().into(), wall_time_s: *s }).collect(),
        total_wall_time_s,
        files,
    };
    fs::write(dir.join(MANIFEST), pretty(&serde_json::to_value(&manifest).expect("manifest serializes")))?;
    Ok(manifest)
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON value serializes");
    s.push('\n');
    s
}

/// Reads a config file; unreadable files are configuration errors.
pub fn read_config(path: &Path) -> Result<SweepConfig, WorkbenchError> {
    let text = fs::read_to_string(path)
        .map_err(|e| WorkbenchError::Config(format!("cannot read {}: {e}", path.display())))?;
    SweepConfig::from_toml(&text).map_err(|e| match e {
        WorkbenchError::Config(m) => WorkbenchError::Config(format!("{}: {m}", path.display())),
        e => e,
    })
}
