//! Report envelopes, CSV tables and the output-directory lock.

use crate::config::ExperimentConfig;
use crate::CliError;
use ergolab_core::pressure::Verdict;
use ergolab_core::ValueInterval;
use serde::Serialize;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub verdict: Verdict,
    /// Informational checks do not affect the exit code.
    pub asserted: bool,
    pub margin: Option<ValueInterval>,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, verdict: Verdict, margin: Option<ValueInterval>, detail: String) -> Self {
        Self { name: name.into(), verdict, asserted: true, margin, detail }
    }

    pub fn flag(name: &str, ok: bool, detail: String) -> Self {
        Self::new(name, if ok { Verdict::Pass } else { Verdict::Fail }, None, detail)
    }

    /// `|value - target| <= tol`, with margin `tol - |value - target|`.
    pub fn close(name: &str, value: f64, target: f64, tol: f64) -> Self {
        let m = tol - (value - target).abs();
        Self::new(
            name,
            if m >= 0.0 { Verdict::Pass } else { Verdict::Fail },
            Some(ValueInterval::point(m)),
            format!("value {value}, target {target}, tolerance {tol}"),
        )
    }

    pub fn informational(mut self) -> Self {
        self.asserted = false;
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(CliError::io)?;
        for r in &self.rows {
            w.write_record(r).map_err(CliError::io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// What a subcommand produces before it is wrapped in an envelope.
#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub results: serde_json::Value,
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub started: String,
    pub finished: String,
    pub elapsed_ms: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct Body {
    pub command: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub verdict: Verdict,
    pub checks: Vec<Check>,
    pub results: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct Envelope {
    pub meta: Meta,
    pub body: Body,
}

pub fn overall(checks: &[Check]) -> Verdict {
    checks.iter().filter(|c| c.asserted).fold(Verdict::Pass, |v, c| v.and(c.verdict))
}

pub fn now() -> (OffsetDateTime, String) {
    let t = OffsetDateTime::now_utc();
    (t, t.format(&Rfc3339).unwrap_or_default())
}

impl Envelope {
    pub fn body_json(&self) -> String {
        serde_json::to_string_pretty(&self.body).expect("body serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Exclusive lock on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
    _file: File,
}

pub const LOCK_NAME: &str = ".ergolab.lock";

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(CliError::io)?;
        let path = dir.join(LOCK_NAME);
        let file = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                CliError::Io(format!("{} is locked by another run ({} exists)", dir.display(), path.display()))
            } else {
                CliError::io(e)
            }
        })?;
        Ok(Self { path, _file: file })
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Paths written for `--out`: a `.json` file, a `.csv` file, or a directory.
pub fn output_paths(out: &Path, tables: &[Table]) -> (PathBuf, PathBuf, Vec<PathBuf>) {
    let ext = out.extension().and_then(|e| e.to_str()).unwrap_or("");
    let (dir, stem, json) = match ext {
        "json" | "csv" => {
            let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
            let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report").to_string();
            let json = dir.join(format!("{stem}.json"));
            (dir, stem, json)
        }
        _ => (out.to_path_buf(), "report".to_string(), out.join("report.json")),
    };
    let csvs = tables
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if ext == "csv" && i == 0 {
                out.to_path_buf()
            } else {
                dir.join(format!("{stem}.{}.csv", t.name))
            }
        })
        .collect();
    (dir, json, csvs)
}

pub fn write_outputs(out: &Path, env: &Envelope, tables: &[Table]) -> Result<Vec<PathBuf>, CliError> {
    let (dir, json, csvs) = output_paths(out, tables);
    let _lock = OutputLock::acquire(&dir)?;
    fs::write(&json, env.to_json()).map_err(CliError::io)?;
    let mut written = vec![json];
    for (t, p) in tables.iter().zip(csvs) {
        fs::write(&p, t.to_csv()?).map_err(CliError::io)?;
        written.push(p);
    }
    Ok(written)
}
