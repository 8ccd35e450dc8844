//! CSV tables and run manifests.
//!
//! Floats are written with Rust's shortest round-trip formatting, missing
//! values as empty fields, rows terminated by `\n`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::{GlobalErrorRow, RowStatus, SeriesRow, SweepRow};

pub const SWEEP_HEADER: [&str; 6] = ["method", "h", "omega", "h_omega_over_pi", "value", "status"];
pub const GLOBAL_ERROR_HEADER: [&str; 7] = ["method", "h", "omega", "t", "err_x0", "err_y0", "status"];

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// A header plus string records, ready to be written.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv_string()?)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub(crate) fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: PathBuf::from(path),
        message: e.to_string(),
    }
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(&SWEEP_HEADER);
    for r in rows {
        t.push(vec![
            r.method.clone(),
            fmt_f64(r.h),
            fmt_f64(r.omega),
            fmt_f64(r.h_omega_over_pi),
            fmt_opt(r.value),
            r.status.to_string(),
        ]);
    }
    t
}

/// Columns `t, I1, …, Iℓ, I, H`.
pub fn series_table(rows: &[SeriesRow], ell: usize) -> Table {
    let mut header = vec!["t".to_string()];
    header.extend((1..=ell).map(|j| format!("I{j}")));
    header.extend(["I".to_string(), "H".to_string()]);
    let mut t = Table::new(&header);
    for r in rows {
        let mut rec = vec![fmt_f64(r.t)];
        rec.extend(r.stiff.iter().map(|v| fmt_f64(*v)));
        rec.push(fmt_f64(r.stiff_total));
        rec.push(fmt_f64(r.h_total));
        t.push(rec);
    }
    t
}

pub fn global_error_table(rows: &[GlobalErrorRow]) -> Table {
    let mut t = Table::new(&GLOBAL_ERROR_HEADER);
    for r in rows {
        t.push(vec![
            r.method.clone(),
            fmt_f64(r.h),
            fmt_f64(r.omega),
            fmt_f64(r.t),
            fmt_opt(r.err_x0),
            fmt_opt(r.err_y0),
            r.status.to_string(),
        ]);
    }
    t
}

fn parse_status(s: &str) -> Result<RowStatus> {
    match s {
        "ok" => Ok(RowStatus::Ok),
        "diverged" => Ok(RowStatus::Diverged),
        "domain_error" => Ok(RowStatus::DomainError),
        other => Err(Error::InvalidArgument(format!("unknown status {other:?}"))),
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::InvalidArgument(format!("not a number: {s:?}")))
}

/// Parses a CSV produced by [`sweep_table`].
pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?
        .clone();
    if header.iter().ne(SWEEP_HEADER) {
        return Err(Error::InvalidArgument(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        let value = match &rec[4] {
            "" => None,
            v => Some(parse_f64(v)?),
        };
        rows.push(SweepRow {
            method: rec[0].to_string(),
            h: parse_f64(&rec[1])?,
            omega: parse_f64(&rec[2])?,
            h_omega_over_pi: parse_f64(&rec[3])?,
            value,
            status: parse_status(&rec[5])?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: &'static str,
    pub parameters: serde_json::Value,
    pub created_unix: u64,
    pub wall_seconds: f64,
    pub rows: usize,
    pub statuses: std::collections::BTreeMap<String, usize>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidArgument(format!("manifest: {e}")))?;
        write_text(path, &(text + "\n"))
    }
}
