//! Solver trace serialization: CSV (trace only) and JSON (trace plus
//! configuration, termination reason and final point).

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::solver::{IterationRecord, SolverReport};
use crate::{Error, Real, Result};

pub const CSV_HEADER: [&str; 7] = [
    "iter",
    "cost",
    "grad_norm",
    "tr_radius",
    "inner_iters",
    "accepted",
    "elapsed_s",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// Picks the format from a file extension (`.json` → JSON, else CSV).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => ReportFormat::Json,
            _ => ReportFormat::Csv,
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidArgument(format!(
                "unknown report format '{other}'"
            ))),
        }
    }
}

pub fn write_trace_csv<W: Write>(records: &[IterationRecord], w: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    writer.write_record(CSV_HEADER)?;
    for r in records {
        writer.write_record([
            r.iter.to_string(),
            r.cost.to_string(),
            r.grad_norm.to_string(),
            r.tr_radius.to_string(),
            r.inner_iters.to_string(),
            r.accepted.to_string(),
            r.elapsed_s.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: std::io::Read>(r: R) -> Result<Vec<IterationRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected trace header {header:?}"),
        });
    }
    reader
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn write_report_to<T: Real, W: Write>(
    report: &SolverReport<T>,
    format: ReportFormat,
    mut w: W,
) -> Result<()> {
    match format {
        ReportFormat::Csv => write_trace_csv(&report.records, w),
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut w, report)?;
            w.write_all(b"\n")?;
            Ok(())
        }
    }
}

pub fn write_report<T: Real>(
    report: &SolverReport<T>,
    format: ReportFormat,
    path: &Path,
) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_report_to(report, format, file)
}

pub fn read_report_json<T: Real>(path: &Path) -> Result<SolverReport<T>> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
