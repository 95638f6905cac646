use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::histogram::HistogramReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::usage(format!("unknown report format `{s}`, expected csv or json"))),
        }
    }
}

#[derive(Serialize)]
struct BinRow<'a> {
    metric: &'a str,
    layer: usize,
    bin_left: f64,
    bin_right: f64,
    count: u64,
    population_id: &'a str,
}

/// Writes `reports` in the given order: one CSV row per bin, or a JSON array.
pub fn emit_report(reports: &[HistogramReport], format: ReportFormat, path: &Path) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_path(path)
                .map_err(|e| Error::csv(path, e))?;
            w.write_record(["metric", "layer", "bin_left", "bin_right", "count", "population_id"])
                .map_err(|e| Error::csv(path, e))?;
            for r in reports {
                for (i, &count) in r.histogram.counts.iter().enumerate() {
                    w.serialize(BinRow {
                        metric: &r.metric,
                        layer: r.layer,
                        bin_left: r.histogram.edges[i],
                        bin_right: r.histogram.edges[i + 1],
                        count,
                        population_id: &r.population_id,
                    })
                    .map_err(|e| Error::csv(path, e))?;
                }
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        ReportFormat::Json => write_json(path, reports),
    }
}

pub fn read_report_json(path: &Path) -> Result<Vec<HistogramReport>> {
    read_json(path)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::json(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

/// Serializes `rows` as CSV with a header taken from the row type.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
