//! `hypoco report`: merge CSV outputs of `run` and fit scaling slopes.

use std::fs;
use std::path::PathBuf;

use hypoco_core::fit;
use serde_json::{json, Map, Value};

use crate::error::{CliError, CliResult};

/// Column used as the abscissa of the scaling fits.
pub const SCALING_COLUMN: &str = "n";

#[derive(Debug, Clone)]
pub struct Merged {
    pub header: Vec<String>,
    /// Merged CSV text; a single input is passed through byte for byte.
    pub csv: String,
    pub rows: usize,
    pub summary: Value,
}

fn read_table(path: &PathBuf) -> CliResult<(String, Vec<String>, Vec<csv::StringRecord>)> {
    let name = path.display();
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{name}: cannot read: {e}")))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Config(format!("{name}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(CliError::Config(format!("{name}: missing header row")));
    }
    let records = reader
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(format!("{name}: {e}")))?;
    Ok((text, header, records))
}

/// Log-log slopes of every all-positive numeric column against `n`.
fn slopes(header: &[String], records: &[csv::StringRecord]) -> Map<String, Value> {
    let mut out = Map::new();
    let Some(xi) = header.iter().position(|h| h == SCALING_COLUMN) else {
        return out;
    };
    let column = |i: usize| -> Option<Vec<f64>> {
        records
            .iter()
            .map(|r| {
                r.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .filter(|v| v.is_finite() && *v > 0.0)
            })
            .collect()
    };
    let Some(x) = column(xi) else {
        return out;
    };
    for (i, name) in header.iter().enumerate() {
        if i == xi {
            continue;
        }
        let Some(y) = column(i) else { continue };
        if let Ok(f) = fit::log_log_slope(&x, &y, 2) {
            out.insert(
                name.clone(),
                json!({ "slope": f.slope, "intercept": f.intercept, "points": f.points }),
            );
        }
    }
    out
}

pub fn merge(paths: &[PathBuf]) -> CliResult<Merged> {
    let Some(first) = paths.first() else {
        return Err(CliError::Config("report: no input files".into()));
    };
    let (first_text, header, mut records) = read_table(first)?;
    for path in &paths[1..] {
        let (_, h, r) = read_table(path)?;
        if h != header {
            return Err(CliError::Config(format!(
                "{}: header [{}] does not match [{}] of {}",
                path.display(),
                h.join(","),
                header.join(","),
                first.display()
            )));
        }
        records.extend(r);
    }
    let csv = if paths.len() == 1 {
        first_text
    } else {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(&header).map_err(io)?;
        for r in &records {
            w.write_record(r).map_err(io)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| CliError::Io(e.to_string()))?)
            .map_err(|e| CliError::Io(e.to_string()))?
    };
    let summary = json!({
        "inputs": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "header": header,
        "rows": records.len(),
        "against": SCALING_COLUMN,
        "slopes": slopes(&header, &records),
    });
    Ok(Merged {
        header,
        csv,
        rows: records.len(),
        summary,
    })
}
