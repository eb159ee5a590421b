//! Comma-separated input with a header row, typed by the configured schema.

use std::io::Read;

use ordsub::{Column, ColumnKind, Dataset};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub rows_read: usize,
    pub rows_dropped_missing: usize,
    pub rows_retained: usize,
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f == "." || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan")
}

fn locate(headers: &csv::StringRecord, name: &str) -> Result<usize, CliError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CliError::SchemaMismatch(format!("column `{name}` not found in header")))
}

pub fn ingest_path(config: &RunConfig) -> Result<(Dataset, IngestSummary), CliError> {
    let file = std::fs::File::open(&config.input).map_err(|e| CliError::Io(format!("{}: {e}", config.input.display())))?;
    ingest(file, config)
}

/// Reads records, dropping and counting rows with a missing value in any
/// referenced column.
pub fn ingest<R: Read>(reader: R, config: &RunConfig) -> Result<(Dataset, IngestSummary), CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CliError::SchemaMismatch(e.to_string()))?.clone();
    let cov_pos: Vec<usize> = config.covariates.iter().map(|c| locate(&headers, &c.name)).collect::<Result<_, _>>()?;
    let y_pos = locate(&headers, &config.outcome)?;
    let t_pos = locate(&headers, &config.treatment.column)?;
    let id_pos = config.id.as_deref().map(|name| locate(&headers, name)).transpose()?;

    let p = config.covariates.len();
    let (mut ids, mut x, mut t, mut y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut read = 0;
    let mut dropped = 0;
    for (row, record) in rdr.records().enumerate() {
        let row = row + 1;
        let record = record.map_err(|e| CliError::SchemaMismatch(format!("data row {row}: {e}")))?;
        read += 1;
        let field = |pos: usize| record.get(pos).unwrap_or("");
        let referenced = cov_pos.iter().copied().chain([y_pos, t_pos]).chain(id_pos);
        if referenced.clone().any(|pos| is_missing(field(pos))) {
            dropped += 1;
            continue;
        }
        let unparseable = |pos: usize, column: &str| CliError::UnparseableValue { row, column: column.to_string(), value: field(pos).to_string() };
        let number = |pos: usize, column: &str| -> Result<f64, CliError> {
            field(pos).parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| unparseable(pos, column))
        };
        for (spec, &pos) in config.covariates.iter().zip(&cov_pos) {
            let v = number(pos, &spec.name)?;
            if spec.kind == ColumnKind::Binary && v != 0.0 && v != 1.0 {
                return Err(unparseable(pos, &spec.name));
            }
            x.push(v);
        }
        y.push(number(y_pos, &config.outcome)?);
        let label = field(t_pos);
        let level = config.treatment.levels.iter().position(|l| l == label).ok_or_else(|| unparseable(t_pos, &config.treatment.column))?;
        t.push(level);
        let id = match id_pos {
            Some(pos) => field(pos).parse::<u64>().map_err(|_| unparseable(pos, config.id.as_deref().unwrap_or("id")))?,
            None => (row - 1) as u64,
        };
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(CliError::EmptyAfterFiltering { dropped });
    }
    let columns: Vec<Column> = config.covariates.iter().map(|c| Column::new(c.name.clone(), c.kind)).collect();
    debug_assert_eq!(x.len(), ids.len() * p);
    let summary = IngestSummary { rows_read: read, rows_dropped_missing: dropped, rows_retained: ids.len() };
    let data = Dataset::new(ids, columns, x, t, y, config.treatment.levels.len()).map_err(|e| CliError::SchemaMismatch(e.to_string()))?;
    Ok((data, summary))
}
