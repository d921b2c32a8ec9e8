//! CSV input and output.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

/// A response column and numeric predictors read from a headed CSV file.
#[derive(Debug, Clone)]
pub struct Table {
    pub response: String,
    pub predictors: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
}

fn parse_cell(s: &str, row: usize, col: &str) -> CliResult<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::usage(format!("row {row}, column '{col}': '{s}' is not a finite number")))
}

/// Reads `path`. The response is the column named `response`, or the first
/// column when `None`; every other column is a predictor.
pub fn read_table(path: &Path, response: Option<&str>) -> CliResult<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.len() < 2 {
        return Err(CliError::usage(format!(
            "{}: need a response and at least one predictor column",
            path.display()
        )));
    }
    let yi = match response {
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::usage(format!("{}: no column named '{name}'", path.display())))?,
        None => 0,
    };
    let predictors: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != yi)
        .map(|(_, h)| h.clone())
        .collect();
    let mut y = Vec::new();
    let mut cells = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(CliError::usage(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                r + 1,
                rec.len(),
                headers.len()
            )));
        }
        for (j, field) in rec.iter().enumerate() {
            let v = parse_cell(field, r + 1, &headers[j])?;
            if j == yi {
                y.push(v);
            } else {
                cells.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(CliError::usage(format!("{}: no data rows", path.display())));
    }
    let x = DMatrix::from_row_slice(y.len(), predictors.len(), &cells);
    Ok(Table {
        response: headers[yi].clone(),
        predictors,
        x,
        y,
    })
}

/// Reads a test file whose columns must match `train`'s names.
pub fn read_matching(path: &Path, train: &Table) -> CliResult<Table> {
    let t = read_table(path, Some(&train.response))?;
    if t.predictors != train.predictors {
        return Err(CliError::usage(format!(
            "{}: predictor columns differ from the training data",
            path.display()
        )));
    }
    Ok(t)
}

/// Full-precision rendering used in every machine-readable file.
pub fn full(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `name,coefficient` rows, intercept first.
pub fn write_coefficients(path: &Path, names: &[String], intercept: f64, coef: &[f64]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["name", "coefficient"])?;
    w.write_record(["(intercept)", &full(intercept)])?;
    for (name, c) in names.iter().zip(coef) {
        w.write_record([name.as_str(), &full(*c)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut f = File::create(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}
