//! File I/O: CSV matrices (rows = samples, optional header, '.' decimal,
//! comma delimiter) and JSON group specs. Floats are written in the
//! shortest representation that round-trips, so written matrices re-read
//! losslessly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use gspca::GroupStructure;

use crate::error::{CliError, Result};

/// Reads a CSV file into a dense matrix. If the first record does not
/// parse as numbers it is treated as a header and skipped.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(BufReader::new(file));

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.trim().parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if idx == 0 => continue, // header row
            Err(e) => {
                let bad = record
                    .iter()
                    .position(|f| f.trim().parse::<f64>().is_err())
                    .unwrap_or(0);
                return Err(CliError::data(format!(
                    "{}: row {}, column {}: {e}",
                    path.display(),
                    idx + 1,
                    bad + 1
                )));
            }
        };
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(CliError::data(format!(
                    "{}: row {} has {} fields, expected {w}",
                    path.display(),
                    idx + 1,
                    values.len()
                )));
            }
            _ => {}
        }
        rows.push(values);
    }
    let width = width.ok_or_else(|| {
        CliError::data(format!("{}: no numeric rows", path.display()))
    })?;
    if width == 0 {
        return Err(CliError::data(format!("{}: empty rows", path.display())));
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_vector(path: &Path, values: &[f64]) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    for v in values {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

/// Group structure from a JSON array of positive sizes, e.g. `[4,4,4]`.
pub fn read_groups(path: &Path) -> Result<GroupStructure> {
    let file = File::open(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Subtracts the column means in place.
pub fn center_columns(m: &mut DMatrix<f64>) {
    let n = m.nrows() as f64;
    for j in 0..m.ncols() {
        let mean = m.column(j).sum() / n;
        m.column_mut(j).add_scalar_mut(-mean);
    }
}
