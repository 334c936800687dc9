//! Tabular exports: RFC-4180 CSV with full-precision floats.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Scientific notation with 17 significant digits; parses back to the same
/// `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    /// Rendered as an empty field (e.g. an undefined R²).
    Missing,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_float(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// A named-column table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::Dimension(format!("row of {} cells in a table of {} columns", row.len(), self.header.len())));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_bytes()?)?;
        Ok(())
    }
}

/// A matrix as a table: one header row of column labels, then one row per
/// matrix row. With `row_labels`, a leading `label` column is added.
pub fn matrix_table(m: &Array2<f64>, col_labels: &[String], row_labels: Option<&[String]>) -> Result<Table> {
    if col_labels.len() != m.ncols() {
        return Err(Error::Dimension(format!("{} column labels for {} columns", col_labels.len(), m.ncols())));
    }
    if let Some(r) = row_labels {
        if r.len() != m.nrows() {
            return Err(Error::Dimension(format!("{} row labels for {} rows", r.len(), m.nrows())));
        }
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Contract("matrix export requires finite entries".into()));
    }
    let mut header: Vec<String> = Vec::new();
    if row_labels.is_some() {
        header.push("label".into());
    }
    header.extend(col_labels.iter().cloned());
    let mut t = Table::new(header);
    for (i, row) in m.rows().into_iter().enumerate() {
        let mut cells = Vec::with_capacity(t.header.len());
        if let Some(r) = row_labels {
            cells.push(Cell::Text(r[i].clone()));
        }
        cells.extend(row.iter().map(|&x| Cell::Num(x)));
        t.push(cells)?;
    }
    Ok(t)
}

pub fn export_matrix(m: &Array2<f64>, path: &Path, col_labels: &[String], row_labels: Option<&[String]>) -> Result<()> {
    matrix_table(m, col_labels, row_labels)?.write_csv(path)
}

/// Parses a numeric CSV written by [`export_matrix`] without row labels.
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        for field in rec.iter() {
            values.push(field.parse::<f64>().map_err(|e| Error::Format(format!("bad number `{field}`: {e}")))?);
        }
        rows += 1;
    }
    let m = Array2::from_shape_vec((rows, header.len()), values).map_err(|e| Error::Format(e.to_string()))?;
    Ok((header, m))
}
