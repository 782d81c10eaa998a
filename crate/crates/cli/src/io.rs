//! CSV datasets: comma separated, header required, `NA` or an empty cell marks a missing value.

use std::io::{Read, Write};
use std::path::Path;

use ivsel_core::{Dataset, Error, Result};

/// Raw numeric columns as read from disk; missing cells are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn n(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::MissingColumn { name: name.to_string(), available: self.names.clone() })
    }

    /// Dataset over `used` columns. R is 1 where every used column is observed and the
    /// columns with any missing cell become the governed set.
    pub fn dataset(&self, used: &[String]) -> Result<Dataset> {
        let mut cols = Vec::with_capacity(used.len());
        for name in used {
            if cols.iter().any(|(n, _): &(String, Vec<f64>)| n == name) {
                continue;
            }
            cols.push((name.clone(), self.column(name)?.to_vec()));
        }
        let governed: Vec<&str> =
            cols.iter().filter(|(_, c)| c.iter().any(|v| v.is_nan())).map(|(n, _)| n.as_str()).collect();
        let selected: Vec<bool> =
            (0..self.n()).map(|i| cols.iter().all(|(_, c)| !c[i].is_nan())).collect();
        let governed: Vec<String> = governed.into_iter().map(String::from).collect();
        let refs: Vec<&str> = governed.iter().map(String::as_str).collect();
        Dataset::with_selection(cols, selected, &refs)
    }
}

fn parse_cell(cell: &str, column: &str, row: usize) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() || cell == "NA" {
        return Ok(f64::NAN);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::InvalidData(format!(
            "column `{column}`, data row {row}: expected a number or NA, found `{cell}`"
        ))),
    }
}

pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::InvalidData(format!("header: {e}")))?
        .iter()
        .map(String::from)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::InvalidData("missing header row".into()));
    }
    if let Some(d) = names.iter().enumerate().find_map(|(i, n)| names[..i].contains(n).then_some(n)) {
        return Err(Error::InvalidData(format!("duplicate column `{d}`")));
    }
    let mut columns = vec![Vec::new(); names.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::InvalidData(e.to_string()))?;
        if rec.len() != names.len() {
            return Err(Error::InvalidData(format!(
                "data row {}: {} fields, header has {}",
                row + 1,
                rec.len(),
                names.len()
            )));
        }
        for (j, cell) in rec.iter().enumerate() {
            columns[j].push(parse_cell(cell, &names[j], row + 1)?);
        }
    }
    Ok(Table { names, columns })
}

pub fn read_table_path(path: &Path) -> Result<Table> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::InvalidData(format!("cannot open {}: {e}", path.display())))?;
    read_table(f)
}

/// Writes every column of `data`, with `NA` for missing cells.
pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidData(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(data.names()).map_err(io)?;
    let cols: Vec<&[f64]> = data.names().iter().map(|n| data.column(n)).collect::<Result<_>>()?;
    for i in 0..data.n() {
        w.write_record(cols.iter().map(|c| if c[i].is_nan() { "NA".to_string() } else { c[i].to_string() }))
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidData(e.to_string()))
}
