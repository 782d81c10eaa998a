//! Columnar dataset with a selection indicator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Observations stored by column. Missing values are NaN; `selected[i]` is the
/// selection indicator Rᵢ and `governed` lists the columns whose observation it controls.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    selected: Vec<bool>,
    governed: Vec<String>,
}

impl Dataset {
    /// Builds a dataset and checks that NaNs appear exactly where Rᵢ = 0 in governed columns.
    pub fn new(
        columns: Vec<(String, Vec<f64>)>,
        selected: Vec<bool>,
        governed: Vec<String>,
    ) -> Result<Self> {
        let n = selected.len();
        let mut names = Vec::with_capacity(columns.len());
        let mut data = Vec::with_capacity(columns.len());
        for (name, col) in columns {
            if col.len() != n {
                return Err(Error::InvalidData(format!(
                    "column `{name}` has {} rows, expected {n}",
                    col.len()
                )));
            }
            if names.contains(&name) {
                return Err(Error::InvalidData(format!("duplicate column `{name}`")));
            }
            names.push(name);
            data.push(col);
        }
        let ds = Self { names, columns: data, selected, governed };
        for g in &ds.governed {
            let col = ds.column(g)?;
            for (i, (&v, &r)) in col.iter().zip(&ds.selected).enumerate() {
                if r == v.is_nan() {
                    return Err(Error::InvalidData(format!(
                        "row {i}: column `{g}` is {} but R = {}",
                        if v.is_nan() { "missing" } else { "observed" },
                        u8::from(r)
                    )));
                }
            }
        }
        for (name, col) in ds.names.iter().zip(&ds.columns) {
            if !ds.governed.contains(name) && col.iter().any(|v| v.is_nan()) {
                return Err(Error::InvalidData(format!(
                    "column `{name}` has missing values but is not governed by R"
                )));
            }
        }
        Ok(ds)
    }

    /// Fully observed dataset (R ≡ 1).
    pub fn complete(columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.1.len());
        Self::new(columns, vec![true; n], Vec::new())
    }

    /// Masks `governed` columns wherever `selected` is false.
    pub fn with_selection(
        columns: Vec<(String, Vec<f64>)>,
        selected: Vec<bool>,
        governed: &[&str],
    ) -> Result<Self> {
        let columns = columns
            .into_iter()
            .map(|(name, mut col)| {
                if governed.contains(&name.as_str()) {
                    for (v, &r) in col.iter_mut().zip(&selected) {
                        if !r {
                            *v = f64::NAN;
                        }
                    }
                }
                (name, col)
            })
            .collect();
        Self::new(columns, selected, governed.iter().map(|s| s.to_string()).collect())
    }

    pub fn n(&self) -> usize {
        self.selected.len()
    }

    pub fn n_selected(&self) -> usize {
        self.selected.iter().filter(|&&r| r).count()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn selected(&self) -> &[bool] {
        &self.selected
    }

    pub fn governed(&self) -> &[String] {
        &self.governed
    }

    /// True when `name` has missing entries controlled by R.
    pub fn has_missing(&self, name: &str) -> bool {
        self.governed.iter().any(|g| g == name) && self.selected.iter().any(|&r| !r)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::MissingColumn {
                name: name.to_string(),
                available: self.names.clone(),
            })
    }

    /// Selection indicator as 0/1 reals.
    pub fn selection_vector(&self) -> Vec<f64> {
        self.selected.iter().map(|&r| if r { 1.0 } else { 0.0 }).collect()
    }

    /// Adds (or replaces) a fully observed column.
    pub fn with_column(&self, name: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.n() {
            return Err(Error::InvalidData(format!("column `{name}` has wrong length")));
        }
        let mut out = self.clone();
        match out.names.iter().position(|n| n == name) {
            Some(i) => out.columns[i] = values,
            None => {
                out.names.push(name.to_string());
                out.columns.push(values);
            }
        }
        Ok(out)
    }

    /// Rows picked by index, with repetition allowed (bootstrap resampling).
    pub fn take_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            selected: rows.iter().map(|&i| self.selected[i]).collect(),
            governed: self.governed.clone(),
        }
    }

    /// Design matrix over `rows` (all rows if `None`), with optional intercept.
    pub fn design(
        &self,
        covariates: &[String],
        intercept: bool,
        rows: Option<&[bool]>,
    ) -> Result<(DMatrix<f64>, Vec<String>)> {
        let cols: Vec<&[f64]> = covariates
            .iter()
            .map(|c| self.column(c))
            .collect::<Result<_>>()?;
        let idx = row_indices(self.n(), rows);
        let p = covariates.len() + usize::from(intercept);
        let mut m = DMatrix::zeros(idx.len(), p);
        for (r, &i) in idx.iter().enumerate() {
            let mut j = 0;
            if intercept {
                m[(r, 0)] = 1.0;
                j = 1;
            }
            for c in &cols {
                let v = c[i];
                if v.is_nan() {
                    return Err(Error::InvalidData(format!(
                        "covariate `{}` is missing in row {i}",
                        covariates[j - usize::from(intercept)]
                    )));
                }
                m[(r, j)] = v;
                j += 1;
            }
        }
        let mut names = Vec::with_capacity(p);
        if intercept {
            names.push("(intercept)".to_string());
        }
        names.extend(covariates.iter().cloned());
        Ok((m, names))
    }

    /// Response vector over `rows`; errors if any value is missing.
    pub fn response(&self, name: &str, rows: Option<&[bool]>) -> Result<DVector<f64>> {
        let col = self.column(name)?;
        let idx = row_indices(self.n(), rows);
        let mut out = DVector::zeros(idx.len());
        for (r, &i) in idx.iter().enumerate() {
            if col[i].is_nan() {
                return Err(Error::InvalidData(format!("response `{name}` missing in row {i}")));
            }
            out[r] = col[i];
        }
        Ok(out)
    }
}

pub(crate) fn row_indices(n: usize, rows: Option<&[bool]>) -> Vec<usize> {
    match rows {
        None => (0..n).collect(),
        Some(mask) => mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect(),
    }
}
