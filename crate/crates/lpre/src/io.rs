//! CSV input and output. Comma-separated, header row required.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use lpre_core::{Dataset, LinearHypothesis};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A numeric table read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::csv(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::csv(path, e))?;
            let row = record
                .iter()
                .zip(&headers)
                .map(|(field, name)| {
                    field.parse::<f64>().map_err(|_| {
                        Error::Data(format!(
                            "{}: row {}, column '{name}': '{field}' is not a number",
                            path.display(),
                            i + 2
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { headers, rows })
    }

    /// Column position by name; exact match first, then case-insensitive.
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .or_else(|| self.headers.iter().position(|h| h.eq_ignore_ascii_case(name)))
            .ok_or_else(|| Error::Data(format!("missing column '{name}'")))
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[index]).collect()
    }

    /// Response plus covariates (default: every other column), intercept prepended.
    /// Returns the dataset and the coefficient names.
    pub fn dataset(&self, response: &str, covariates: Option<&[String]>) -> Result<(Dataset, Vec<String>)> {
        let y_col = self.column_index(response)?;
        let cols: Vec<usize> = match covariates {
            Some(names) => names
                .iter()
                .map(|n| self.column_index(n))
                .collect::<Result<_>>()?,
            None => (0..self.headers.len()).filter(|&j| j != y_col).collect(),
        };
        let n = self.rows.len();
        let mut x = DMatrix::from_element(n, cols.len() + 1, 1.0);
        for (i, row) in self.rows.iter().enumerate() {
            for (k, &j) in cols.iter().enumerate() {
                x[(i, k + 1)] = row[j];
            }
        }
        let y = DVector::from_vec(self.column(y_col));
        let mut names = vec!["intercept".to_string()];
        names.extend(cols.iter().map(|&j| self.headers[j].clone()));
        Ok((Dataset::new(x, y)?, names))
    }
}

/// Hypothesis matrix `H` (p rows, one column per constraint) from CSV.
pub fn read_hypothesis(path: &Path) -> Result<LinearHypothesis> {
    let table = Table::read(path)?;
    let (p, q) = (table.rows.len(), table.headers.len());
    let h = DMatrix::from_fn(p, q, |i, j| table.rows[i][j]);
    Ok(LinearHypothesis::new(h)?)
}

/// Writes a CSV with the given header; `path = None` writes to stdout.
pub fn write_csv(path: Option<&Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let display = path.map_or_else(|| Path::new("<stdout>").to_path_buf(), Path::to_path_buf);
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(File::create(p).map_err(|e| Error::io(p, e))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header).map_err(|e| Error::csv(&display, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| Error::csv(&display, e))?;
    }
    w.flush().map_err(|e| Error::io(&display, e))
}

pub(crate) fn num(v: f64) -> String {
    format!("{v}")
}
