//! Train/test evaluation and the body-fat study.
//!
//! The body-fat design uses age, `height⁴/weight²` and ten circumferences,
//! each z-scored on all usable rows. The first 200 rows train, the
//! remaining 51 test.

use std::path::Path;

use lpre_core::inference::{wald_p_value, PValueConvention};
use lpre_core::predict::{predict, prediction_metrics, PredictionMetrics};
use lpre_core::{Criterion, Dataset};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::io::{num, write_csv, Table};
use crate::sim::estimate;

/// Seed for the random-weighting standard errors of the body-fat study.
pub const BODYFAT_SEED: u64 = 20_130_101;
pub const BODYFAT_ROWS: usize = 251;
pub const BODYFAT_TRAIN_ROWS: usize = 200;

/// Column names of the body-fat CSV. Matching is case-insensitive.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyfatColumns {
    pub response: String,
    pub age: String,
    pub height: String,
    pub weight: String,
    pub circumferences: [String; 10],
}

impl Default for BodyfatColumns {
    fn default() -> Self {
        Self {
            response: "bodyfat".into(),
            age: "age".into(),
            height: "height".into(),
            weight: "weight".into(),
            circumferences: [
                "neck", "chest", "abdomen", "hip", "thigh", "knee", "ankle", "biceps", "forearm", "wrist",
            ]
            .map(String::from),
        }
    }
}

impl BodyfatColumns {
    /// Overrides from `key=name` pairs, keys being the default names.
    pub fn with_overrides(mut self, pairs: &[(String, String)]) -> Result<Self> {
        for (key, name) in pairs {
            let slot = match key.as_str() {
                "bodyfat" => &mut self.response,
                "age" => &mut self.age,
                "height" => &mut self.height,
                "weight" => &mut self.weight,
                other => {
                    let defaults = Self::default().circumferences;
                    let i = defaults
                        .iter()
                        .position(|d| d == other)
                        .ok_or_else(|| Error::Data(format!("unknown body-fat column key '{other}'")))?;
                    &mut self.circumferences[i]
                }
            };
            *slot = name.clone();
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub method: String,
    pub coef: String,
    pub estimate: f64,
    pub see: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodMetrics {
    pub method: String,
    pub metrics: PredictionMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub coefficients: Vec<CoefficientRow>,
    pub metrics: Vec<MethodMetrics>,
}

impl PipelineReport {
    pub fn coefficient(&self, method: &str, coef: &str) -> Option<&CoefficientRow> {
        self.coefficients.iter().find(|r| r.method == method && r.coef == coef)
    }

    pub fn metrics_for(&self, method: &str) -> Option<&PredictionMetrics> {
        self.metrics.iter().find(|m| m.method == method).map(|m| &m.metrics)
    }

    /// Writes `coefficients.csv` and `metrics.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let coefs: Vec<Vec<String>> = self
            .coefficients
            .iter()
            .map(|r| vec![r.method.clone(), r.coef.clone(), num(r.estimate), num(r.see), num(r.p_value)])
            .collect();
        write_csv(
            Some(&dir.join("coefficients.csv")),
            &["method", "coef", "estimate", "see", "p_value"],
            &coefs,
        )?;
        let metrics: Vec<Vec<String>> = self
            .metrics
            .iter()
            .map(|m| {
                let v = &m.metrics;
                vec![m.method.clone(), num(v.mpe), num(v.mppe), num(v.mape), num(v.mspe)]
            })
            .collect();
        write_csv(
            Some(&dir.join("metrics.csv")),
            &["method", "mpe", "mppe", "mape", "mspe"],
            &metrics,
        )
    }
}

/// Fits every method on `train`, reports estimates with SEE and p-values,
/// and median prediction errors on `test`.
pub fn evaluate_split(
    train: &Dataset,
    test: &Dataset,
    names: &[String],
    methods: &[Criterion],
    resamples: usize,
    seed: u64,
    convention: PValueConvention,
) -> Result<PipelineReport> {
    if train.p() != test.p() || names.len() != train.p() {
        return Err(Error::Data("train and test designs do not match".into()));
    }
    let mut coefficients = Vec::new();
    let mut metrics = Vec::new();
    for method in methods {
        let (beta, se) = estimate(method, train, resamples, seed)?;
        for (j, name) in names.iter().enumerate() {
            coefficients.push(CoefficientRow {
                method: method.label().to_string(),
                coef: name.clone(),
                estimate: beta[j],
                see: se[j],
                p_value: if se[j].is_nan() { f64::NAN } else { wald_p_value(beta[j], se[j], convention) },
            });
        }
        let beta = lpre_core::Coefficients::new(beta);
        let y_hat = test
            .x()
            .row_iter()
            .map(|row| predict(&beta, row.transpose().as_slice()))
            .collect::<lpre_core::Result<Vec<f64>>>()?;
        metrics.push(MethodMetrics {
            method: method.label().to_string(),
            metrics: prediction_metrics(test.y().as_slice(), &y_hat)?,
        });
    }
    Ok(PipelineReport { coefficients, metrics })
}

/// Z-scores each column with its mean and `n − 1` standard deviation.
pub fn standardize(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let v: Vec<f64> = col.iter().copied().collect();
        let (mean, sd) = (lpre_core::stats::mean(&v), lpre_core::stats::sample_sd(&v));
        for x in col.iter_mut() {
            *x = (*x - mean) / sd;
        }
    }
}

/// The standardized body-fat design (intercept included), response and
/// coefficient names, after dropping the rows with zero response.
pub fn bodyfat_design(table: &Table, columns: &BodyfatColumns) -> Result<(DMatrix<f64>, DVector<f64>, Vec<String>)> {
    let y_col = table.column_index(&columns.response)?;
    let age = table.column_index(&columns.age)?;
    let height = table.column_index(&columns.height)?;
    let weight = table.column_index(&columns.weight)?;
    let circ = columns
        .circumferences
        .iter()
        .map(|c| table.column_index(c))
        .collect::<Result<Vec<usize>>>()?;

    let rows: Vec<&Vec<f64>> = table.rows.iter().filter(|r| r[y_col] != 0.0).collect();
    if let Some(r) = rows.iter().find(|r| !(r[y_col] > 0.0)) {
        return Err(Error::Data(format!("nonpositive response {} after dropping zeros", r[y_col])));
    }
    if rows.len() != BODYFAT_ROWS {
        return Err(Error::Data(format!(
            "expected {BODYFAT_ROWS} usable rows after dropping zero responses, found {}",
            rows.len()
        )));
    }
    let n = rows.len();
    let mut cov = DMatrix::zeros(n, 12);
    for (i, r) in rows.iter().enumerate() {
        cov[(i, 0)] = r[age];
        cov[(i, 1)] = r[height].powi(4) / (r[weight] * r[weight]);
        for (k, &c) in circ.iter().enumerate() {
            cov[(i, k + 2)] = r[c];
        }
    }
    standardize(&mut cov);
    let mut x = DMatrix::from_element(n, 13, 1.0);
    x.view_mut((0, 1), (n, 12)).copy_from(&cov);
    let y = DVector::from_iterator(n, rows.iter().map(|r| r[y_col]));
    let mut names = vec!["intercept".to_string(), "age".into(), "height4_weight2".into()];
    names.extend(BodyfatColumns::default().circumferences);
    Ok((x, y, names))
}

pub fn bodyfat_pipeline(
    path: &Path,
    methods: &[Criterion],
    columns: &BodyfatColumns,
    resamples: usize,
    convention: PValueConvention,
) -> Result<PipelineReport> {
    let table = Table::read(path)?;
    let (x, y, names) = bodyfat_design(&table, columns)?;
    let n = x.nrows();
    let train: Vec<usize> = (0..BODYFAT_TRAIN_ROWS).collect();
    let test: Vec<usize> = (BODYFAT_TRAIN_ROWS..n).collect();
    let all = Dataset::new(x, y)?;
    evaluate_split(
        &all.select_rows(&train)?,
        &all.select_rows(&test)?,
        &names,
        methods,
        resamples,
        BODYFAT_SEED,
        convention,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardize_centres_and_scales() {
        let mut m = DMatrix::from_row_slice(4, 2, &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0]);
        standardize(&mut m);
        for col in m.column_iter() {
            let v: Vec<f64> = col.iter().copied().collect();
            assert!(lpre_core::stats::mean(&v).abs() < 1e-15);
            assert!((lpre_core::stats::sample_sd(&v) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn column_overrides() {
        let c = BodyfatColumns::default()
            .with_overrides(&[("bodyfat".into(), "BodyFat".into()), ("wrist".into(), "W".into())])
            .unwrap();
        assert_eq!(c.response, "BodyFat");
        assert_eq!(c.circumferences[9], "W");
        assert!(BodyfatColumns::default()
            .with_overrides(&[("nose".into(), "x".into())])
            .is_err());
    }
}
