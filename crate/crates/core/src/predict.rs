//! Predictions and median prediction-error metrics.

use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

use crate::model::{Coefficients, EXPONENT_LIMIT};
use crate::stats::lower_median;
use crate::{Error, Result};

/// `exp(x'β)` for one design row (intercept included).
pub fn predict(beta: &Coefficients, x_row: &[f64]) -> Result<f64> {
    if x_row.len() != beta.len() {
        return Err(Error::invalid(alloc::format!(
            "row has {} entries but there are {} coefficients",
            x_row.len(),
            beta.len()
        )));
    }
    let eta: f64 = x_row.iter().zip(beta.iter()).map(|(x, b)| x * b).sum();
    if !(eta.abs() <= EXPONENT_LIMIT) {
        return Err(Error::NumericOverflow(eta));
    }
    Ok(eta.exp())
}

/// Medians over a test set (lower median for even counts).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionMetrics {
    /// `|y − ŷ|`.
    pub mpe: f64,
    /// `(y − ŷ)² / (y·ŷ)`.
    pub mppe: f64,
    /// `|y − ŷ|/y + |y − ŷ|/ŷ`.
    pub mape: f64,
    /// `(y − ŷ)²`.
    pub mspe: f64,
}

pub fn prediction_metrics(y: &[f64], y_hat: &[f64]) -> Result<PredictionMetrics> {
    if y.len() != y_hat.len() {
        return Err(Error::invalid("y and y_hat differ in length"));
    }
    if y.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    if y.iter().chain(y_hat).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("responses and predictions must be positive"));
    }
    let n = y.len();
    let (mut pe, mut ppe, mut ape, mut spe) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for (&yi, &fi) in y.iter().zip(y_hat) {
        let d = (yi - fi).abs();
        pe.push(d);
        ppe.push(d * d / (yi * fi));
        ape.push(d / yi + d / fi);
        spe.push(d * d);
    }
    let med = |v: &[f64]| lower_median(v).expect("non-empty");
    Ok(PredictionMetrics {
        mpe: med(&pe),
        mppe: med(&ppe),
        mape: med(&ape),
        mspe: med(&spe),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let m = prediction_metrics(&[1.0, 4.0], &[2.0, 2.0]).unwrap();
        // lower median of each pair
        assert_eq!(m.mpe, 1.0);
        assert_eq!(m.mspe, 1.0);
        assert_eq!(m.mppe, 0.5);
        assert_eq!(m.mape, 1.5);
    }

    #[test]
    fn exact_predictions() {
        let y = [0.3, 2.0, 7.0];
        let m = prediction_metrics(&y, &y).unwrap();
        assert_eq!((m.mpe, m.mppe, m.mape, m.mspe), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn predict_basics() {
        assert_eq!(predict(&Coefficients::zeros(3), &[1.0, 5.0, -2.0]).unwrap(), 1.0);
        let b = Coefficients::from_slice(&[0.5, 2.0]);
        assert!((predict(&b, &[1.0, 0.25]).unwrap().ln() - 1.0).abs() < 1e-12);
        assert!(predict(&b, &[1.0]).is_err());
        assert!(matches!(predict(&b, &[1.0, 400.0]), Err(Error::NumericOverflow(_))));
        assert!(prediction_metrics(&[], &[]).is_err());
    }
}
