//! Summary statistics and goodness-of-fit helpers used by the harness and tests.

use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

use crate::special::{chi_squared_sf, kolmogorov_sf};

/// Lower median: the `⌈n/2⌉`-th order statistic. `None` for empty input.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the `n − 1` divisor.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Two-sample Kolmogorov–Smirnov distance `sup |F_a − F_b|`.
pub fn ks_two_sample_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample KS test against a continuous CDF: `(D, asymptotic p-value)`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> (f64, f64) {
    let mut v: Vec<f64> = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    (d, kolmogorov_sf(lambda))
}

/// Pearson chi-squared goodness of fit with `bins − 1` degrees of freedom:
/// `(statistic, p-value)`.
pub fn chi_squared_gof(observed: &[u64], expected: &[f64]) -> (f64, f64) {
    let stat: f64 = observed
        .iter()
        .zip(expected.iter())
        .map(|(&o, &e)| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum();
    let df = observed.len().saturating_sub(1) as f64;
    (stat, chi_squared_sf(stat, df))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_median_convention() {
        assert_eq!(lower_median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(lower_median(&[4.0, 1.0, 3.0, 2.0]), Some(2.0));
        assert_eq!(lower_median(&[]), None);
    }

    #[test]
    fn ks_distance_of_shifted_samples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_two_sample_distance(&a, &a), 0.0);
        let b = [5.0, 6.0, 7.0, 8.0];
        assert_eq!(ks_two_sample_distance(&a, &b), 1.0);
        let c = [2.5, 3.5, 4.5, 5.5];
        assert!((ks_two_sample_distance(&a, &c) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sd_of_known_sample() {
        assert!((sample_sd(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]) - 2.138089935299395).abs() < 1e-12);
    }
}
