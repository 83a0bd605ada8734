//! Monte Carlo checks of the two test calibrations.
//!
//! The slow ones follow the full replication counts and are ignored by
//! default; run them with `cargo test --release -- --ignored`.

use std::time::Instant;

use lpre_core::distributions::{ErrorLaw, ErrorSampler};
use lpre_core::inference::{gre_anova_test, lpre_anova_test};
use lpre_core::rng::stream;
use lpre_core::stats::{ks_one_sample, mean};
use lpre_core::{Criterion, Dataset, LinearHypothesis, SolverOptions};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

fn dataset(beta: &[f64], n: usize, law: ErrorLaw, seed: u64, rep: u64) -> Dataset {
    let sampler = ErrorSampler::new(law).unwrap();
    let mut rng = stream(seed, rep);
    let p = beta.len();
    let mut x = DMatrix::from_element(n, p, 1.0);
    for i in 0..n {
        for j in 1..p {
            x[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    let eta = &x * DVector::from_column_slice(beta);
    let y = DVector::from_fn(n, |i, _| eta[i].exp() * sampler.sample(&mut rng));
    Dataset::new(x, y).unwrap()
}

#[test]
fn scaled_statistic_has_chi_squared_mean_at_large_n() {
    let h = LinearHypothesis::zero_coefficients(3, &[2]).unwrap();
    let law = ErrorLaw::LogUniform { lo: -2.0, hi: 2.0 };
    let reps = 400;
    let scaled: Vec<f64> = (0..reps)
        .map(|r| {
            let data = dataset(&[1.0, 1.0, 0.0], 2000, law, 31, r);
            let t = lpre_anova_test(&data, &h, &SolverOptions::default()).unwrap();
            t.statistic / t.scale
        })
        .collect();
    // χ²₁ has mean 1 and variance 2; allow 3.5 Monte Carlo standard errors
    let tol = 3.5 * (2.0 / reps as f64).sqrt();
    assert!((mean(&scaled) - 1.0).abs() < tol, "{}", mean(&scaled));
}

#[test]
fn random_weighting_agrees_with_chi_squared_for_the_product_criterion() {
    let h = LinearHypothesis::zero_coefficients(3, &[2]).unwrap();
    let law = ErrorLaw::LogUniform { lo: -2.0, hi: 2.0 };
    let mut gaps = Vec::new();
    for r in 0..10 {
        let data = dataset(&[1.0, 1.0, 0.0], 200, law, 32, r);
        let chi = lpre_anova_test(&data, &h, &SolverOptions::default()).unwrap();
        let rw = gre_anova_test(&Criterion::Lpre, &data, &h, 500, r).unwrap();
        assert_eq!(chi.statistic, rw.statistic);
        gaps.push((chi.p_value - rw.p_value).abs());
    }
    gaps.sort_by(f64::total_cmp);
    // single-dataset resampling error is about 0.02, so pin the median gap
    assert!(gaps[gaps.len() / 2] < 0.03, "{gaps:?}");
}

#[test]
#[ignore = "1000 replications x 500 resamples"]
fn random_weighting_p_values_are_uniform_when_every_coefficient_is_tested() {
    let start = Instant::now();
    let h = LinearHypothesis::zero_coefficients(3, &[0, 1, 2]).unwrap();
    let law = ErrorLaw::LogUniform { lo: -2.0, hi: 2.0 };
    let p: Vec<f64> = (0..1000)
        .map(|r| {
            let data = dataset(&[0.0, 0.0, 0.0], 100, law, 33, r);
            gre_anova_test(&Criterion::Lpre, &data, &h, 500, r).unwrap().p_value
        })
        .collect();
    let (d, pv) = ks_one_sample(&p, |x| x.clamp(0.0, 1.0));
    println!("KS distance {d:.4}, p {pv:.3}, {:?}", start.elapsed());
    assert!(pv > 0.01, "KS p {pv}");
}

#[test]
#[ignore = "1000 replications x 500 nonsmooth resamples"]
fn lare_test_size() {
    let h = LinearHypothesis::zero_coefficients(3, &[2]).unwrap();
    let law = ErrorLaw::LogNormal { mu: 0.0, sigma: 1.0 };
    let rejected = (0..1000)
        .filter(|&r| {
            let data = dataset(&[1.0, 1.0, 0.0], 200, law, 34, r);
            gre_anova_test(&Criterion::Lare, &data, &h, 500, r).unwrap().p_value < 0.05
        })
        .count();
    let rate = rejected as f64 / 1000.0;
    assert!((rate - 0.05).abs() <= 0.02, "{rate}");
}
