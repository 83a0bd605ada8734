//! Monte Carlo studies on the model `y = exp(β₀ + β₁X₁ + … )·ε` with
//! independent standard normal covariates.
//!
//! Replication `r` draws covariates and errors from stream `r` of the
//! master seed; random-weighting resamples inside it use a seed derived from
//! `(seed, r)`. Results are collected by index and aggregated in index
//! order, so tables do not depend on the thread count.

use std::path::Path;

use lpre_core::distributions::ErrorSampler;
use lpre_core::inference::{lpre_anova_test, plugin_covariance, random_weight_covariance};
use lpre_core::rng::{derive_seed, stream, StreamRng};
use lpre_core::{fit, Coefficients, Criterion, Dataset, LinearHypothesis, SolverOptions};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::config::SimulationConfig;
use crate::error::{Error, Result};
use crate::io::{num, write_csv};

/// Largest tolerated fraction of failed replications per estimator.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

/// Normal critical value for the 95% intervals behind `cp`.
const Z_975: f64 = 1.959963984540054;

/// Runs `f` on a pool of `threads` workers (all cores when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// One dataset of size `n` from the model with coefficients `beta`.
pub fn generate_dataset(
    beta: &Coefficients,
    n: usize,
    errors: &ErrorSampler,
    rng: &mut StreamRng,
) -> Result<Dataset> {
    let p = beta.len();
    let mut x = DMatrix::from_element(n, p, 1.0);
    for i in 0..n {
        for j in 1..p {
            x[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let eta = &x * beta.as_vector();
    let y = DVector::from_iterator(n, eta.iter().map(|e| e.exp() * errors.sample(rng)));
    Ok(Dataset::new(x, y)?)
}

/// One line of an estimation table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub estimator: String,
    pub coef: usize,
    pub bias: f64,
    /// Monte Carlo standard deviation of the estimates.
    pub se: f64,
    /// Mean estimated standard error; NaN when not computed.
    pub see: f64,
    /// Coverage of `β̂ ± 1.96·ŝ`; NaN when `see` is.
    pub cp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub rows: Vec<MetricsRow>,
    /// Failed replications per estimator, in configuration order.
    pub failures: Vec<(String, usize)>,
}

impl EstimationReport {
    pub fn row(&self, estimator: &str, coef: usize) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.coef == coef)
    }
}

/// Estimate and standard errors for one estimator on one dataset. The SEE is
/// the plug-in covariance for LPRE and LS and random weighting otherwise;
/// with fewer than 2 resamples it is NaN.
pub fn estimate(
    criterion: &Criterion,
    data: &Dataset,
    resample_size: usize,
    seed: u64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let f = fit(criterion, data, &SolverOptions::default())?;
    let se = match criterion {
        Criterion::Lpre | Criterion::LsLog => plugin_covariance(&f, data)?.standard_errors(),
        _ if resample_size >= 2 => {
            random_weight_covariance(&f, data, resample_size, seed)?.standard_errors()
        }
        _ => DVector::from_element(data.p(), f64::NAN),
    };
    Ok((f.beta_hat.into_inner(), se))
}

type Replicate = Vec<Option<(DVector<f64>, DVector<f64>)>>;

pub fn run_estimation_study(cfg: &SimulationConfig, threads: Option<usize>) -> Result<EstimationReport> {
    cfg.validate().map_err(Error::Data)?;
    let sampler = ErrorSampler::new(cfg.error_law)?;
    let reps: Vec<Result<Replicate>> = with_threads(threads, || {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(cfg.seed, r as u64);
                let data = generate_dataset(&cfg.beta_true, cfg.n, &sampler, &mut rng)?;
                let rw_seed = derive_seed(cfg.seed, r as u64);
                Ok(cfg
                    .estimators
                    .iter()
                    .map(|c| estimate(c, &data, cfg.resample_size, rw_seed).ok())
                    .collect())
            })
            .collect()
    });
    let reps: Vec<Replicate> = reps.into_iter().collect::<Result<_>>()?;

    let p = cfg.p();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (k, criterion) in cfg.estimators.iter().enumerate() {
        let ok: Vec<&(DVector<f64>, DVector<f64>)> = reps.iter().filter_map(|r| r[k].as_ref()).collect();
        let failed = cfg.replications - ok.len();
        if failed as f64 > MAX_FAILURE_FRACTION * cfg.replications as f64 || ok.is_empty() {
            return Err(Error::Replications {
                what: criterion.label().to_string(),
                failed,
                total: cfg.replications,
            });
        }
        failures.push((criterion.label().to_string(), failed));
        for j in 0..p {
            let truth = cfg.beta_true[j];
            let est: Vec<f64> = ok.iter().map(|(b, _)| b[j]).collect();
            let ses: Vec<f64> = ok.iter().map(|(_, s)| s[j]).collect();
            let mean = lpre_core::stats::mean(&est);
            let covered = ok
                .iter()
                .filter(|(b, s)| (b[j] - truth).abs() <= Z_975 * s[j])
                .count();
            let see = lpre_core::stats::mean(&ses);
            rows.push(MetricsRow {
                estimator: criterion.label().to_string(),
                coef: j,
                bias: mean - truth,
                se: lpre_core::stats::sample_sd(&est),
                see,
                cp: if see.is_nan() { f64::NAN } else { covered as f64 / ok.len() as f64 },
            });
        }
    }
    Ok(EstimationReport { rows, failures })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub beta: Vec<f64>,
    pub alpha: f64,
    pub reject_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerReport {
    pub rows: Vec<PowerRow>,
    /// Mean of `M_n / scale` per grid point; about `q` under the null.
    pub mean_scaled_statistic: Vec<f64>,
    pub failures: Vec<usize>,
}

impl PowerReport {
    pub fn rate(&self, beta: &[f64], alpha: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.beta == beta && r.alpha == alpha)
            .map(|r| r.reject_rate)
    }
}

/// Rejection rates of the LPRE test over a grid of true coefficients.
/// Every grid point reuses the same replication streams, so neighbouring
/// points differ only through `β`.
pub fn run_power_study(
    cfg: &SimulationConfig,
    hypothesis: &LinearHypothesis,
    beta_grid: &[Coefficients],
    alphas: &[f64],
    threads: Option<usize>,
) -> Result<PowerReport> {
    let sampler = ErrorSampler::new(cfg.error_law)?;
    let mut rows = Vec::new();
    let mut mean_scaled_statistic = Vec::new();
    let mut failures = Vec::new();
    for beta in beta_grid {
        if beta.len() != hypothesis.p() {
            return Err(Error::Data(format!(
                "grid point has {} coefficients, hypothesis expects {}",
                beta.len(),
                hypothesis.p()
            )));
        }
        let results: Vec<Option<(f64, f64)>> = with_threads(threads, || {
            (0..cfg.replications)
                .into_par_iter()
                .map(|r| {
                    let mut rng = stream(cfg.seed, r as u64);
                    let data = generate_dataset(beta, cfg.n, &sampler, &mut rng).ok()?;
                    let t = lpre_anova_test(&data, hypothesis, &SolverOptions::default()).ok()?;
                    Some((t.p_value, t.statistic / t.scale))
                })
                .collect()
        });
        let ok: Vec<(f64, f64)> = results.into_iter().flatten().collect();
        let failed = cfg.replications - ok.len();
        if failed as f64 > MAX_FAILURE_FRACTION * cfg.replications as f64 || ok.is_empty() {
            return Err(Error::Replications {
                what: format!("power grid point {:?}", beta.to_vec()),
                failed,
                total: cfg.replications,
            });
        }
        failures.push(failed);
        let scaled: Vec<f64> = ok.iter().map(|&(_, s)| s).collect();
        mean_scaled_statistic.push(lpre_core::stats::mean(&scaled));
        for &alpha in alphas {
            let rejected = ok.iter().filter(|&&(p, _)| p < alpha).count();
            rows.push(PowerRow {
                beta: beta.to_vec(),
                alpha,
                reject_rate: rejected as f64 / ok.len() as f64,
            });
        }
    }
    Ok(PowerReport {
        rows,
        mean_scaled_statistic,
        failures,
    })
}

pub fn write_metrics(path: Option<&Path>, rows: &[MetricsRow]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.estimator.clone(),
                r.coef.to_string(),
                num(r.bias),
                num(r.se),
                num(r.see),
                num(r.cp),
            ]
        })
        .collect();
    write_csv(path, &["estimator", "coef", "bias", "se", "see", "cp"], &body)
}

pub fn write_power(path: Option<&Path>, rows: &[PowerRow]) -> Result<()> {
    let p = rows.first().map_or(3, |r| r.beta.len());
    let names: Vec<String> = (0..p).map(|j| format!("beta{j}")).collect();
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.extend(["alpha", "reject_rate"]);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v: Vec<String> = r.beta.iter().map(|&b| num(b)).collect();
            v.push(num(r.alpha));
            v.push(num(r.reject_rate));
            v
        })
        .collect();
    write_csv(path, &header, &body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lpre_core::distributions::ErrorLaw;

    #[test]
    fn degenerate_errors_give_exact_log_responses() {
        let sampler = ErrorSampler::new(ErrorLaw::Degenerate).unwrap();
        let beta = Coefficients::from_slice(&[1.0, 1.0, 1.0]);
        let data = generate_dataset(&beta, 50, &sampler, &mut stream(1, 0)).unwrap();
        let resid = data.log_y() - data.x() * beta.as_vector();
        assert!(resid.amax() < 1e-12);
    }

    #[test]
    fn degenerate_study_has_no_spread() {
        let cfg = SimulationConfig {
            n: 30,
            replications: 5,
            resample_size: 0,
            error_law: ErrorLaw::Degenerate,
            estimators: vec![Criterion::Lpre, Criterion::LsLog, Criterion::LadLog],
            ..SimulationConfig::default()
        };
        let report = run_estimation_study(&cfg, Some(1)).unwrap();
        for row in &report.rows {
            assert!(row.bias.abs() < 1e-8 && row.se < 1e-8, "{row:?}");
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cfg = SimulationConfig {
            n: 40,
            replications: 8,
            resample_size: 5,
            estimators: vec![Criterion::Lpre, Criterion::LadLog],
            ..SimulationConfig::default()
        };
        let a = run_estimation_study(&cfg, Some(1)).unwrap();
        let b = run_estimation_study(&cfg, Some(3)).unwrap();
        assert_eq!(a, b);
    }
}
