//! Standard errors, Wald p-values and ANOVA-type tests of linear hypotheses.
//!
//! For LPRE the covariance of `β̂` is the plug-in sandwich
//! `(1/n)·D̂⁻¹V̂D̂⁻¹` with
//!
//! ```text
//! D̂ = (1/n) Σ x_i x_i' (ε̂_i + 1/ε̂_i),    V̂ = (1/n) Σ x_i x_i' (ε̂_i − 1/ε̂_i)²,
//! ```
//!
//! where `ε̂_i = y_i·exp(−x_i'β̂)`. Nonsmooth criteria get their covariance
//! from random weighting: every observation's loss is multiplied by an
//! independent `Exp(1)` weight and the fit repeated.
//!
//! Under `H₀: H'β = 0` the LPRE statistic `M_n` (constrained minus
//! unconstrained minimum) behaves like `κ·χ²_q` with
//! `κ = E(ε − 1/ε)² / (4 E ε)`. [`lpre_k_hat`] is the reciprocal of `κ̂`,
//! so the reported p-value is the `χ²_q` upper tail at `M_n·K̂`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use rand_distr::{Distribution, Exp1};

use crate::linalg::require_full_rank;
use crate::model::{weighted_gram, Coefficients, Criterion, Dataset, Problem};
use crate::rng::stream;
use crate::solver::{
    fit, fit_constrained, minimize_in_subspace, minimize_local, FitResult, LinearHypothesis,
    SolverOptions,
};
use crate::special::{chi_squared_sf, normal_cdf};
use crate::{Error, Result};

/// Largest tolerated fraction of failed resamples.
pub const MAX_SKIP_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMethod {
    PluginSandwich,
    /// `σ̂²(X'X)⁻¹` for least squares on `log y`.
    PluginLeastSquares,
    RandomWeighting,
}

/// Bookkeeping for a resampling run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ResampleDiagnostics {
    pub requested: usize,
    pub used: usize,
    /// Resamples whose first weight draw failed and was redrawn.
    pub retried: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    /// Covariance of `β̂`, already divided by `n`.
    pub cov: DMatrix<f64>,
    pub method: CovarianceMethod,
    pub d_hat: Option<DMatrix<f64>>,
    pub v_hat: Option<DMatrix<f64>>,
    pub diagnostics: Option<ResampleDiagnostics>,
}

impl CovarianceEstimate {
    pub fn standard_errors(&self) -> DVector<f64> {
        self.cov.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub df: usize,
    /// Multiplier of `χ²_q` in the null distribution of the statistic.
    pub scale: f64,
    pub p_value: f64,
    pub resampling: Option<ResampleDiagnostics>,
}

/// How a z-ratio becomes a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PValueConvention {
    /// `1 − Φ(|z|)`, as printed in the published tables.
    #[default]
    Paper,
    /// `2(1 − Φ(|z|))`.
    TwoSided,
}

fn require_converged(fit: &FitResult) -> Result<()> {
    if fit.converged {
        Ok(())
    } else {
        Err(Error::invalid("covariance requested for a fit that did not converge"))
    }
}

fn invert(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse()).ok_or(Error::SingularDesign {
        rank: m.rank(1e-12),
        p: m.nrows(),
    })
}

/// Plug-in sandwich covariance of an LPRE fit.
pub fn sandwich_covariance(fit: &FitResult, data: &Dataset) -> Result<CovarianceEstimate> {
    let is_lpre = matches!(fit.criterion, Criterion::Lpre)
        || matches!(fit.criterion, Criterion::Gre(g) if g.name() == "product");
    if !is_lpre {
        return Err(Error::invalid(
            "the plug-in sandwich is only available for LPRE fits",
        ));
    }
    require_converged(fit)?;
    data.check_coefficients(&fit.beta_hat)?;
    let n = data.n() as f64;
    let t = data.problem().log_ratios(&fit.beta_hat)?;
    let d_w = t.map(|ti| 2.0 * ti.cosh());
    let v_w = t.map(|ti| {
        let s = 2.0 * ti.sinh();
        s * s
    });
    let d_hat = weighted_gram(data.x(), &d_w) / n;
    let v_hat = weighted_gram(data.x(), &v_w) / n;
    let d_inv = invert(&d_hat)?;
    let mut cov = &d_inv * &v_hat * &d_inv / n;
    symmetrize(&mut cov);
    Ok(CovarianceEstimate {
        cov,
        method: CovarianceMethod::PluginSandwich,
        d_hat: Some(d_hat),
        v_hat: Some(v_hat),
        diagnostics: None,
    })
}

/// Classical OLS covariance `σ̂²(X'X)⁻¹` with `σ̂² = RSS/(n − p)`.
pub fn ls_covariance(fit: &FitResult, data: &Dataset) -> Result<CovarianceEstimate> {
    if fit.criterion != Criterion::LsLog {
        return Err(Error::invalid("ls_covariance needs a least-squares fit"));
    }
    let (n, p) = (data.n(), data.p());
    if n <= p {
        return Err(Error::invalid("need n > p for the residual variance"));
    }
    let t = data.problem().log_ratios(&fit.beta_hat)?;
    let sigma2 = t.norm_squared() / (n - p) as f64;
    let gram = data.x().tr_mul(data.x());
    let mut cov = invert(&gram)? * sigma2;
    symmetrize(&mut cov);
    Ok(CovarianceEstimate {
        cov,
        method: CovarianceMethod::PluginLeastSquares,
        d_hat: Some(gram / n as f64),
        v_hat: None,
        diagnostics: None,
    })
}

/// Plug-in covariance where one exists (LPRE, LS).
pub fn plugin_covariance(fit: &FitResult, data: &Dataset) -> Result<CovarianceEstimate> {
    match fit.criterion {
        Criterion::LsLog => ls_covariance(fit, data),
        _ => sandwich_covariance(fit, data),
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

/// p-value for one coefficient. `0/0` gives 0.5 (the value of `1 − Φ(0)`
/// under the paper convention, 1 under the two-sided one); a zero standard
/// error with a nonzero estimate gives 0.
pub fn wald_p_value(estimate: f64, se: f64, convention: PValueConvention) -> f64 {
    let one_sided = if se == 0.0 {
        if estimate == 0.0 {
            0.5
        } else {
            0.0
        }
    } else {
        1.0 - normal_cdf((estimate / se).abs())
    };
    match convention {
        PValueConvention::Paper => one_sided,
        PValueConvention::TwoSided => (2.0 * one_sided).min(1.0),
    }
}

pub fn wald_p_values(
    fit: &FitResult,
    cov: &CovarianceEstimate,
    convention: PValueConvention,
) -> Result<Vec<f64>> {
    if cov.cov.nrows() != fit.beta_hat.len() {
        return Err(Error::invalid("covariance dimension does not match the fit"));
    }
    let se = cov.standard_errors();
    Ok(fit
        .beta_hat
        .iter()
        .zip(se.iter())
        .map(|(&b, &s)| wald_p_value(b, s, convention))
        .collect())
}

/// `K̂ = 4 Σ ε̂_i / Σ (ε̂_i − 1/ε̂_i)²` at `beta`. Infinite on an exact fit.
pub fn lpre_k_hat(beta: &Coefficients, data: &Dataset) -> Result<f64> {
    data.check_coefficients(beta)?;
    let t = data.problem().log_ratios(beta)?;
    let (mut num, mut den) = (0.0, 0.0);
    for &ti in t.iter() {
        let eps = (-ti).exp();
        num += eps;
        let d = eps - 1.0 / eps;
        den += d * d;
    }
    Ok(4.0 * num / den)
}

fn check_hypothesis(data: &Dataset, hypothesis: &LinearHypothesis) -> Result<()> {
    if hypothesis.p() != data.p() {
        return Err(Error::invalid(alloc::format!(
            "hypothesis is for {} coefficients but the design has {}",
            hypothesis.p(),
            data.p()
        )));
    }
    require_full_rank(data.x())
}

fn scaled_chi_squared_p(statistic: f64, scale: f64, df: usize) -> f64 {
    if statistic == 0.0 {
        1.0
    } else if scale == 0.0 {
        0.0
    } else {
        chi_squared_sf(statistic / scale, df as f64)
    }
}

/// LPRE test of `H₀: H'β = 0`. The statistic is `M_n`, `scale` is `1/K̂`,
/// and the p-value is `P(χ²_q > M_n·K̂)`.
pub fn lpre_anova_test(
    data: &Dataset,
    hypothesis: &LinearHypothesis,
    opts: &SolverOptions,
) -> Result<TestResult> {
    check_hypothesis(data, hypothesis)?;
    let full = fit(&Criterion::Lpre, data, opts)?;
    let reduced = fit_constrained(&Criterion::Lpre, data, hypothesis, opts)?;
    let statistic = (reduced.criterion_value - full.criterion_value).max(0.0);
    let scale = 1.0 / lpre_k_hat(&full.beta_hat, data)?;
    let df = hypothesis.q();
    Ok(TestResult {
        statistic,
        df,
        scale,
        p_value: scaled_chi_squared_p(statistic, scale, df),
        resampling: None,
    })
}

fn exponential_weights(rng: &mut crate::rng::StreamRng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| Exp1.sample(rng)))
}

/// Runs `one(weights)` for resample indices `0..n_resample`, each on its own
/// stream, redrawing once on failure and skipping after that.
fn resample<T, F>(
    n: usize,
    n_resample: usize,
    seed: u64,
    mut one: F,
) -> Result<(Vec<T>, ResampleDiagnostics)>
where
    F: FnMut(&DVector<f64>) -> Result<T>,
{
    if n_resample < 2 {
        return Err(Error::invalid("random weighting needs at least 2 resamples"));
    }
    let mut out = Vec::with_capacity(n_resample);
    let mut diag = ResampleDiagnostics {
        requested: n_resample,
        ..ResampleDiagnostics::default()
    };
    for b in 0..n_resample {
        let mut rng = stream(seed, b as u64);
        let first = one(&exponential_weights(&mut rng, n));
        let value = match first {
            Ok(v) => Some(v),
            Err(_) => {
                diag.retried += 1;
                one(&exponential_weights(&mut rng, n)).ok()
            }
        };
        match value {
            Some(v) => out.push(v),
            None => diag.skipped += 1,
        }
    }
    diag.used = out.len();
    if diag.skipped as f64 > MAX_SKIP_FRACTION * n_resample as f64 || diag.used < 2 {
        return Err(Error::Resampling {
            skipped: diag.skipped,
            total: n_resample,
        });
    }
    Ok((out, diag))
}

fn resample_fit(
    criterion: &Criterion,
    data: &Dataset,
    weights: &DVector<f64>,
    start: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<DVector<f64>> {
    let problem = Problem::new(data.x(), data.log_y(), Some(weights));
    let out = minimize_local(criterion, &problem, start.clone(), opts)?;
    if criterion.is_smooth() && !out.converged {
        return Err(Error::invalid("resample fit did not converge"));
    }
    Ok(out.beta)
}

/// Random-weighting covariance: the empirical covariance of `n_resample`
/// weighted re-fits, each started at `fit.beta_hat`.
pub fn random_weight_covariance(
    fit: &FitResult,
    data: &Dataset,
    n_resample: usize,
    seed: u64,
) -> Result<CovarianceEstimate> {
    data.check_coefficients(&fit.beta_hat)?;
    let opts = SolverOptions::default();
    let start = fit.beta_hat.as_vector().clone();
    let (estimates, diag) = resample(data.n(), n_resample, seed, |w| {
        resample_fit(&fit.criterion, data, w, &start, &opts)
    })?;
    let p = data.p();
    let m = estimates.len() as f64;
    let mean = estimates.iter().fold(DVector::zeros(p), |acc, b| acc + b) / m;
    let mut cov = DMatrix::zeros(p, p);
    for b in &estimates {
        let d = b - &mean;
        cov += &d * d.transpose();
    }
    cov /= m - 1.0;
    symmetrize(&mut cov);
    Ok(CovarianceEstimate {
        cov,
        method: CovarianceMethod::RandomWeighting,
        d_hat: None,
        v_hat: None,
        diagnostics: Some(diag),
    })
}

/// Test of `H₀: H'β = 0` for any criterion, calibrated by random weighting.
///
/// Each resample draws weights `w`, minimizes the weighted criterion `W`
/// freely and over `{β : H'(β − β̂) = 0}`, and records the difference of the
/// two minima. These differences mimic `M_n` under a null that holds at `β̂`;
/// the p-value is the fraction at or above the observed statistic and
/// `scale` is their mean over `q`.
pub fn gre_anova_test(
    criterion: &Criterion,
    data: &Dataset,
    hypothesis: &LinearHypothesis,
    n_resample: usize,
    seed: u64,
) -> Result<TestResult> {
    check_hypothesis(data, hypothesis)?;
    let opts = SolverOptions::default();
    let full = fit(criterion, data, &opts)?;
    let reduced = fit_constrained(criterion, data, hypothesis, &opts)?;
    let statistic = (reduced.criterion_value - full.criterion_value).max(0.0);

    let beta_hat = full.beta_hat.as_vector().clone();
    let local = SolverOptions::with_initial(full.beta_hat.clone());
    let basis = hypothesis.null_space_basis();
    let (null_draws, diag) = resample(data.n(), n_resample, seed, |w| {
        let problem = Problem::new(data.x(), data.log_y(), Some(w));
        let free = minimize_local(criterion, &problem, beta_hat.clone(), &opts)?;
        let tied = minimize_in_subspace(
            criterion,
            data.x(),
            data.log_y(),
            Some(w),
            basis,
            &beta_hat,
            &local,
            true,
        )?;
        if criterion.is_smooth() && !(free.converged && tied.converged) {
            return Err(Error::invalid("resample fit did not converge"));
        }
        let diff = problem.loss(criterion, &tied.beta)? - problem.loss(criterion, &free.beta)?;
        Ok(diff.max(0.0))
    })?;
    let used = null_draws.len() as f64;
    let exceed = null_draws.iter().filter(|&&m| m >= statistic).count() as f64;
    let df = hypothesis.q();
    Ok(TestResult {
        statistic,
        df,
        scale: null_draws.iter().sum::<f64>() / used / df as f64,
        p_value: exceed / used,
        resampling: Some(diag),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::lpre_hessian;
    use crate::solver::{fit_lpre, fit_ls_log};

    fn small_data() -> Dataset {
        let x = DMatrix::from_row_slice(
            6,
            2,
            &[1.0, -1.0, 1.0, -0.5, 1.0, 0.0, 1.0, 0.3, 1.0, 0.8, 1.0, 1.4],
        );
        let y = DVector::from_vec(alloc::vec![0.4, 0.9, 1.1, 1.9, 2.2, 4.5]);
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn d_hat_is_scaled_hessian() {
        let data = small_data();
        let f = fit_lpre(&data, &SolverOptions::default()).unwrap();
        let cov = sandwich_covariance(&f, &data).unwrap();
        let h = lpre_hessian(&f.beta_hat, &data).unwrap() / data.n() as f64;
        assert!((cov.d_hat.unwrap() - h).amax() < 1e-12);
    }

    #[test]
    fn exact_fit_has_zero_covariance() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = x.column(0) * 0.5 + x.column(1) * -0.25;
        let data = Dataset::new(x, y.map(f64::exp)).unwrap();
        let f = fit_lpre(&data, &SolverOptions::default()).unwrap();
        let cov = sandwich_covariance(&f, &data).unwrap();
        assert!(cov.cov.amax() < 1e-20);
        assert!(lpre_k_hat(&f.beta_hat, &data).unwrap() > 1e20);
    }

    #[test]
    fn p_value_conventions() {
        assert_eq!(wald_p_value(0.0, 1.0, PValueConvention::Paper), 0.5);
        assert_eq!(wald_p_value(0.0, 0.0, PValueConvention::Paper), 0.5);
        assert_eq!(wald_p_value(1.0, 0.0, PValueConvention::Paper), 0.0);
        assert!((wald_p_value(1.6448536269514722, 1.0, PValueConvention::Paper) - 0.05).abs() < 1e-12);
        assert!((wald_p_value(-1.959963984540054, 1.0, PValueConvention::TwoSided) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn sandwich_rejects_other_criteria() {
        let data = small_data();
        let f = fit_ls_log(&data).unwrap();
        assert!(sandwich_covariance(&f, &data).is_err());
        let c = plugin_covariance(&f, &data).unwrap();
        assert_eq!(c.method, CovarianceMethod::PluginLeastSquares);
    }

    #[test]
    fn statistic_vanishes_when_hypothesis_holds_at_the_fit() {
        let data = small_data();
        let f = fit_lpre(&data, &SolverOptions::default()).unwrap();
        // H orthogonal to β̂, so β̂ already satisfies H'β = 0
        let b = f.beta_hat.as_vector();
        let h = DMatrix::from_column_slice(2, 1, &[-b[1], b[0]]);
        let hyp = LinearHypothesis::new(h).unwrap();
        let r = lpre_anova_test(&data, &hyp, &SolverOptions::default()).unwrap();
        assert!(r.statistic < 1e-12, "{r:?}");
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn too_few_resamples_rejected() {
        let data = small_data();
        let f = fit_lpre(&data, &SolverOptions::default()).unwrap();
        assert!(random_weight_covariance(&f, &data, 1, 0).is_err());
    }

    #[test]
    fn random_weighting_is_reproducible() {
        let data = small_data();
        let f = fit_lpre(&data, &SolverOptions::default()).unwrap();
        let a = random_weight_covariance(&f, &data, 20, 3).unwrap();
        let b = random_weight_covariance(&f, &data, 20, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.diagnostics.unwrap().used, 20);
    }
}
