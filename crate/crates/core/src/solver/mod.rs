//! Minimizers for every criterion, unconstrained and on the null space of a
//! linear hypothesis.
//!
//! | criterion          | algorithm                                           |
//! |--------------------|-----------------------------------------------------|
//! | LPRE               | damped Newton, Armijo backtracking                  |
//! | LS on `log y`      | normal equations (thin QR)                          |
//! | LAD on `log y`     | smoothed IRLS with a vertex polish                  |
//! | LARE / other GRE   | Nelder–Mead from the LS and LPRE fits, best kept,   |
//! |                    | then active-set Newton                              |
//!
//! Unless `initial_beta` is given, iterative solvers start from the
//! least-squares fit on `log y`.

mod lad;
mod newton;
mod polish;
mod simplex;

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{least_squares, null_space_basis, require_full_rank, weighted_least_squares};
use crate::model::{Coefficients, Criterion, Dataset, GreCriterion, Problem};
use crate::{Error, Result};

pub(crate) use simplex::SimplexOptions;

/// Solver settings shared by all criteria.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Convergence threshold on the norm of the per-observation average gradient.
    pub tol_gradient: f64,
    /// Iteration cap; `None` means 100 for Newton and 5000 for the nonsmooth solvers.
    pub max_iterations: Option<usize>,
    pub initial_beta: Option<Coefficients>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_gradient: 1e-10,
            max_iterations: None,
            initial_beta: None,
        }
    }
}

impl SolverOptions {
    pub fn with_initial(beta: Coefficients) -> Self {
        Self {
            initial_beta: Some(beta),
            ..Self::default()
        }
    }

    pub fn newton_iterations(&self) -> usize {
        self.max_iterations.unwrap_or(100)
    }

    pub fn nonsmooth_iterations(&self) -> usize {
        self.max_iterations.unwrap_or(5000)
    }

    fn validate(&self, p: usize) -> Result<()> {
        if !(self.tol_gradient > 0.0) {
            return Err(Error::invalid("tol_gradient must be positive"));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if let Some(beta) = &self.initial_beta {
            if beta.len() != p {
                return Err(Error::invalid(format!(
                    "initial_beta has length {} but the design has {p} columns",
                    beta.len()
                )));
            }
        }
        Ok(())
    }
}

/// Estimated coefficients with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta_hat: Coefficients,
    /// Criterion at `beta_hat` (unweighted, over the full dataset).
    pub criterion_value: f64,
    /// Average-gradient norm for smooth criteria; `None` for nonsmooth ones.
    /// For constrained fits this is the gradient projected onto the null space.
    pub gradient_norm: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub criterion: Criterion,
}

/// Linear hypothesis `H'β = 0` for a p × q matrix `H` of independent columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHypothesis {
    h: DMatrix<f64>,
    basis: DMatrix<f64>,
}

impl LinearHypothesis {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        if h.ncols() == 0 {
            return Err(Error::invalid("hypothesis needs at least one constraint"));
        }
        let basis = null_space_basis(&h)?;
        Ok(Self { h, basis })
    }

    /// Coordinate selectors: the listed coefficients are jointly zero.
    pub fn zero_coefficients(p: usize, indices: &[usize]) -> Result<Self> {
        let mut sorted: Vec<usize> = indices.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != indices.len() {
            return Err(Error::invalid("repeated coefficient index in hypothesis"));
        }
        if let Some(&bad) = sorted.iter().find(|&&j| j >= p) {
            return Err(Error::invalid(format!(
                "coefficient index {bad} out of range for p = {p}"
            )));
        }
        let mut h = DMatrix::zeros(p, indices.len());
        for (k, &j) in indices.iter().enumerate() {
            h[(j, k)] = 1.0;
        }
        Self::new(h)
    }

    pub fn p(&self) -> usize {
        self.h.nrows()
    }

    pub fn q(&self) -> usize {
        self.h.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Orthonormal basis of `{b : H'b = 0}`, p × (p − q).
    pub fn null_space_basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn contains(&self, beta: &DVector<f64>, tol: f64) -> bool {
        self.h.tr_mul(beta).amax() <= tol
    }
}

pub(crate) struct Outcome {
    pub beta: DVector<f64>,
    pub gradient_norm: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `criterion` on a (possibly weighted, possibly reduced) problem.
pub(crate) fn minimize(
    criterion: &Criterion,
    problem: &Problem<'_>,
    start: Option<DVector<f64>>,
    opts: &SolverOptions,
) -> Result<Outcome> {
    let ls_start = || match problem.weights {
        Some(w) => weighted_least_squares(problem.x, problem.log_y, w),
        None => least_squares(problem.x, problem.log_y),
    };
    match criterion {
        Criterion::LsLog => Ok(Outcome {
            beta: ls_start()?,
            gradient_norm: Some(0.0),
            iterations: 1,
            converged: true,
        }),
        Criterion::Lpre => {
            let start = match start {
                Some(s) => s,
                None => ls_start()?,
            };
            let out = newton::minimize_lpre(
                problem,
                start,
                opts.tol_gradient,
                opts.newton_iterations(),
            )?;
            Ok(Outcome {
                beta: out.beta,
                gradient_norm: Some(out.gradient_norm),
                iterations: out.iterations,
                converged: out.converged,
            })
        }
        Criterion::Gre(g) if g.name() == "product" && g.is_smooth() => {
            minimize(&Criterion::Lpre, problem, start, opts)
        }
        Criterion::LadLog => {
            let start = match start {
                Some(s) => s,
                None => ls_start()?,
            };
            let out = lad::minimize_lad(problem, start, opts.nonsmooth_iterations())?;
            Ok(Outcome {
                beta: out.beta,
                gradient_norm: None,
                iterations: out.iterations,
                converged: out.converged,
            })
        }
        Criterion::Lare | Criterion::Gre(_) => {
            let mut starts = Vec::with_capacity(3);
            if let Some(s) = start {
                starts.push(s);
            }
            let ls = ls_start()?;
            if let Ok(lpre) = minimize(&Criterion::Lpre, problem, Some(ls.clone()), opts) {
                starts.push(lpre.beta);
            }
            starts.push(ls);
            simplex_fit(criterion, problem, &starts, opts)
        }
    }
}

/// Like [`minimize`], but the nonsmooth solvers search only from `start`.
/// Used by resampling, where the full-data fit is already a good start.
pub(crate) fn minimize_local(
    criterion: &Criterion,
    problem: &Problem<'_>,
    start: DVector<f64>,
    opts: &SolverOptions,
) -> Result<Outcome> {
    match criterion {
        Criterion::Lare => simplex_fit(criterion, problem, &[start], opts),
        Criterion::Gre(g) if !g.is_smooth() => simplex_fit(criterion, problem, &[start], opts),
        _ => minimize(criterion, problem, Some(start), opts),
    }
}

fn simplex_fit(
    criterion: &Criterion,
    problem: &Problem<'_>,
    starts: &[DVector<f64>],
    opts: &SolverOptions,
) -> Result<Outcome> {
    let tight = SimplexOptions {
        max_iterations: opts.nonsmooth_iterations(),
        ..SimplexOptions::default()
    };
    // A rough simplex answer usually pins down the active rows; the full
    // tolerance is only needed when the refinement cannot certify it.
    let rough = SimplexOptions {
        xtol: 1e-6,
        ftol: 1e-10,
        ..tight
    };
    let objective = |b: &DVector<f64>| problem.loss(criterion, b).unwrap_or(f64::INFINITY);
    let mut best: Option<simplex::SimplexOutcome> = None;
    let mut iterations = 0;
    for s in starts {
        let out = simplex::nelder_mead(objective, s, &rough);
        iterations += out.iterations;
        if best.as_ref().is_none_or(|b| out.value < b.value) {
            best = Some(out);
        }
    }
    let mut best = best.expect("at least one start");
    if !best.value.is_finite() {
        return Err(Error::NumericOverflow(f64::INFINITY));
    }
    let mut certified = false;
    let refine = |best: &mut simplex::SimplexOutcome| {
        if let Some(r) = polish::refine(criterion, problem, &best.x) {
            let value = objective(&r.beta);
            if value <= best.value * (1.0 + 1e-12) {
                best.x = r.beta;
                best.value = value;
                return r.certified;
            }
        }
        false
    };
    if best.converged {
        certified = refine(&mut best);
    }
    if !certified {
        let budget = tight.max_iterations.saturating_sub(iterations).max(1);
        let out = simplex::nelder_mead(
            objective,
            &best.x,
            &SimplexOptions {
                max_iterations: budget,
                ..tight
            },
        );
        iterations += out.iterations;
        if out.value <= best.value {
            best = out;
        } else {
            best.converged = out.converged;
        }
        certified = refine(&mut best);
    }
    Ok(Outcome {
        beta: best.x,
        gradient_norm: None,
        iterations,
        converged: best.converged || certified,
    })
}

fn finish(
    criterion: Criterion,
    data: &Dataset,
    outcome: Outcome,
    raise_on_failure: bool,
) -> Result<FitResult> {
    let beta_hat = Coefficients::new(outcome.beta);
    let criterion_value = data.problem().loss(&criterion, &beta_hat)?;
    let fit = FitResult {
        beta_hat,
        criterion_value,
        gradient_norm: outcome.gradient_norm,
        iterations: outcome.iterations,
        converged: outcome.converged,
        criterion,
    };
    if raise_on_failure && !fit.converged {
        return Err(Error::NoConvergence {
            iterations: fit.iterations,
            best: Box::new(fit),
        });
    }
    Ok(fit)
}

/// Fits any supported criterion.
///
/// A Newton failure (LPRE) is an error carrying the best iterate; the
/// nonsmooth solvers return their best point with `converged = false`.
pub fn fit(criterion: &Criterion, data: &Dataset, opts: &SolverOptions) -> Result<FitResult> {
    opts.validate(data.p())?;
    require_full_rank(data.x())?;
    let start = opts.initial_beta.as_ref().map(|b| b.as_vector().clone());
    let outcome = minimize(criterion, &data.problem(), start, opts)?;
    let smooth = matches!(criterion, Criterion::Lpre)
        || matches!(criterion, Criterion::Gre(g) if g.is_smooth());
    finish(*criterion, data, outcome, smooth)
}

/// Least product relative error fit.
pub fn fit_lpre(data: &Dataset, opts: &SolverOptions) -> Result<FitResult> {
    fit(&Criterion::Lpre, data, opts)
}

/// Ordinary least squares on `log y`.
pub fn fit_ls_log(data: &Dataset) -> Result<FitResult> {
    fit(&Criterion::LsLog, data, &SolverOptions::default())
}

/// Least absolute deviations on `log y`.
pub fn fit_lad_log(data: &Dataset, opts: &SolverOptions) -> Result<FitResult> {
    fit(&Criterion::LadLog, data, opts)
}

pub fn fit_lare(data: &Dataset, opts: &SolverOptions) -> Result<FitResult> {
    fit(&Criterion::Lare, data, opts)
}

pub fn fit_gre(criterion: &GreCriterion, data: &Dataset, opts: &SolverOptions) -> Result<FitResult> {
    let c = match criterion.name() {
        "product" => Criterion::Lpre,
        "sum" => Criterion::Lare,
        _ => Criterion::Gre(*criterion),
    };
    fit(&c, data, opts)
}

/// Minimizes `criterion` over `{β : H'β = 0}` by solving in coordinates of
/// an orthonormal null-space basis.
pub fn fit_constrained(
    criterion: &Criterion,
    data: &Dataset,
    hypothesis: &LinearHypothesis,
    opts: &SolverOptions,
) -> Result<FitResult> {
    opts.validate(data.p())?;
    if hypothesis.p() != data.p() {
        return Err(Error::invalid(format!(
            "hypothesis is for {} coefficients but the design has {}",
            hypothesis.p(),
            data.p()
        )));
    }
    require_full_rank(data.x())?;
    let offset = DVector::zeros(data.p());
    let outcome = minimize_in_subspace(
        criterion,
        data.x(),
        data.log_y(),
        None,
        hypothesis.null_space_basis(),
        &offset,
        opts,
        false,
    )?;
    let smooth = matches!(criterion, Criterion::Lpre);
    finish(*criterion, data, outcome, smooth)
}

pub fn fit_constrained_lpre(
    data: &Dataset,
    hypothesis: &LinearHypothesis,
    opts: &SolverOptions,
) -> Result<FitResult> {
    fit_constrained(&Criterion::Lpre, data, hypothesis, opts)
}

/// Minimizes over the affine set `offset + span(basis)`; the returned `beta`
/// is in full coordinates.
pub(crate) fn minimize_in_subspace(
    criterion: &Criterion,
    x: &DMatrix<f64>,
    log_y: &DVector<f64>,
    weights: Option<&DVector<f64>>,
    basis: &DMatrix<f64>,
    offset: &DVector<f64>,
    opts: &SolverOptions,
    local: bool,
) -> Result<Outcome> {
    if basis.ncols() == 0 {
        return Ok(Outcome {
            beta: offset.clone(),
            gradient_norm: Some(0.0),
            iterations: 0,
            converged: true,
        });
    }
    let reduced_x = x * basis;
    let reduced_y = log_y - x * offset;
    let problem = Problem::new(&reduced_x, &reduced_y, weights);
    let start = opts
        .initial_beta
        .as_ref()
        .map(|b| basis.tr_mul(&(b.as_vector() - offset)));
    let out = match start {
        Some(start) if local => minimize_local(criterion, &problem, start, opts)?,
        start => minimize(criterion, &problem, start, opts)?,
    };
    Ok(Outcome {
        beta: offset + basis * out.beta,
        ..out
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{lpre_gradient, lpre_loss};
    use core::f64::consts::E;

    fn intercept_only(y: &[f64]) -> Dataset {
        Dataset::new(
            DMatrix::from_element(y.len(), 1, 1.0),
            DVector::from_column_slice(y),
        )
        .unwrap()
    }

    fn exact_fit() -> (Dataset, DVector<f64>) {
        let x = DMatrix::from_row_slice(
            5,
            3,
            &[
                1.0, 0.1, -1.0, 1.0, 1.2, 0.4, 1.0, -0.7, 0.3, 1.0, 0.5, 1.5, 1.0, -1.4, -0.2,
            ],
        );
        let beta = DVector::from_column_slice(&[0.5, -1.0, 2.0]);
        let y = (&x * &beta).map(f64::exp);
        (Dataset::new(x, y).unwrap(), beta)
    }

    #[test]
    fn exact_fit_recovered_by_every_estimator() {
        let (data, beta) = exact_fit();
        let opts = SolverOptions::default();
        for c in [
            Criterion::Lpre,
            Criterion::LsLog,
            Criterion::LadLog,
            Criterion::Lare,
            Criterion::Gre(GreCriterion::max()),
            Criterion::Gre(GreCriterion::asymmetric()),
        ] {
            let f = fit(&c, &data, &opts).unwrap();
            let tol = if c.is_smooth() { 1e-10 } else { 1e-8 };
            assert!(
                (f.beta_hat.as_vector() - &beta).amax() < tol,
                "{c}: {:?}",
                f.beta_hat
            );
            assert!(f.criterion_value < 1e-12, "{c}: {}", f.criterion_value);
        }
    }

    #[test]
    fn intercept_only_closed_form() {
        let y = [1.0, E * E];
        let f = fit_lpre(&intercept_only(&y), &SolverOptions::default()).unwrap();
        assert!((f.beta_hat[0] - 1.0).abs() < 1e-12);
        let ls = fit_ls_log(&intercept_only(&y)).unwrap();
        assert!((ls.beta_hat[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn singular_design_is_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let data = Dataset::new(x, DVector::from_element(3, 2.0)).unwrap();
        assert!(matches!(
            fit_lpre(&data, &SolverOptions::default()),
            Err(Error::SingularDesign { rank: 1, p: 2 })
        ));
        assert!(fit_lare(&data, &SolverOptions::default()).is_err());
    }

    #[test]
    fn newton_iteration_cap_reports_best_iterate() {
        let (data, _) = exact_fit();
        let opts = SolverOptions {
            max_iterations: Some(1),
            initial_beta: Some(Coefficients::zeros(3)),
            ..SolverOptions::default()
        };
        match fit_lpre(&data, &opts) {
            Err(Error::NoConvergence { iterations, best }) => {
                assert_eq!(iterations, 1);
                assert!(!best.converged);
                let start = lpre_loss(&Coefficients::zeros(3), &data).unwrap();
                assert!(best.criterion_value < start);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn full_constraint_returns_origin() {
        let (data, _) = exact_fit();
        let h = LinearHypothesis::new(DMatrix::identity(3, 3)).unwrap();
        let f = fit_constrained_lpre(&data, &h, &SolverOptions::default()).unwrap();
        assert_eq!(f.beta_hat.as_vector(), &DVector::zeros(3));
        let at_zero = lpre_loss(&Coefficients::zeros(3), &data).unwrap();
        assert_eq!(f.criterion_value, at_zero);
    }

    #[test]
    fn constrained_gradient_orthogonal_to_null_space() {
        let (data, _) = exact_fit();
        let h = LinearHypothesis::zero_coefficients(3, &[2]).unwrap();
        let f = fit_constrained_lpre(&data, &h, &SolverOptions::default()).unwrap();
        assert!(f.beta_hat[2].abs() < 1e-14);
        let g = lpre_gradient(&f.beta_hat, &data).unwrap();
        let projected = h.null_space_basis().tr_mul(&g);
        assert!(projected.amax() < 1e-9, "{projected}");
        let unconstrained = fit_lpre(&data, &SolverOptions::default()).unwrap();
        assert!(f.criterion_value >= unconstrained.criterion_value);
    }

    #[test]
    fn hypothesis_validation() {
        assert!(LinearHypothesis::zero_coefficients(3, &[3]).is_err());
        assert!(LinearHypothesis::zero_coefficients(3, &[1, 1]).is_err());
        assert!(LinearHypothesis::new(DMatrix::zeros(3, 0)).is_err());
        let h = LinearHypothesis::zero_coefficients(3, &[1, 2]).unwrap();
        assert_eq!((h.p(), h.q()), (3, 2));
        assert!(h.contains(&DVector::from_column_slice(&[4.0, 0.0, 0.0]), 0.0));
    }

    #[test]
    fn newton_trace_never_increases() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -2.0, 1.0, 0.0, 1.0, 1.0, 1.0, 3.0]);
        let y = DVector::from_column_slice(&[0.2, 3.0, 1.1, 40.0]);
        let problem_data = Dataset::new(x, y).unwrap();
        let out = newton::minimize_lpre(
            &problem_data.problem(),
            DVector::from_column_slice(&[4.0, -3.0]),
            1e-12,
            100,
        )
        .unwrap();
        assert!(out.converged, "{:?}", out);
        for w in out.trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 4.0 * f64::EPSILON), "{:?}", out.trace);
        }
    }
}
