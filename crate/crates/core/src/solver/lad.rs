//! Least absolute deviations on the log scale.
//!
//! A few sweeps of iteratively reweighted least squares (weights
//! `w_i / max(|r_i|, ε_w)`, `ε_w = 1e-8`) bring the fit near the optimum; the
//! `p` smallest residuals then name a vertex of the L1 problem, and vertex
//! descent exchanges one interpolated row at a time until the optimality
//! conditions hold. If no vertex can be formed the IRLS iteration runs to
//! convergence instead.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::polish::is_optimal;
use crate::linalg::{least_squares, weighted_least_squares};
use crate::model::{Criterion, Problem};
use crate::Result;

pub(crate) const SMOOTHING: f64 = 1e-8;
const WARM_SWEEPS: usize = 8;

#[derive(Debug, Clone)]
pub(crate) struct LadOutcome {
    pub beta: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn minimize_lad(
    problem: &Problem<'_>,
    start: DVector<f64>,
    max_iterations: usize,
) -> Result<LadOutcome> {
    let objective = |beta: &DVector<f64>| problem.loss(&Criterion::LadLog, beta);
    let mut beta = start;
    let mut value = objective(&beta)?;
    let mut iterations = 0;

    let mut irls_converged = false;
    let sweep = |beta: &mut DVector<f64>, value: &mut f64| -> Result<bool> {
        let next = irls_step(problem, beta)?;
        let next_value = objective(&next)?;
        let small_step = (&next - &*beta).amax() <= 1e-12 * (1.0 + beta.amax());
        let improved = next_value < *value;
        if improved {
            *beta = next;
            *value = next_value;
        }
        Ok(small_step || !improved)
    };
    while iterations < WARM_SWEEPS.min(max_iterations) {
        iterations += 1;
        if sweep(&mut beta, &mut value)? {
            irls_converged = true;
            break;
        }
    }

    if let Some((vertex, rows)) = vertex_fit(problem, &beta) {
        let out = vertex_descent(problem, vertex, rows, max_iterations.saturating_sub(iterations))?;
        iterations += out.iterations;
        let v = objective(&out.beta)?;
        if out.converged || v <= value {
            return Ok(LadOutcome {
                beta: out.beta,
                iterations,
                converged: out.converged,
            });
        }
    }

    while !irls_converged && iterations < max_iterations {
        iterations += 1;
        irls_converged = sweep(&mut beta, &mut value)?;
    }
    Ok(LadOutcome {
        beta,
        iterations,
        converged: irls_converged,
    })
}

fn irls_step(problem: &Problem<'_>, beta: &DVector<f64>) -> Result<DVector<f64>> {
    let residuals = problem.log_y - problem.x * beta;
    let w = DVector::from_iterator(
        problem.n(),
        residuals
            .iter()
            .enumerate()
            .map(|(i, r)| problem.weight(i) / r.abs().max(SMOOTHING)),
    );
    weighted_least_squares(problem.x, problem.log_y, &w)
}

/// Exact fit through the `p` positively weighted rows with the smallest residuals.
fn vertex_fit(problem: &Problem<'_>, beta: &DVector<f64>) -> Option<(DVector<f64>, Vec<usize>)> {
    let p = problem.p();
    let residuals = problem.log_y - problem.x * beta;
    let mut order: Vec<usize> = (0..problem.n()).filter(|&i| problem.weight(i) > 0.0).collect();
    if order.len() < p {
        return None;
    }
    order.sort_by(|&a, &b| residuals[a].abs().total_cmp(&residuals[b].abs()));
    order.truncate(p);
    let x: DMatrix<f64> = problem.x.select_rows(&order);
    let b: DVector<f64> = problem.log_y.select_rows(&order);
    least_squares(&x, &b).ok().map(|v| (v, order))
}

/// Moves between adjacent vertices, each step releasing the interpolated
/// row whose multiplier is most out of bounds and following that edge to
/// the minimum of the piecewise-linear objective.
fn vertex_descent(
    problem: &Problem<'_>,
    mut beta: DVector<f64>,
    mut basis: Vec<usize>,
    max_iterations: usize,
) -> Result<LadOutcome> {
    let n = problem.n();
    let mut value = problem.loss(&Criterion::LadLog, &beta)?;
    let mut iterations = 0;
    while iterations < max_iterations {
        if is_optimal(&Criterion::LadLog, problem, &beta, &basis) {
            return Ok(LadOutcome { beta, iterations, converged: true });
        }
        iterations += 1;
        let t = problem.log_ratios(&beta)?;
        let xb: DMatrix<f64> = problem.x.select_rows(&basis);
        let mut g = DVector::zeros(problem.p());
        for i in (0..n).filter(|i| !basis.contains(i)) {
            g.axpy(problem.weight(i) * Criterion::LadLog.score(t[i]), &problem.x.row(i).transpose(), 1.0);
        }
        let Some(lu) = xb.clone().lu().try_inverse() else {
            break;
        };
        let u = -(lu.transpose() * &g);
        let (slot, excess) = basis
            .iter()
            .enumerate()
            .map(|(k, &i)| (k, u[k].abs() - problem.weight(i)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty basis");
        if excess <= 0.0 {
            break;
        }
        let leaving = basis[slot];
        let d: DVector<f64> = lu.column(slot) * u[slot].signum();
        let a = problem.x * &d;

        let mut slope = problem.weight(leaving);
        let mut breaks: Vec<(f64, usize)> = Vec::new();
        for i in (0..n).filter(|i| !basis.contains(i) && problem.weight(*i) > 0.0) {
            if a[i] == 0.0 {
                continue;
            }
            let side = if t[i] != 0.0 { t[i].signum() } else { a[i].signum() };
            slope += problem.weight(i) * side * a[i];
            let tau = -t[i] / a[i];
            if tau > 0.0 {
                breaks.push((tau, i));
            }
        }
        if slope >= 0.0 {
            break;
        }
        breaks.sort_by(|x, y| x.0.total_cmp(&y.0));
        let Some(&(_, entering)) = breaks.iter().find(|&&(_, i)| {
            slope += 2.0 * problem.weight(i) * a[i].abs();
            slope >= 0.0
        }) else {
            break;
        };
        basis[slot] = entering;
        let x: DMatrix<f64> = problem.x.select_rows(&basis);
        let b: DVector<f64> = problem.log_y.select_rows(&basis);
        let Ok(next) = least_squares(&x, &b) else {
            break;
        };
        let next_value = problem.loss(&Criterion::LadLog, &next)?;
        if !(next_value < value) {
            break;
        }
        beta = next;
        value = next_value;
    }
    let converged = is_optimal(&Criterion::LadLog, problem, &beta, &basis);
    Ok(LadOutcome { beta, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn random_problem(seed: u64, n: usize) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let mut rng = stream(seed, 0);
        let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
        let ly = DVector::from_fn(n, |i, _| x[(i, 1)] + rng.random_range(-1.0..1.0));
        let w = DVector::from_fn(n, |_, _| -rng.random::<f64>().ln());
        (x, ly, w)
    }

    #[test]
    fn weighted_fits_reach_a_certified_vertex() {
        for seed in 0..50 {
            let (x, ly, w) = random_problem(seed, 120);
            let pr = Problem::new(&x, &ly, Some(&w));
            let out = minimize_lad(&pr, least_squares(&x, &ly).unwrap(), 5000).unwrap();
            assert!(out.converged, "seed {seed}");
            assert!(out.iterations < 100, "seed {seed}: {}", out.iterations);
        }
    }

    #[test]
    fn descent_from_a_poor_vertex() {
        let (x, ly, _) = random_problem(7, 80);
        let pr = Problem::new(&x, &ly, None);
        let rows = alloc::vec![0, 1, 2];
        let start = least_squares(&x.select_rows(&rows), &ly.select_rows(&rows)).unwrap();
        let out = vertex_descent(&pr, start, rows, 1000).unwrap();
        assert!(out.converged);
        let best = minimize_lad(&pr, DVector::zeros(3), 5000).unwrap();
        assert!((out.beta - best.beta).amax() < 1e-12);
    }
}
