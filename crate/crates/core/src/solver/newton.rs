//! Damped Newton iteration for the (weighted) LPRE criterion.
//!
//! The Hessian `Σ w_i x_i x_i' 2cosh(t_i)` is positive definite for a full
//! rank design, so the Newton direction is always a descent direction. Steps
//! are halved until the Armijo condition holds; the decrease is evaluated
//! term by term so that it stays accurate once it falls below the rounding
//! level of the criterion itself.

use alloc::vec::Vec;

use nalgebra::DVector;
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

use crate::linalg::solve_spd;
use crate::model::Problem;
use crate::{Error, Result};

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub beta: DVector<f64>,
    /// Euclidean norm of the weight-averaged gradient.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Criterion value at every accepted iterate, starting point included.
    #[cfg_attr(not(test), allow(dead_code))]
    pub trace: Vec<f64>,
}

/// `f(t + dt) − f(t)` for one LPRE summand `f(t) = 4 sinh²(t/2)`, without
/// cancellation.
#[inline]
fn summand_change(t: f64, dt: f64) -> f64 {
    let sinh_diff = 2.0 * (0.25 * (2.0 * t + dt)).cosh() * (0.25 * dt).sinh();
    4.0 * sinh_diff * ((0.5 * (t + dt)).sinh() + (0.5 * t).sinh())
}

pub(crate) fn minimize_lpre(
    problem: &Problem<'_>,
    start: DVector<f64>,
    tol_gradient: f64,
    max_iterations: usize,
) -> Result<NewtonOutcome> {
    let weight_sum: f64 = (0..problem.n()).map(|i| problem.weight(i)).sum();
    let scale = if weight_sum > 0.0 { weight_sum } else { 1.0 };

    let mut beta = start;
    let mut t = problem.log_ratios(&beta)?;
    let (mut value, mut grad, mut hess) = problem.lpre_derivatives(&beta)?;
    let mut trace = alloc::vec![value];
    let mut iterations = 0;

    loop {
        let gradient_norm = grad.norm() / scale;
        if gradient_norm <= tol_gradient {
            return Ok(NewtonOutcome {
                beta,
                gradient_norm,
                iterations,
                converged: true,
                trace,
            });
        }
        if iterations >= max_iterations {
            return Ok(NewtonOutcome {
                beta,
                gradient_norm,
                iterations,
                converged: false,
                trace,
            });
        }
        iterations += 1;

        let direction = solve_spd(&hess, &(-&grad)).ok_or(Error::SingularDesign {
            rank: problem.p().saturating_sub(1),
            p: problem.p(),
        })?;
        let slope = grad.dot(&direction);

        let full_dt = problem.x * &direction;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = &beta + step * &direction;
            if let Ok(t_new) = problem.log_ratios(&candidate) {
                let change: f64 = t
                    .iter()
                    .zip(full_dt.iter())
                    .enumerate()
                    .map(|(i, (&ti, &dti))| problem.weight(i) * summand_change(ti, step * dti))
                    .sum();
                if change <= ARMIJO * step * slope {
                    accepted = Some((candidate, t_new));
                    break;
                }
            }
            step *= 0.5;
        }

        let Some((candidate, t_new)) = accepted else {
            // no representable decrease along the Newton direction
            let gradient_norm = grad.norm() / scale;
            return Ok(NewtonOutcome {
                beta,
                gradient_norm,
                iterations,
                converged: false,
                trace,
            });
        };
        let (v, g, h) = problem.lpre_derivatives(&candidate)?;
        value = v;
        beta = candidate;
        t = t_new;
        grad = g;
        hess = h;
        trace.push(value);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Criterion;

    #[test]
    fn summand_change_matches_direct_difference() {
        for &(t, dt) in &[(0.3, -0.5), (-2.0, 3.5), (0.0, 1e-3), (4.0, 1e-9)] {
            let f = |t: f64| Criterion::Lpre.summand(t);
            let direct = f(t + dt) - f(t);
            assert!((summand_change(t, dt) - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }
}
