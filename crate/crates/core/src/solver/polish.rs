//! Active-set Newton refinement for the nonsmooth relative-error criteria.
//!
//! Their summands are smooth except at `t = 0`, so near the optimum the rows
//! with `t_i ≈ 0` fix an affine subspace `{β : x_i'β = log y_i}` on which the
//! remaining rows form a smooth convex problem. Newton's method there turns a
//! rough simplex answer into one accurate to rounding, and the subgradient
//! conditions at the result certify it as the minimizer.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

use crate::linalg::{least_squares, null_space_basis, rank_report, solve_spd};
use crate::model::{Criterion, Problem};

/// Rows with `|t_i|` below this are treated as sitting on the kink.
const ACTIVE: f64 = 1e-7;
const MAX_STEPS: usize = 50;

pub(crate) struct Refined {
    pub beta: DVector<f64>,
    /// The subgradient optimality conditions hold at `beta`.
    pub certified: bool,
}

pub(crate) fn refine(criterion: &Criterion, problem: &Problem<'_>, beta: &DVector<f64>) -> Option<Refined> {
    let p = problem.p();
    let t = problem.log_ratios(beta).ok()?;
    let mut active: Vec<usize> = (0..problem.n())
        .filter(|&i| problem.weight(i) > 0.0 && t[i].abs() <= ACTIVE)
        .collect();
    active.sort_by(|&a, &b| t[a].abs().total_cmp(&t[b].abs()));
    active.truncate(p);
    let xs: DMatrix<f64> = problem.x.select_rows(&active);
    let k = active.len();

    // project onto the active subspace
    let mut start = beta.clone();
    if k > 0 {
        let report = rank_report(&xs.transpose());
        if report.rank < k || report.smallest_singular_value <= 1e-10 * report.largest_singular_value {
            return None;
        }
        let resid: DVector<f64> = &xs * beta - problem.log_y.select_rows(&active);
        let gram = &xs * xs.transpose();
        start -= xs.tr_mul(&solve_spd(&gram, &resid)?);
    }
    if k == p {
        let certified = is_optimal(criterion, problem, &start, &active);
        return Some(Refined { beta: start, certified });
    }
    let basis = null_space_basis(&xs.transpose()).ok()?;

    let inactive: Vec<usize> = (0..problem.n())
        .filter(|i| !active.contains(i) && problem.weight(*i) > 0.0)
        .collect();
    let loss = |b: &DVector<f64>| problem.loss(criterion, b).unwrap_or(f64::INFINITY);
    // reduced gradient and Hessian on the active subspace
    let derivatives = |b: &DVector<f64>| -> Option<(DVector<f64>, DMatrix<f64>)> {
        let t = problem.log_ratios(b).ok()?;
        let mut g = DVector::zeros(p);
        let mut h = DMatrix::zeros(p, p);
        for &i in &inactive {
            let w = problem.weight(i);
            let ti = t[i];
            // central difference that stays on one side of the kink
            let d = (1e-5 * ti.abs().max(1.0)).min(0.5 * ti.abs());
            let curv = (criterion.score(ti + d) - criterion.score(ti - d)) / (2.0 * d);
            let xi = problem.x.row(i).transpose();
            g.axpy(w * criterion.score(ti), &xi, 1.0);
            h.ger(w * curv, &xi, &xi, 1.0);
        }
        Some((basis.tr_mul(&g), basis.tr_mul(&h) * &basis))
    };

    let mut beta = start;
    let mut value = loss(&beta);
    let (mut g, mut h) = derivatives(&beta)?;
    let mut settled = false;
    for _ in 0..MAX_STEPS {
        let step = &basis * solve_spd(&h, &(-&g))?;
        if step.amax() <= 1e-12 * (1.0 + beta.amax()) {
            settled = true;
            if step.amax() <= 1e-15 * (1.0 + beta.amax()) {
                break;
            }
        }
        // Near the optimum the loss is flat to rounding, so a step that keeps
        // the loss level but shrinks the gradient also counts as progress.
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let candidate = &beta + scale * &step;
            let v = loss(&candidate);
            if v <= value * (1.0 + 1e-14) {
                let (gc, hc) = derivatives(&candidate)?;
                if v < value || gc.norm() < g.norm() {
                    beta = candidate;
                    value = v.min(value);
                    g = gc;
                    h = hc;
                    moved = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let certified = settled && is_optimal(criterion, problem, &beta, &active);
    Some(Refined { beta, certified })
}

/// Checks `0 ∈ ∂L(β)` when the rows in `active` sit on the kink: the
/// remaining score must be cancelled by multipliers on the active rows that
/// lie between the one-sided derivatives at zero.
pub(crate) fn is_optimal(criterion: &Criterion, problem: &Problem<'_>, beta: &DVector<f64>, active: &[usize]) -> bool {
    let Ok(t) = problem.log_ratios(beta) else {
        return false;
    };
    let p = problem.p();
    let mut g = DVector::zeros(p);
    let mut size = 0.0;
    for i in (0..problem.n()).filter(|i| !active.contains(i)) {
        let s = problem.weight(i) * criterion.score(t[i]);
        let xi = problem.x.row(i).transpose();
        size += s.abs() * xi.amax();
        g.axpy(s, &xi, 1.0);
    }
    let (lo, hi) = (criterion.score(-1e-300), criterion.score(1e-300));
    size += active.iter().map(|&i| problem.weight(i) * hi.abs().max(lo.abs())).sum::<f64>();
    let tol = 1e-9 * (1.0 + size);
    if active.is_empty() {
        return g.amax() <= tol;
    }
    let xs_t: DMatrix<f64> = problem.x.select_rows(active).transpose();
    let Ok(u) = least_squares(&xs_t, &(-&g)) else {
        return false;
    };
    (&xs_t * &u + &g).amax() <= tol
        && active.iter().zip(u.iter()).all(|(&i, &ui)| {
            let w = problem.weight(i);
            ui >= w * lo - tol && ui <= w * hi + tol
        })
}
