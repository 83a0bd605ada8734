//! Small dense linear-algebra helpers on top of nalgebra.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

use crate::model::Dataset;
use crate::{Error, Result};

/// Rank diagnostics of a design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignReport {
    pub rank: usize,
    pub p: usize,
    pub smallest_singular_value: f64,
    pub largest_singular_value: f64,
    /// True when `rank < p`, i.e. `Σ x_i x_i'` is singular.
    pub singular: bool,
}

/// Numerical rank of the design via its singular values. A report, never an error.
pub fn check_design(data: &Dataset) -> DesignReport {
    rank_report(data.x())
}

pub(crate) fn rank_report(x: &DMatrix<f64>) -> DesignReport {
    let (n, p) = x.shape();
    let sv = x.clone().singular_values();
    let largest = sv.iter().copied().fold(0.0, f64::max);
    let smallest = if sv.len() < p {
        0.0
    } else {
        sv.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let tol = (n.max(p) as f64) * f64::EPSILON * largest;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    DesignReport {
        rank,
        p,
        smallest_singular_value: smallest,
        largest_singular_value: largest,
        singular: rank < p,
    }
}

pub(crate) fn require_full_rank(x: &DMatrix<f64>) -> Result<()> {
    let report = rank_report(x);
    if report.singular {
        return Err(Error::SingularDesign {
            rank: report.rank,
            p: report.p,
        });
    }
    Ok(())
}

/// Solves `A z = b` for symmetric positive definite `A`.
pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().cholesky().map(|c| c.solve(b))
}

/// Least-squares solution of `X β ≈ b` by thin QR.
pub(crate) fn least_squares(x: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::SingularDesign { rank: n, p });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let diag_max = r.diagonal().amax();
    let rank = r.diagonal().iter().filter(|d| d.abs() > 1e-12 * diag_max).count();
    if rank < p || diag_max == 0.0 {
        return Err(Error::SingularDesign { rank, p });
    }
    let qtb = qr.q().tr_mul(b);
    r.solve_upper_triangular(&qtb)
        .ok_or(Error::SingularDesign { rank, p })
}

/// Weighted least squares `min Σ w_i (b_i − x_i'β)²`.
pub(crate) fn weighted_least_squares(
    x: &DMatrix<f64>,
    b: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    let mut xs = x.clone();
    let mut bs = b.clone();
    for (i, &wi) in w.iter().enumerate() {
        let s = wi.max(0.0).sqrt();
        xs.row_mut(i).scale_mut(s);
        bs[i] *= s;
    }
    least_squares(&xs, &bs)
}

/// Orthonormal basis (p × (p − q)) of `{b : H'b = 0}` for a p × q matrix `H`
/// with linearly independent columns.
pub(crate) fn null_space_basis(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (p, q) = h.shape();
    if q == 0 {
        return Ok(DMatrix::identity(p, p));
    }
    if q > p {
        return Err(Error::invalid("hypothesis has more constraints than coefficients"));
    }
    let report = rank_report(h);
    if report.rank < q || report.smallest_singular_value <= 1e-10 * report.largest_singular_value
    {
        return Err(Error::invalid("hypothesis constraint columns are linearly dependent"));
    }
    if q == p {
        return Ok(DMatrix::zeros(p, 0));
    }
    let eig = (h * h.transpose()).symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let cols: Vec<DVector<f64>> = order[..p - q]
        .iter()
        .map(|&k| eig.eigenvectors.column(k).into_owned())
        .collect();
    Ok(DMatrix::from_columns(&cols))
}
