//! Multiplicative regression data model and the relative-error criteria.
//!
//! Every criterion here depends on an observation only through the log
//! ratio `t_i = x_i'β − log y_i` of prediction to response. The two relative
//! errors are `a_i = |y_i − e^{x_i'β}| / y_i = |1 − e^{t_i}|` and
//! `b_i = |y_i − e^{x_i'β}| / e^{x_i'β} = |1 − e^{−t_i}|`, so all criteria
//! are invariant under `y → c·y` paired with an intercept shift of `log c`.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Deref, Index};
use core::str::FromStr;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

use crate::{Error, Result};

/// Largest exponent the criteria will evaluate. Beyond it the evaluation
/// reports [`Error::NumericOverflow`] instead of producing infinities.
pub const EXPONENT_LIMIT: f64 = 700.0;

/// Design matrix with a leading intercept column and a strictly positive response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    log_y: DVector<f64>,
}

impl Dataset {
    /// Builds a dataset from a full design matrix whose first column is all ones.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::invalid("dataset needs at least one row and one column"));
        }
        if y.len() != n {
            return Err(Error::invalid(format!(
                "design has {n} rows but response has {} entries",
                y.len()
            )));
        }
        if let Some(i) = (0..n).find(|&i| x[(i, 0)] != 1.0) {
            return Err(Error::invalid(format!(
                "first design column must be the intercept (row {i} has {})",
                x[(i, 0)]
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design contains non-finite values"));
        }
        if let Some(i) = y.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!(
                "response must be strictly positive and finite (row {i} has {})",
                y[i]
            )));
        }
        let log_y = y.map(|v| v.ln());
        Ok(Self { x, y, log_y })
    }

    /// Prepends an intercept column to `covariates` (n × k) and builds the dataset.
    pub fn with_intercept(covariates: &DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let n = covariates.nrows();
        let x = covariates.clone().insert_column(0, 1.0);
        debug_assert_eq!(x.nrows(), n);
        Self::new(x, y)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn log_y(&self) -> &DVector<f64> {
        &self.log_y
    }

    /// Multiplies every response by `c > 0`.
    pub fn scale_y(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid("response scale must be positive and finite"));
        }
        Self::new(self.x.clone(), self.y.map(|v| v * c))
    }

    /// Dataset restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(Error::invalid(format!("row index {bad} out of range")));
        }
        let x = self.x.select_rows(rows);
        let y = self.y.select_rows(rows);
        Self::new(x, y)
    }

    pub(crate) fn problem(&self) -> Problem<'_> {
        Problem {
            x: &self.x,
            log_y: &self.log_y,
            weights: None,
        }
    }

    pub(crate) fn check_coefficients(&self, beta: &Coefficients) -> Result<()> {
        if beta.len() != self.p() {
            return Err(Error::invalid(format!(
                "coefficient vector has length {} but the design has {} columns",
                beta.len(),
                self.p()
            )));
        }
        Ok(())
    }
}

/// Regression coefficients, intercept first.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients(DVector<f64>);

impl Coefficients {
    pub fn new(beta: DVector<f64>) -> Self {
        Self(beta)
    }

    pub fn from_slice(beta: &[f64]) -> Self {
        Self(DVector::from_column_slice(beta))
    }

    pub fn zeros(p: usize) -> Self {
        Self(DVector::zeros(p))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.iter().copied().collect()
    }
}

impl Deref for Coefficients {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl Index<usize> for Coefficients {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<DVector<f64>> for Coefficients {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

impl From<Vec<f64>> for Coefficients {
    fn from(v: Vec<f64>) -> Self {
        Self(DVector::from_vec(v))
    }
}

/// A general relative-error loss `g(a, b)` on the two relative errors.
///
/// `partials` returns `(∂g/∂a, ∂g/∂b)`. It is combined with the chain rule
/// through `a = |1 − e^t|`, `b = |1 − e^{−t}|` using `sign(0) = 0`, which
/// gives a subgradient for the nonsmooth members of the family.
#[derive(Clone, Copy)]
pub struct GreCriterion {
    name: &'static str,
    loss: fn(f64, f64) -> f64,
    partials: fn(f64, f64) -> (f64, f64),
    smooth: bool,
}

impl GreCriterion {
    /// `smooth` must be true only if the criterion is twice differentiable in β.
    pub fn new(
        name: &'static str,
        loss: fn(f64, f64) -> f64,
        partials: fn(f64, f64) -> (f64, f64),
        smooth: bool,
    ) -> Self {
        Self {
            name,
            loss,
            partials,
            smooth,
        }
    }

    /// `g(a, b) = a·b`, the LPRE criterion.
    pub fn product() -> Self {
        Self::new("product", |a, b| a * b, |a, b| (b, a), true)
    }

    /// `g(a, b) = a + b`, the LARE criterion.
    pub fn sum() -> Self {
        Self::new("sum", |a, b| a + b, |_, _| (1.0, 1.0), false)
    }

    /// `g(a, b) = max(a, b)`.
    pub fn max() -> Self {
        Self::new(
            "max",
            |a: f64, b: f64| a.max(b),
            |a, b| {
                if a > b {
                    (1.0, 0.0)
                } else if b > a {
                    (0.0, 1.0)
                } else {
                    (0.5, 0.5)
                }
            },
            false,
        )
    }

    /// `g(a, b) = a + e^b − 1`, penalising the error relative to the prediction
    /// more heavily. Shifted so that `g(0, 0) = 0`.
    pub fn asymmetric() -> Self {
        Self::new(
            "asym",
            |a: f64, b: f64| a + b.exp_m1(),
            |_, b: f64| (1.0, b.exp()),
            false,
        )
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn g(&self, a: f64, b: f64) -> f64 {
        (self.loss)(a, b)
    }

    /// Summand as a function of the log ratio `t`.
    pub fn summand(&self, t: f64) -> f64 {
        let (a, b) = relative_errors(t);
        (self.loss)(a, b)
    }

    /// Directional derivative of the summand along `t` (subgradient with
    /// `sign(0) = 0` at the kink).
    pub fn score(&self, t: f64) -> f64 {
        let (a, b) = relative_errors(t);
        let (ga, gb) = (self.partials)(a, b);
        signum0(t) * (ga * t.exp() + gb * (-t).exp())
    }
}

impl fmt::Debug for GreCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GreCriterion")
            .field("name", &self.name)
            .field("smooth", &self.smooth)
            .finish()
    }
}

impl PartialEq for GreCriterion {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.smooth == other.smooth
    }
}

/// `(a, b) = (|1 − e^t|, |1 − e^{−t}|)`.
pub fn relative_errors(t: f64) -> (f64, f64) {
    (t.exp_m1().abs(), (-t).exp_m1().abs())
}

fn signum0(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The estimation criteria known to the solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// Least product relative error.
    Lpre,
    /// Least absolute relative error (sum of both relative errors).
    Lare,
    /// Least squares on `log y`.
    LsLog,
    /// Least absolute deviation on `log y`.
    LadLog,
    /// Any other general relative-error loss.
    Gre(GreCriterion),
}

impl Criterion {
    pub fn label(&self) -> &'static str {
        match self {
            Criterion::Lpre => "lpre",
            Criterion::Lare => "lare",
            Criterion::LsLog => "ls",
            Criterion::LadLog => "lad",
            Criterion::Gre(g) => match g.name() {
                "product" => "gre:product",
                "sum" => "gre:sum",
                "max" => "gre:max",
                "asym" => "gre:asym",
                other => other,
            },
        }
    }

    pub fn is_smooth(&self) -> bool {
        match self {
            Criterion::Lpre | Criterion::LsLog => true,
            Criterion::Lare | Criterion::LadLog => false,
            Criterion::Gre(g) => g.is_smooth(),
        }
    }

    /// Per-observation loss as a function of `t = x'β − log y`.
    pub fn summand(&self, t: f64) -> f64 {
        match self {
            Criterion::Lpre => {
                let s = 2.0 * (0.5 * t).sinh();
                s * s
            }
            Criterion::Lare => 2.0 * t.sinh().abs(),
            Criterion::LsLog => t * t,
            Criterion::LadLog => t.abs(),
            Criterion::Gre(g) => g.summand(t),
        }
    }

    /// Derivative (or `sign(0) = 0` subgradient) of [`Criterion::summand`].
    pub fn score(&self, t: f64) -> f64 {
        match self {
            Criterion::Lpre => 2.0 * t.sinh(),
            Criterion::Lare => 2.0 * signum0(t) * t.cosh(),
            Criterion::LsLog => 2.0 * t,
            Criterion::LadLog => signum0(t),
            Criterion::Gre(g) => g.score(t),
        }
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lpre" | "gre:product" => Ok(Criterion::Lpre),
            "lare" | "gre:sum" => Ok(Criterion::Lare),
            "ls" | "ls_log" => Ok(Criterion::LsLog),
            "lad" | "lad_log" => Ok(Criterion::LadLog),
            "gre:max" => Ok(Criterion::Gre(GreCriterion::max())),
            "gre:asym" => Ok(Criterion::Gre(GreCriterion::asymmetric())),
            other => Err(Error::invalid(format!(
                "unknown criterion '{other}' (expected lpre, lare, ls, lad, gre:max or gre:asym)"
            ))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A borrowed least-squares-like problem: design, log response (possibly
/// offset), and optional observation weights.
#[derive(Clone, Copy)]
pub(crate) struct Problem<'a> {
    pub x: &'a DMatrix<f64>,
    pub log_y: &'a DVector<f64>,
    pub weights: Option<&'a DVector<f64>>,
}

impl<'a> Problem<'a> {
    pub fn new(
        x: &'a DMatrix<f64>,
        log_y: &'a DVector<f64>,
        weights: Option<&'a DVector<f64>>,
    ) -> Self {
        Self { x, log_y, weights }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    /// `t = Xβ − log y`, refusing exponents beyond [`EXPONENT_LIMIT`].
    pub fn log_ratios(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        let mut t = self.x * beta;
        for (ti, ly) in t.iter_mut().zip(self.log_y.iter()) {
            *ti -= ly;
            if !(ti.abs() <= EXPONENT_LIMIT) {
                return Err(Error::NumericOverflow(*ti));
            }
        }
        Ok(t)
    }

    pub fn loss(&self, criterion: &Criterion, beta: &DVector<f64>) -> Result<f64> {
        let t = self.log_ratios(beta)?;
        Ok(t.iter()
            .enumerate()
            .map(|(i, &ti)| self.weight(i) * criterion.summand(ti))
            .sum())
    }

    /// `Σ w_i x_i ψ(t_i)` for the criterion's (sub)derivative ψ.
    pub fn score(&self, criterion: &Criterion, beta: &DVector<f64>) -> Result<DVector<f64>> {
        let t = self.log_ratios(beta)?;
        let psi = DVector::from_iterator(
            t.len(),
            t.iter()
                .enumerate()
                .map(|(i, &ti)| self.weight(i) * criterion.score(ti)),
        );
        Ok(self.x.tr_mul(&psi))
    }

    /// LPRE value, gradient and Hessian at `beta` in one pass.
    pub fn lpre_derivatives(
        &self,
        beta: &DVector<f64>,
    ) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let t = self.log_ratios(beta)?;
        let n = t.len();
        let mut value = 0.0;
        let mut grad_w = DVector::zeros(n);
        let mut hess_w = DVector::zeros(n);
        for (i, &ti) in t.iter().enumerate() {
            let w = self.weight(i);
            let s = 2.0 * (0.5 * ti).sinh();
            value += w * s * s;
            grad_w[i] = w * 2.0 * ti.sinh();
            hess_w[i] = w * 2.0 * ti.cosh();
        }
        Ok((value, self.x.tr_mul(&grad_w), weighted_gram(self.x, &hess_w)))
    }
}

/// `X' diag(w) X`.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (mut row, &wi) in xw.row_iter_mut().zip(w.iter()) {
        row *= wi;
    }
    let mut g = x.tr_mul(&xw);
    // symmetrize away rounding asymmetry
    let p = g.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

fn checked<'a>(beta: &Coefficients, data: &'a Dataset) -> Result<Problem<'a>> {
    data.check_coefficients(beta)?;
    Ok(data.problem())
}

/// `Σ_i {y_i e^{−x_i'β} + y_i^{−1} e^{x_i'β} − 2}`.
pub fn lpre_loss(beta: &Coefficients, data: &Dataset) -> Result<f64> {
    checked(beta, data)?.loss(&Criterion::Lpre, beta)
}

/// `Σ_i x_i {y_i^{−1} e^{x_i'β} − y_i e^{−x_i'β}}`.
pub fn lpre_gradient(beta: &Coefficients, data: &Dataset) -> Result<DVector<f64>> {
    checked(beta, data)?.score(&Criterion::Lpre, beta)
}

/// `Σ_i x_i x_i' {y_i e^{−x_i'β} + y_i^{−1} e^{x_i'β}}`; positive definite
/// whenever the design has full column rank.
pub fn lpre_hessian(beta: &Coefficients, data: &Dataset) -> Result<DMatrix<f64>> {
    let (_, _, h) = checked(beta, data)?.lpre_derivatives(beta)?;
    Ok(h)
}

/// Sum of both absolute relative errors.
pub fn lare_loss(beta: &Coefficients, data: &Dataset) -> Result<f64> {
    checked(beta, data)?.loss(&Criterion::Lare, beta)
}

/// `Σ_i g(a_i, b_i)` for an arbitrary relative-error loss.
pub fn gre_loss(criterion: &GreCriterion, beta: &Coefficients, data: &Dataset) -> Result<f64> {
    checked(beta, data)?.loss(&Criterion::Gre(*criterion), beta)
}

/// Subgradient of [`gre_loss`] with respect to β.
pub fn gre_score(
    criterion: &GreCriterion,
    beta: &Coefficients,
    data: &Dataset,
) -> Result<DVector<f64>> {
    checked(beta, data)?.score(&Criterion::Gre(*criterion), beta)
}

pub fn ls_log_loss(beta: &Coefficients, data: &Dataset) -> Result<f64> {
    checked(beta, data)?.loss(&Criterion::LsLog, beta)
}

pub fn lad_log_loss(beta: &Coefficients, data: &Dataset) -> Result<f64> {
    checked(beta, data)?.loss(&Criterion::LadLog, beta)
}

/// Value of any supported criterion.
pub fn criterion_loss(criterion: &Criterion, beta: &Coefficients, data: &Dataset) -> Result<f64> {
    checked(beta, data)?.loss(criterion, beta)
}
