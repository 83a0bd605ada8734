//! Positive error laws for the multiplicative model.
//!
//! Besides the textbook laws (log-normal, log-uniform, uniform) this module
//! carries the four inverse-transformation-invariant densities
//!
//! ```text
//! f(x) = c · exp{−g(|1 − x|, |1 − 1/x|) − log x},   x > 0,
//! ```
//!
//! under which the relative-error estimator built on `g` is efficient.
//! Writing `u = log x`, the density of `u` is `c · exp{−G(u)}` with `G`
//! even, so `ε` and `1/ε` share one distribution. Integrals are done on the
//! log scale over `[0, ∞)` after folding `u` and `−u` together; sampling is
//! by rejection from a normal proposal on the log scale.

use alloc::format;
use alloc::string::ToString;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::relative_errors;
use crate::quadrature::integrate_to_infinity;
use crate::{Error, Result};

const QUAD_TOL: f64 = 1e-12;

/// The four efficiency densities, named by the criterion they make efficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EfficientDensity {
    /// `g(a, b) = a·b`: `f(x) = c·exp(−x − 1/x − log x + 2)`.
    LpreEfficient,
    /// `g(a, b) = a + b`.
    LareEfficient,
    /// `g(a, b) = max(a, b)`.
    MaxEfficient,
    /// `g(a, b) = a² + b²`.
    LsLikeEfficient,
}

impl EfficientDensity {
    pub const ALL: [EfficientDensity; 4] = [
        EfficientDensity::LpreEfficient,
        EfficientDensity::MaxEfficient,
        EfficientDensity::LsLikeEfficient,
        EfficientDensity::LareEfficient,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EfficientDensity::LpreEfficient => "lpre_efficient",
            EfficientDensity::LareEfficient => "lare_efficient",
            EfficientDensity::MaxEfficient => "max_efficient",
            EfficientDensity::LsLikeEfficient => "ls_like_efficient",
        }
    }

    /// `g(a, b)` of the family member.
    pub fn g(&self, a: f64, b: f64) -> f64 {
        match self {
            EfficientDensity::LpreEfficient => a * b,
            EfficientDensity::LareEfficient => a + b,
            EfficientDensity::MaxEfficient => a.max(b),
            EfficientDensity::LsLikeEfficient => a * a + b * b,
        }
    }

    /// `G(u) = g(|1 − e^u|, |1 − e^{−u}|)`; even in `u`.
    pub fn exponent(&self, u: f64) -> f64 {
        match self {
            EfficientDensity::LpreEfficient => {
                let s = 2.0 * (0.5 * u).sinh();
                s * s
            }
            EfficientDensity::LareEfficient => 2.0 * u.abs().sinh(),
            EfficientDensity::MaxEfficient => u.abs().exp_m1(),
            _ => {
                let (a, b) = relative_errors(u);
                self.g(a, b)
            }
        }
    }

    /// `∫ exp{−G(u)} du` over the real line, `1/c`.
    fn mass(&self) -> Result<f64> {
        Ok(2.0 * integrate_to_infinity(|u| (-self.exponent(u)).exp(), 0.0, QUAD_TOL, 0.0)?)
    }

    /// Normalizing constant `c` of the density of `ε`.
    pub fn normalizing_constant(&self) -> Result<f64> {
        Ok(1.0 / self.mass()?)
    }

    /// `E h(ε)` by quadrature, folding `u` and `−u`.
    pub fn expectation<H: Fn(f64) -> f64>(&self, h: H) -> Result<f64> {
        let c = self.normalizing_constant()?;
        let folded = |u: f64| {
            let w = (-self.exponent(u)).exp();
            if w == 0.0 {
                0.0
            } else {
                (h(u.exp()) + h((-u).exp())) * w
            }
        };
        Ok(c * integrate_to_infinity(folded, 0.0, QUAD_TOL, 0.0)?)
    }

    /// Density of `ε` on `(0, ∞)`.
    pub fn pdf(&self) -> Result<impl Fn(f64) -> f64 + '_> {
        let c = self.normalizing_constant()?;
        Ok(move |x: f64| {
            if x > 0.0 {
                c * (-self.exponent(x.ln()) - x.ln()).exp()
            } else {
                0.0
            }
        })
    }

    /// Density of `log ε` on the real line.
    pub fn log_scale_pdf(&self) -> Result<impl Fn(f64) -> f64 + '_> {
        let c = self.normalizing_constant()?;
        Ok(move |u: f64| c * (-self.exponent(u)).exp())
    }

    /// Standard deviation of `log ε` (its mean is zero by symmetry).
    pub fn log_scale_sd(&self) -> Result<f64> {
        Ok(self
            .expectation(|x| {
                let u = x.ln();
                u * u
            })?
            .sqrt())
    }
}

/// Error law of `ε` in `y = exp(x'β)·ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorLaw {
    Efficient(EfficientDensity),
    /// `log ε ~ U(lo, hi)`.
    LogUniform { lo: f64, hi: f64 },
    /// `log ε ~ N(mu, sigma²)`.
    LogNormal { mu: f64, sigma: f64 },
    /// `ε ~ U(lo, hi)` with `0 < lo < hi`.
    Uniform { lo: f64, hi: f64 },
    /// `ε ≡ 1`.
    Degenerate,
}

impl ErrorLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ErrorLaw::Efficient(_) | ErrorLaw::Degenerate => true,
            ErrorLaw::LogUniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            ErrorLaw::LogNormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma > 0.0,
            ErrorLaw::Uniform { lo, hi } => lo > 0.0 && hi.is_finite() && lo < hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid error law parameters: {self}")))
        }
    }

    /// Uniform on `(0.5, a*)` with `E ε = E 1/ε`.
    pub fn balanced_uniform() -> Self {
        ErrorLaw::Uniform {
            lo: 0.5,
            hi: solve_uniform_upper(),
        }
    }

    /// `(E ε, E 1/ε, E ε², E ε⁻²)`.
    fn raw_moments(&self) -> Result<[f64; 4]> {
        self.validate()?;
        Ok(match *self {
            ErrorLaw::Efficient(d) => [
                d.expectation(|x| x)?,
                d.expectation(|x| 1.0 / x)?,
                d.expectation(|x| x * x)?,
                d.expectation(|x| 1.0 / (x * x))?,
            ],
            ErrorLaw::LogUniform { lo, hi } => {
                let m = |k: f64| ((k * hi).exp() - (k * lo).exp()) / (k * (hi - lo));
                [m(1.0), m(-1.0), m(2.0), m(-2.0)]
            }
            ErrorLaw::LogNormal { mu, sigma } => {
                let m = |k: f64| (k * mu + 0.5 * k * k * sigma * sigma).exp();
                [m(1.0), m(-1.0), m(2.0), m(-2.0)]
            }
            ErrorLaw::Uniform { lo, hi } => {
                let w = hi - lo;
                [
                    0.5 * (lo + hi),
                    (hi / lo).ln() / w,
                    (hi * hi * hi - lo * lo * lo) / (3.0 * w),
                    (1.0 / lo - 1.0 / hi) / w,
                ]
            }
            ErrorLaw::Degenerate => [1.0; 4],
        })
    }
}

impl fmt::Display for ErrorLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorLaw::Efficient(d) => f.write_str(d.name()),
            ErrorLaw::LogUniform { lo, hi } => write!(f, "log_uniform({lo},{hi})"),
            ErrorLaw::LogNormal { mu, sigma } => write!(f, "log_normal({mu},{sigma})"),
            ErrorLaw::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
            ErrorLaw::Degenerate => f.write_str("degenerate"),
        }
    }
}

impl FromStr for ErrorLaw {
    type Err = Error;

    /// Accepts the names printed by `Display`; `uniform(lo,auto)` solves for
    /// the upper endpoint that balances `E ε` and `E 1/ε`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || Error::invalid(format!("cannot parse error law '{s}'"));
        let law = match s.as_str() {
            "lpre_efficient" => ErrorLaw::Efficient(EfficientDensity::LpreEfficient),
            "lare_efficient" => ErrorLaw::Efficient(EfficientDensity::LareEfficient),
            "max_efficient" => ErrorLaw::Efficient(EfficientDensity::MaxEfficient),
            "ls_like_efficient" => ErrorLaw::Efficient(EfficientDensity::LsLikeEfficient),
            "degenerate" => ErrorLaw::Degenerate,
            _ => {
                let open = s.find('(').ok_or_else(bad)?;
                let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
                let (first, second) = inner.split_once(',').ok_or_else(bad)?;
                let first = first.trim();
                let second = second.trim();
                let parse = |v: &str| v.parse::<f64>().map_err(|_| bad());
                match &s[..open] {
                    "log_uniform" => ErrorLaw::LogUniform {
                        lo: parse(first)?,
                        hi: parse(second)?,
                    },
                    "log_normal" => ErrorLaw::LogNormal {
                        mu: parse(first)?,
                        sigma: parse(second)?,
                    },
                    "uniform" => {
                        let lo = parse(first)?;
                        let hi = if second == "auto" {
                            if lo != 0.5 {
                                return Err(Error::invalid(
                                    "uniform(lo,auto) is only defined for lo = 0.5",
                                ));
                            }
                            solve_uniform_upper()
                        } else {
                            parse(second)?
                        };
                        ErrorLaw::Uniform { lo, hi }
                    }
                    _ => return Err(bad()),
                }
            }
        };
        law.validate()?;
        Ok(law)
    }
}

/// `E(1/ε) − E(ε)` for `ε ~ U(0.5, a)`.
pub fn uniform_moment_gap(a: f64) -> f64 {
    (2.0 * a).ln() / (a - 0.5) - 0.5 * (0.5 + a)
}

/// Root `a*` of `(0.5 + a)/2 = log(2a)/(a − 0.5)` on `(1, 3)`, by bisection.
pub fn solve_uniform_upper() -> f64 {
    let (mut lo, mut hi) = (1.0, 3.0);
    debug_assert!(uniform_moment_gap(lo) > 0.0 && uniform_moment_gap(hi) < 0.0);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if uniform_moment_gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Population moments that drive the asymptotic theory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationConstants {
    pub mean: f64,
    pub mean_inverse: f64,
    /// `E(ε + 1/ε)`, the scalar factor of the Hessian limit.
    pub d_scalar: f64,
    /// `E(ε − 1/ε)²`, the scalar factor of the score variance.
    pub v_scalar: f64,
    /// `K = 4 E ε / E(ε − 1/ε)²`.
    pub k: f64,
    /// `V/(2D)`: the multiplier in `M_n → (V/2D)·χ²_q`. Equals `1/K` when `E ε = E 1/ε`.
    pub null_scale: f64,
    /// `|D − V| / D`; zero for the LPRE-efficient law.
    pub dv_residual: f64,
}

pub fn population_constants(law: &ErrorLaw) -> Result<PopulationConstants> {
    let [m1, m_1, m2, m_2] = law.raw_moments()?;
    if [m1, m_1, m2, m_2].iter().any(|v| !v.is_finite()) {
        return Err(Error::Quadrature {
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let d_scalar = m1 + m_1;
    let v_scalar = (m2 - 2.0 + m_2).max(0.0);
    Ok(PopulationConstants {
        mean: m1,
        mean_inverse: m_1,
        d_scalar,
        v_scalar,
        k: 4.0 * m1 / v_scalar,
        null_scale: v_scalar / (2.0 * d_scalar),
        dv_residual: (d_scalar - v_scalar).abs() / d_scalar,
    })
}

#[derive(Debug, Clone, Copy)]
enum Method {
    Direct,
    Rejection {
        density: EfficientDensity,
        proposal_sd: f64,
        log_bound: f64,
        acceptance: f64,
    },
}

/// Draws from an [`ErrorLaw`]. Construction validates the law and, for the
/// efficiency densities, sets up and checks the rejection envelope.
#[derive(Debug, Clone, Copy)]
pub struct ErrorSampler {
    law: ErrorLaw,
    method: Method,
}

impl ErrorSampler {
    /// Proposal sd as a multiple of the target's log-scale sd.
    pub const SAFETY_FACTOR: f64 = 1.5;

    pub fn new(law: ErrorLaw) -> Result<Self> {
        law.validate()?;
        let method = match law {
            ErrorLaw::Efficient(density) => rejection_setup(density)?,
            _ => Method::Direct,
        };
        Ok(Self { law, method })
    }

    pub fn law(&self) -> &ErrorLaw {
        &self.law
    }

    /// Expected acceptance probability of the rejection step (1 for direct laws).
    pub fn acceptance_rate(&self) -> f64 {
        match self.method {
            Method::Direct => 1.0,
            Method::Rejection { acceptance, .. } => acceptance,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match (self.law, self.method) {
            (
                _,
                Method::Rejection {
                    density,
                    proposal_sd,
                    log_bound,
                    ..
                },
            ) => loop {
                let z: f64 = StandardNormal.sample(rng);
                let u = proposal_sd * z;
                let log_ratio = -density.exponent(u) + 0.5 * z * z - log_bound;
                let v: f64 = rng.random();
                if v.ln() < log_ratio {
                    return u.exp();
                }
            },
            (ErrorLaw::LogUniform { lo, hi }, _) => {
                let v: f64 = rng.random();
                (lo + (hi - lo) * v).exp()
            }
            (ErrorLaw::LogNormal { mu, sigma }, _) => {
                let z: f64 = StandardNormal.sample(rng);
                (mu + sigma * z).exp()
            }
            (ErrorLaw::Uniform { lo, hi }, _) => loop {
                let v: f64 = rng.random();
                let x = lo + (hi - lo) * v;
                if x > 0.0 {
                    return x;
                }
            },
            (ErrorLaw::Degenerate, _) => 1.0,
            (ErrorLaw::Efficient(_), Method::Direct) => unreachable!("set up in new"),
        }
    }
}

/// Envelope `M·φ(u/s)` with `log M = max_u {−G(u) + u²/(2s²)}`, found by a
/// dense scan plus golden-section refinement and inflated by 0.1%.
fn rejection_setup(density: EfficientDensity) -> Result<Method> {
    let s = ErrorSampler::SAFETY_FACTOR * density.log_scale_sd()?;
    let log_ratio = |u: f64| -density.exponent(u) + 0.5 * (u / s) * (u / s);

    let (mut best_u, mut best) = (0.0, log_ratio(0.0));
    let steps = 24_000;
    for k in 0..=steps {
        let u = -12.0 + 24.0 * k as f64 / steps as f64;
        let v = log_ratio(u);
        if v > best {
            best = v;
            best_u = u;
        }
    }
    let (mut a, mut b) = (best_u - 1e-3, best_u + 1e-3);
    let phi = 0.5 * (5.0f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if log_ratio(c) > log_ratio(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best = best.max(log_ratio(0.5 * (a + b)));
    let log_bound = best + 1e-3f64.ln_1p();

    // the envelope must dominate on a log-spaced grid over x in (1e-4, 1e4)
    let grid = 10_000;
    let span = 4.0 * core::f64::consts::LN_10;
    for k in 0..grid {
        let u = -span + 2.0 * span * (k as f64 + 0.5) / grid as f64;
        if log_ratio(u) > log_bound {
            return Err(Error::Envelope(u.exp()));
        }
    }

    // acceptance = (1/c) / (M · s√(2π))
    let mass = density.mass()?;
    let acceptance = mass / (log_bound.exp() * s * (2.0 * core::f64::consts::PI).sqrt());
    Ok(Method::Rejection {
        density,
        proposal_sd: s,
        log_bound,
        acceptance,
    })
}

impl fmt::Display for EfficientDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EfficientDensity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<ErrorLaw>()? {
            ErrorLaw::Efficient(d) => Ok(d),
            other => Err(Error::invalid(other.to_string() + " is not an efficiency density")),
        }
    }
}
