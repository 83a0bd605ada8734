use alloc::boxed::Box;
use alloc::string::String;

use crate::solver::FitResult;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An exponent left the representable window `[-700, 700]`.
    #[error("numeric overflow: exponent {0} outside [-700, 700]")]
    NumericOverflow(f64),

    #[error("singular design: rank {rank} < {p} columns")]
    SingularDesign { rank: usize, p: usize },

    /// The solver ran out of iterations; `best` carries the best iterate seen.
    #[error("no convergence after {iterations} iterations")]
    NoConvergence {
        iterations: usize,
        best: Box<FitResult>,
    },

    #[error("quadrature did not reach the requested tolerance on [{lo}, {hi}]")]
    Quadrature { lo: f64, hi: f64 },

    #[error("rejection envelope does not dominate the target density at x = {0}")]
    Envelope(f64),

    #[error("random weighting: {skipped} of {total} resampled fits failed")]
    Resampling { skipped: usize, total: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
