//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use alloc::vec::Vec;

use crate::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Piece {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod_sum = WGK[7] * fc;
    let mut gauss_sum = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod_sum += WGK[j] * pair;
        if j % 2 == 1 {
            gauss_sum += WG[j / 2] * pair;
        }
    }
    let value = kronrod_sum * half;
    let error = ((kronrod_sum - gauss_sum) * half).abs();
    Piece { a, b, value, error }
}

/// `∫_a^b f(x) dx` to `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let first = kronrod(&f, a, b);
    let mut pieces: Vec<Piece> = alloc::vec![first];
    loop {
        let total: f64 = pieces.iter().map(|p| p.value).sum();
        let error: f64 = pieces.iter().map(|p| p.error).sum();
        if !total.is_finite() || !error.is_finite() {
            return Err(Error::Quadrature { lo: a, hi: b });
        }
        if error <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature { lo: a, hi: b });
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty");
        let piece = pieces.swap_remove(worst);
        let mid = 0.5 * (piece.a + piece.b);
        if mid <= piece.a || mid >= piece.b {
            return Err(Error::Quadrature { lo: a, hi: b });
        }
        pieces.push(kronrod(&f, piece.a, mid));
        pieces.push(kronrod(&f, mid, piece.b));
    }
}

/// `∫_a^∞ f(x) dx` through `x = a + s/(1 − s)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64> {
    integrate(
        |s| {
            let one_minus = 1.0 - s;
            let v = f(a + s / one_minus) / (one_minus * one_minus);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        rel_tol,
        abs_tol,
    )
    .map_err(|_| Error::Quadrature {
        lo: a,
        hi: f64::INFINITY,
    })
}
