//! File formats, Monte Carlo studies and the command-line front end for
//! [`lpre_core`].

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod sim;

use std::path::Path;

use lpre_core::distributions::EfficientDensity;

pub use config::{SimulationConfig, Study};
pub use error::{Error, Result};

/// The four efficiency densities on `points` equally spaced `x` in `[lo, hi]`.
pub fn density_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<(f64, [f64; 4])>> {
    if !(lo > 0.0 && hi > lo && points >= 2) {
        return Err(Error::Data("density grid needs 0 < lo < hi and at least 2 points".into()));
    }
    let pdfs = EfficientDensity::ALL
        .iter()
        .map(|d| d.pdf())
        .collect::<lpre_core::Result<Vec<_>>>()?;
    Ok((0..points)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            (x, [pdfs[0](x), pdfs[1](x), pdfs[2](x), pdfs[3](x)])
        })
        .collect())
}

pub fn write_density_grid(path: Option<&Path>, grid: &[(f64, [f64; 4])]) -> Result<()> {
    let mut header = vec!["x"];
    header.extend(EfficientDensity::ALL.iter().map(|d| d.name()));
    let rows: Vec<Vec<String>> = grid
        .iter()
        .map(|(x, f)| {
            let mut r = vec![io::num(*x)];
            r.extend(f.iter().map(|v| io::num(*v)));
            r
        })
        .collect();
    io::write_csv(path, &header, &rows)
}
