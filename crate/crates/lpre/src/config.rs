//! Plain-text `key = value` simulation configs.
//!
//! ```text
//! # Table 1, log-normal block
//! n = 200
//! replications = 1000
//! resample_size = 500
//! beta_true = 1, 1, 1
//! error_law = log_normal(0, 1)
//! estimators = lpre, lare, ls, lad
//! seed = 1
//! ```
//!
//! A power study adds `study = power`, `zero_coefs`, `beta_grid` (points
//! separated by `;`) and optionally `alphas`.

use std::path::Path;

use lpre_core::distributions::ErrorLaw;
use lpre_core::{Coefficients, Criterion};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    Estimation,
    Power,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n: usize,
    pub replications: usize,
    /// Random-weighting resamples per replication; below 2 skips SEE for
    /// estimators without a plug-in covariance.
    pub resample_size: usize,
    pub beta_true: Coefficients,
    pub error_law: ErrorLaw,
    pub estimators: Vec<Criterion>,
    pub seed: u64,
    pub study: Study,
    pub zero_coefs: Vec<usize>,
    pub beta_grid: Vec<Coefficients>,
    pub alphas: Vec<f64>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 200,
            replications: 1000,
            resample_size: 500,
            beta_true: Coefficients::from_slice(&[1.0, 1.0, 1.0]),
            error_law: ErrorLaw::LogNormal { mu: 0.0, sigma: 1.0 },
            estimators: vec![Criterion::Lpre, Criterion::Lare, Criterion::LsLog, Criterion::LadLog],
            seed: 1,
            study: Study::Estimation,
            zero_coefs: vec![2],
            beta_grid: Vec::new(),
            alphas: vec![0.05, 0.01],
        }
    }
}

fn floats(s: &str, sep: char) -> std::result::Result<Vec<f64>, String> {
    s.split(sep)
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("'{}' is not a number", v.trim())))
        .collect()
}

impl SimulationConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let count = |v: &str| v.parse::<usize>().map_err(|_| err(format!("{key}: '{v}' is not a count")));
            match key {
                "n" => cfg.n = count(value)?,
                "replications" => cfg.replications = count(value)?,
                "resample_size" => cfg.resample_size = count(value)?,
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| err(format!("seed: '{value}' is not a 64-bit integer")))?
                }
                "beta_true" => cfg.beta_true = Coefficients::from(floats(value, ',').map_err(err)?),
                "error_law" => cfg.error_law = value.parse().map_err(|e: lpre_core::Error| err(e.to_string()))?,
                "estimators" => {
                    cfg.estimators = value
                        .split(',')
                        .map(|s| s.trim().parse::<Criterion>().map_err(|e| err(e.to_string())))
                        .collect::<Result<_>>()?
                }
                "study" => {
                    cfg.study = match value {
                        "estimation" => Study::Estimation,
                        "power" => Study::Power,
                        other => return Err(err(format!("unknown study '{other}'"))),
                    }
                }
                "zero_coefs" => {
                    cfg.zero_coefs = value.split(',').map(|v| count(v.trim())).collect::<Result<_>>()?
                }
                "beta_grid" => {
                    cfg.beta_grid = value
                        .split(';')
                        .filter(|s| !s.trim().is_empty())
                        .map(|pt| floats(pt, ',').map(Coefficients::from).map_err(err))
                        .collect::<Result<_>>()?
                }
                "alphas" => cfg.alphas = floats(value, ',').map_err(err)?,
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        cfg.validate().map_err(|message| Error::Config {
            path: path.to_path_buf(),
            line: 0,
            message,
        })?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn p(&self) -> usize {
        self.beta_true.len()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let p = self.p();
        if p == 0 {
            return Err("beta_true is empty".into());
        }
        if self.n < p {
            return Err(format!("n = {} is smaller than p = {p}", self.n));
        }
        if self.replications == 0 {
            return Err("replications must be at least 1".into());
        }
        if self.estimators.is_empty() {
            return Err("no estimators listed".into());
        }
        self.error_law.validate().map_err(|e| e.to_string())?;
        if self.study == Study::Power {
            if self.beta_grid.is_empty() {
                return Err("a power study needs beta_grid".into());
            }
            if let Some(b) = self.beta_grid.iter().find(|b| b.len() != p) {
                return Err(format!("beta_grid point of length {} but p = {p}", b.len()));
            }
            if let Some(&j) = self.zero_coefs.iter().find(|&&j| j >= p) {
                return Err(format!("zero_coefs index {j} out of range"));
            }
            if self.zero_coefs.is_empty() {
                return Err("a power study needs zero_coefs".into());
            }
            if self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
                return Err("alphas must lie in (0, 1)".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let text = "# comment\nn = 50\nreplications=3\nbeta_true = 1, 0.5, 0\nerror_law = log_uniform(-2,2)\n\
                    estimators = lpre, gre:max\nseed = 9\nstudy = power\nzero_coefs = 2\n\
                    beta_grid = 1,1,0; 1,1,0.2\nalphas = 0.05\n";
        let c = SimulationConfig::parse(text, Path::new("x.cfg")).unwrap();
        assert_eq!(c.n, 50);
        assert_eq!(c.replications, 3);
        assert_eq!(c.beta_grid.len(), 2);
        assert_eq!(c.estimators[1].label(), "gre:max");
        assert_eq!(c.error_law, ErrorLaw::LogUniform { lo: -2.0, hi: 2.0 });
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = SimulationConfig::parse("n = 10\n\nbogus = 1\n", Path::new("a.cfg")).unwrap_err();
        assert_eq!(e.to_string(), "a.cfg:3: unknown key 'bogus'");
        let e = SimulationConfig::parse("n = ten\n", Path::new("a.cfg")).unwrap_err();
        assert!(e.to_string().starts_with("a.cfg:1:"), "{e}");
        let e = SimulationConfig::parse("n = 2\n", Path::new("a.cfg")).unwrap_err();
        assert!(e.to_string().contains("smaller than p"), "{e}");
    }
}
