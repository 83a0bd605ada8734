//! Nelder–Mead simplex search for the nonsmooth relative-error criteria.
//!
//! Uses the dimension-adaptive coefficients of Gao & Han (2012), which keep
//! the simplex from collapsing prematurely when p grows past a handful of
//! coefficients. A converged run is restarted from its best vertex with a
//! fresh simplex until a restart no longer improves the objective.

use alloc::vec::Vec;

use nalgebra::DVector;
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

#[derive(Debug, Clone, Copy)]
pub(crate) struct SimplexOptions {
    /// Total iteration budget across all restarts.
    pub max_iterations: usize,
    pub xtol: f64,
    pub ftol: f64,
    pub initial_step: f64,
    pub max_restarts: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            xtol: 1e-10,
            ftol: 1e-13,
            initial_step: 0.05,
            max_restarts: 12,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SimplexOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn nelder_mead<F>(mut f: F, x0: &DVector<f64>, opts: &SimplexOptions) -> SimplexOutcome
where
    F: FnMut(&DVector<f64>) -> f64,
{
    let mut best = x0.clone();
    let mut best_value = f(&best);
    let mut used = 0;
    let mut step = opts.initial_step;
    let mut converged = false;

    for _ in 0..=opts.max_restarts {
        if used >= opts.max_iterations {
            break;
        }
        let run = single_run(&mut f, &best, best_value, step, opts, opts.max_iterations - used);
        used += run.iterations;
        let improvement = best_value - run.value;
        let improved = run.value < best_value;
        if improved {
            best = run.x;
            best_value = run.value;
        }
        converged = run.converged;
        if !run.converged {
            break;
        }
        if !improved || improvement <= opts.ftol * (1.0 + best_value.abs()) {
            break;
        }
        step = (10.0 * run.size).clamp(1e-7, opts.initial_step);
    }

    SimplexOutcome {
        x: best,
        value: best_value,
        iterations: used,
        converged,
    }
}

struct Run {
    x: DVector<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
    size: f64,
}

fn single_run<F>(
    f: &mut F,
    x0: &DVector<f64>,
    f0: f64,
    step: f64,
    opts: &SimplexOptions,
    budget: usize,
) -> Run
where
    F: FnMut(&DVector<f64>) -> f64,
{
    let n = x0.len();
    let dim = n as f64;
    let (alpha, gamma, rho, sigma) = if n >= 2 {
        (1.0, 1.0 + 2.0 / dim, 0.75 - 1.0 / (2.0 * dim), 1.0 - 1.0 / dim)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut vertices: Vec<(DVector<f64>, f64)> = Vec::with_capacity(n + 1);
    vertices.push((x0.clone(), f0));
    for j in 0..n {
        let mut v = x0.clone();
        let h = step * v[j].abs().max(1.0);
        v[j] += h;
        let fv = f(&v);
        vertices.push((v, fv));
    }

    let mut iterations = 0;
    loop {
        vertices.sort_by(|a, b| a.1.total_cmp(&b.1));
        let size = vertices[1..]
            .iter()
            .map(|(v, _)| (v - &vertices[0].0).amax())
            .fold(0.0, f64::max);
        let spread = vertices[n].1 - vertices[0].1;
        let ftol = opts.ftol * (1.0 + vertices[0].1.abs());
        if size <= opts.xtol * (1.0 + vertices[0].0.amax()) && spread <= ftol {
            return finish(vertices, iterations, true, size);
        }
        if spread <= 0.0 && size <= opts.xtol.sqrt() {
            // flat simplex, no further information
            return finish(vertices, iterations, true, size);
        }
        if iterations >= budget {
            return finish(vertices, iterations, false, size);
        }
        iterations += 1;

        let centroid = vertices[..n]
            .iter()
            .fold(DVector::zeros(n), |acc, (v, _)| acc + v)
            / dim;
        let worst = vertices[n].0.clone();
        let f_worst = vertices[n].1;
        let f_best = vertices[0].1;
        let f_second = vertices[n - 1].1;

        let reflected = &centroid + alpha * (&centroid - &worst);
        let f_reflected = f(&reflected);

        if f_reflected < f_best {
            let expanded = &centroid + gamma * (&reflected - &centroid);
            let f_expanded = f(&expanded);
            vertices[n] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
            continue;
        }
        if f_reflected < f_second {
            vertices[n] = (reflected, f_reflected);
            continue;
        }

        let (contracted, f_contracted) = if f_reflected < f_worst {
            let c = &centroid + rho * (&reflected - &centroid);
            let fc = f(&c);
            (c, fc)
        } else {
            let c = &centroid + rho * (&worst - &centroid);
            let fc = f(&c);
            (c, fc)
        };
        if f_contracted < f_worst.min(f_reflected) {
            vertices[n] = (contracted, f_contracted);
            continue;
        }

        let anchor = vertices[0].0.clone();
        for vertex in vertices.iter_mut().skip(1) {
            let v = &anchor + sigma * (&vertex.0 - &anchor);
            let fv = f(&v);
            *vertex = (v, fv);
        }
    }
}

fn finish(mut vertices: Vec<(DVector<f64>, f64)>, iterations: usize, converged: bool, size: f64) -> Run {
    vertices.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = vertices.swap_remove(0);
    Run {
        x,
        value,
        iterations,
        converged,
        size,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let rosen = |x: &DVector<f64>| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = SimplexOptions {
            initial_step: 0.5,
            ..SimplexOptions::default()
        };
        let out = nelder_mead(rosen, &DVector::from_column_slice(&[-1.2, 1.0]), &opts);
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6, "{:?}", out.x);
        assert!((out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn minimizes_nonsmooth_l1() {
        let target = [0.3, -1.7, 2.2];
        let f = |x: &DVector<f64>| {
            x.iter()
                .zip(target.iter())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        };
        let out = nelder_mead(f, &DVector::zeros(3), &SimplexOptions::default());
        for (a, b) in out.x.iter().zip(target.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
