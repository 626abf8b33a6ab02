//! Simultaneous root finding (Aberth-Ehrlich) with Newton polishing.

use super::Polynomial;
use num_complex::Complex64;
use thiserror::Error;

const MAX_ITER: usize = 500;
const NEWTON_STEPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("polynomial of degree {0} has no roots to find")]
    Constant(usize),
    #[error(
        "root finder did not converge after {iterations} iterations (max residual {residual:.3e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },
}

/// All complex roots of `p`, with multiplicity, in no particular order.
pub fn find_roots(p: &Polynomial) -> Result<Vec<Complex64>, RootError> {
    let n = p.degree();
    if n == 0 {
        return Err(RootError::Constant(n));
    }
    // monic copy keeps the iteration scale-free
    let lead = p.coefficients()[n];
    let monic = Polynomial::new(p.coefficients().iter().map(|&c| c / lead).collect());
    if n == 1 {
        return Ok(vec![-monic.coefficients()[0]]);
    }

    let mut z = initial_guesses(&monic);
    let mut converged = vec![false; n];
    let mut iterations = 0;
    while iterations < MAX_ITER && converged.iter().any(|c| !c) {
        iterations += 1;
        for i in 0..n {
            if converged[i] {
                continue;
            }
            let (f, df) = monic.eval_with_derivative(z[i]);
            if f == Complex64::new(0.0, 0.0) {
                converged[i] = true;
                continue;
            }
            let ratio = f / df;
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| Complex64::new(1.0, 0.0) / (z[i] - z[j]))
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if !(step.re.is_finite() && step.im.is_finite()) {
                continue;
            }
            z[i] -= step;
            if step.norm() <= 4.0 * f64::EPSILON * (1.0 + z[i].norm()) {
                converged[i] = true;
            }
        }
    }

    for zi in z.iter_mut() {
        polish(&monic, zi);
    }

    let scale: f64 = monic.coefficients().iter().map(|c| c.norm()).sum();
    let residual = z
        .iter()
        .map(|&zi| monic.eval(zi).norm() / scale)
        .fold(0.0, f64::max);
    if converged.iter().any(|c| !c) && residual > 1e-10 {
        return Err(RootError::NoConvergence {
            iterations,
            residual,
        });
    }
    Ok(z)
}

/// Points on a circle whose radius is the Fujiwara bound, rotated off the
/// real axis so no guess starts on a symmetry line.
fn initial_guesses(monic: &Polynomial) -> Vec<Complex64> {
    let c = monic.coefficients();
    let n = c.len() - 1;
    let radius = (1..=n)
        .map(|k| {
            let coeff = c[n - k].norm();
            if k == n {
                (coeff / 2.0).powf(1.0 / k as f64)
            } else {
                coeff.powf(1.0 / k as f64)
            }
        })
        .fold(0.0, f64::max)
        * 2.0;
    let radius = if radius > 0.0 { radius } else { 1.0 };
    (0..n)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4;
            Complex64::from_polar(0.5 * radius, theta)
        })
        .collect()
}

/// Plain Newton steps; a step is only kept if it reduces the residual.
fn polish(p: &Polynomial, z: &mut Complex64) {
    for _ in 0..NEWTON_STEPS {
        let (f, df) = p.eval_with_derivative(*z);
        if df == Complex64::new(0.0, 0.0) {
            return;
        }
        let candidate = *z - f / df;
        if p.eval(candidate).norm() < f.norm() {
            *z = candidate;
        } else {
            return;
        }
    }
}
