//! Polynomial potentials: representation, parsing, evaluation and turning
//! points.

mod parse;
mod roots;

pub use parse::{parse_potential, ParseError};
pub use roots::{find_roots, RootError};

use num_complex::Complex64;
use std::fmt;
use thiserror::Error;

/// Two roots closer than this (relative to their size) are merged into one
/// turning point of higher multiplicity.
const CLUSTER_TOL: f64 = 1e-6;

/// Dense complex polynomial, constant term first.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<Complex64>,
}

impl Polynomial {
    /// Trailing (highest-order) exact zeros are dropped.
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&Complex64::new(0.0, 0.0)) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Complex64::new(0.0, 0.0));
        }
        Self { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == Complex64::new(0.0, 0.0)
    }

    /// Horner evaluation.
    pub fn eval(&self, x: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
    }

    /// Value and first derivative in one Horner pass.
    pub fn eval_with_derivative(&self, x: Complex64) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        let mut p = zero;
        let mut dp = zero;
        for &c in self.coeffs.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::new(vec![Complex64::new(0.0, 0.0)]);
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, &c)| c * j as f64)
                .collect(),
        )
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (j, c) in self.coeffs.iter().enumerate().rev() {
            if *c == Complex64::new(0.0, 0.0) && !(first && j == 0) {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let coeff = if c.im == 0.0 {
                format!("{}", c.re)
            } else {
                format!("({})", c)
            };
            match j {
                0 => write!(f, "{coeff}")?,
                1 => write!(f, "{coeff}*x")?,
                _ => write!(f, "{coeff}*x^{j}")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PotentialError {
    #[error("potential must have degree >= 2, got degree {0}")]
    DegreeTooLow(usize),
    #[error("coefficient {index} is not finite")]
    NonFinite { index: usize },
    #[error("E - V(x) vanishes identically")]
    Identical,
    #[error(transparent)]
    Roots(#[from] RootError),
}

/// A polynomial potential V(x) of degree at least two with nonzero leading
/// coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialPotential {
    poly: Polynomial,
}

impl PolynomialPotential {
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self, PotentialError> {
        if let Some(index) = coeffs
            .iter()
            .position(|c| !(c.re.is_finite() && c.im.is_finite()))
        {
            return Err(PotentialError::NonFinite { index });
        }
        let poly = Polynomial::new(coeffs);
        if poly.degree() < 2 {
            return Err(PotentialError::DegreeTooLow(poly.degree()));
        }
        Ok(Self { poly })
    }

    pub fn from_real(coeffs: &[f64]) -> Result<Self, PotentialError> {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    /// The quartic double well x^4 - 5x^2.
    pub fn double_well() -> Self {
        Self::from_real(&[0.0, 0.0, -5.0, 0.0, 1.0]).expect("valid quartic")
    }

    pub fn coefficients(&self) -> &[Complex64] {
        self.poly.coefficients()
    }

    pub fn degree(&self) -> usize {
        self.poly.degree()
    }

    pub fn polynomial(&self) -> &Polynomial {
        &self.poly
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        self.poly.eval(x)
    }

    /// V'(x) as a polynomial of degree one less.
    pub fn derivative(&self) -> Polynomial {
        self.poly.derivative()
    }

    /// Whether this is the double well x^4 - 5x^2 (exact coefficients).
    pub fn is_double_well(&self) -> bool {
        self == &Self::double_well()
    }

    /// The polynomial E - V(x).
    pub fn kinetic(&self, energy: Complex64) -> Polynomial {
        let mut coeffs: Vec<Complex64> = self.coefficients().iter().map(|&c| -c).collect();
        coeffs[0] += energy;
        Polynomial::new(coeffs)
    }
}

impl fmt::Display for PolynomialPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.poly.fmt(f)
    }
}

/// Roots of E - V(x), merged by multiplicity and sorted by real part, then
/// imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct TurningPointSet {
    pub points: Vec<Complex64>,
    pub multiplicities: Vec<usize>,
}

impl TurningPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of roots counted with multiplicity.
    pub fn total_multiplicity(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    /// All roots, each repeated by its multiplicity.
    pub fn expanded(&self) -> Vec<Complex64> {
        self.points
            .iter()
            .zip(&self.multiplicities)
            .flat_map(|(&p, &m)| std::iter::repeat_n(p, m))
            .collect()
    }
}

/// Turning points of the motion at energy `energy`: all complex roots of
/// E - V(x).
pub fn turning_points(
    potential: &PolynomialPotential,
    energy: Complex64,
) -> Result<TurningPointSet, PotentialError> {
    let q = potential.kinetic(energy);
    if q.degree() == 0 {
        return Err(PotentialError::Identical);
    }
    let roots = find_roots(&q)?;
    Ok(cluster(roots))
}

fn cluster(mut roots: Vec<Complex64>) -> TurningPointSet {
    let mut groups: Vec<(Complex64, usize)> = Vec::new();
    while let Some(r) = roots.pop() {
        let mut members = vec![r];
        roots.retain(|&s| {
            let close = (s - r).norm() < CLUSTER_TOL * (1.0 + r.norm());
            if close {
                members.push(s);
            }
            !close
        });
        let n = members.len();
        let centre = members.iter().sum::<Complex64>() / n as f64;
        groups.push((centre, n));
    }
    groups.sort_by(|a, b| {
        a.0.re
            .total_cmp(&b.0.re)
            .then_with(|| a.0.im.total_cmp(&b.0.im))
    });
    TurningPointSet {
        points: groups.iter().map(|g| g.0).collect(),
        multiplicities: groups.iter().map(|g| g.1).collect(),
    }
}
