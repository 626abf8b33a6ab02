//! Closed-form analytics for the double well V(x) = x^4 - 5x^2.
//!
//! Factoring E - V(x) = (x^2 - a^2)(x^2 - b^2) gives
//! a^2 = (5 - s)/2, b^2 = (5 + s)/2 with s = sqrt(25 + 4E), and the trajectory
//! starting at the origin is x(t) = a sn(ibt, k) with k^2 = a^2/b^2.
//! The orbit closes after a time T when ibT is a lattice vector
//! 4mK + 2niK' of sn, which for real T is the eigencurve condition
//!
//! ```text
//! m Im[2iK/b] = n Im[K'/b]
//! ```
//!
//! Below the real axis the roles of the two lattice directions mirror, so the
//! lattice vector becomes 4mK - 2niK' and the condition picks up a sign; see
//! [`periodicity_residual`].

use crate::elliptic::{jacobi, quarter_periods, EllipticError, Modulus};
use num_complex::Complex64;
use num_integer::Integer;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

/// Coefficient c of the barrier term in V(x) = x^4 - c x^2.
pub(crate) const BARRIER: f64 = 5.0;

/// Energies closer than this to a root collision are rejected.
pub const DEGENERACY_RADIUS: f64 = 1e-10;

/// Relative size of Im T tolerated by [`predicted_period`].
pub const OFF_CURVE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuarticError {
    #[error("energy {energy} is degenerate: {collision}")]
    Degenerate {
        energy: Complex64,
        collision: Collision,
    },
    #[error("winding pair (n, m) = ({n}, {m}) is not admissible: need m > 0 and n >= 2m")]
    Inadmissible { n: i64, m: i64 },
    #[error(
        "energy {energy} is off the ({n},{m}) curve: Im T = {imag:.3e} against Re T = {period:.6}"
    )]
    OffCurve {
        energy: Complex64,
        n: u32,
        m: u32,
        period: f64,
        imag: f64,
    },
    #[error("non-finite energy")]
    NonFinite,
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
}

/// Which pair of turning points coincides at a degenerate energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Collision {
    /// E = 0: a = 0, the inner turning points merge at the origin.
    InnerAtOrigin,
    /// E = -25/4: a = b, the inner and outer turning points merge.
    InnerOuter,
}

impl fmt::Display for Collision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Collision::InnerAtOrigin => write!(f, "a = 0 (turning points collide at the origin)"),
            Collision::InnerOuter => write!(f, "a = b (inner and outer turning points collide)"),
        }
    }
}

/// Reduced winding pair (n, m) labelling an eigencurve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPair", into = "RawPair")]
pub struct WindingPair {
    n: u32,
    m: u32,
}

#[derive(Serialize, Deserialize)]
struct RawPair {
    n: i64,
    m: i64,
}

impl TryFrom<RawPair> for WindingPair {
    type Error = QuarticError;

    fn try_from(raw: RawPair) -> Result<Self, Self::Error> {
        WindingPair::new(raw.n, raw.m)
    }
}

impl From<WindingPair> for RawPair {
    fn from(w: WindingPair) -> Self {
        RawPair {
            n: w.n.into(),
            m: w.m.into(),
        }
    }
}

impl WindingPair {
    /// Reduces by the gcd and checks n >= 2m > 0.
    pub fn new(n: i64, m: i64) -> Result<Self, QuarticError> {
        if m <= 0 || n < 2 * m || n > u32::MAX as i64 {
            return Err(QuarticError::Inadmissible { n, m });
        }
        let g = n.gcd(&m);
        Ok(Self {
            n: (n / g) as u32,
            m: (m / g) as u32,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// The ratio n/m.
    pub fn ratio(&self) -> f64 {
        self.n as f64 / self.m as f64
    }
}

impl fmt::Display for WindingPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.n, self.m)
    }
}

/// Upper or lower half of the complex energy plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HalfPlane {
    Upper,
    Lower,
}

impl HalfPlane {
    pub fn sign(self) -> f64 {
        match self {
            HalfPlane::Upper => 1.0,
            HalfPlane::Lower => -1.0,
        }
    }

    /// The half plane containing `e`; the real axis counts as upper.
    pub fn of(e: Complex64) -> Self {
        if e.im < 0.0 {
            HalfPlane::Lower
        } else {
            HalfPlane::Upper
        }
    }
}

/// Turning-point scales and elliptic data at one energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarticParams {
    pub energy: Complex64,
    /// Inner turning point, principal root of a^2.
    pub a: Complex64,
    /// Outer turning point, principal root of b^2.
    pub b: Complex64,
    pub k: Modulus,
    pub k_prime: Complex64,
    /// K(k).
    pub big_k: Complex64,
    /// K(k'), the upper boundary value when 1 - k^2 lies on the cut.
    pub big_k_prime: Complex64,
}

impl QuarticParams {
    /// (x, dx/dt) on the orbit x = a sn(u, k) at lattice argument `u = ibt + u0`.
    pub fn state_at(&self, u: Complex64) -> Result<(Complex64, Complex64), QuarticError> {
        let j = jacobi(u, &self.k)?;
        let x = self.a * j.sn;
        let v = self.a * Complex64::i() * self.b * j.cn * j.dn;
        Ok((x, v))
    }

    /// Sign used to orient the K' direction: -1 strictly below the real axis.
    pub fn sigma(&self) -> f64 {
        HalfPlane::of(self.energy).sign()
    }

    /// The time (generally complex) after which ibt advances by the lattice
    /// vector 4mK + 2 sigma n iK'.
    pub fn lattice_period(&self, n: i64, m: i64) -> Complex64 {
        let shift = 4.0 * m as f64 * self.big_k
            + 2.0 * self.sigma() * n as f64 * Complex64::i() * self.big_k_prime;
        shift / (Complex64::i() * self.b)
    }

    /// Im[2iK/b], the K-direction term of the closure condition.
    pub fn numerator(&self) -> f64 {
        2.0 * (self.big_k / self.b).re
    }

    /// Im[K'/b], the K'-direction term of the closure condition.
    pub fn denominator(&self) -> f64 {
        (self.big_k_prime / self.b).im
    }
}

/// Turning-point parameters of x^4 - c x^2 at energy `energy`.
pub(crate) fn params_with_barrier(
    c: f64,
    energy: Complex64,
) -> Result<QuarticParams, QuarticError> {
    if !(energy.re.is_finite() && energy.im.is_finite()) {
        return Err(QuarticError::NonFinite);
    }
    if energy.norm() < DEGENERACY_RADIUS {
        return Err(QuarticError::Degenerate {
            energy,
            collision: Collision::InnerAtOrigin,
        });
    }
    if (energy + c * c / 4.0).norm() < DEGENERACY_RADIUS {
        return Err(QuarticError::Degenerate {
            energy,
            collision: Collision::InnerOuter,
        });
    }
    let s = (c * c + 4.0 * energy).sqrt();
    let a2 = 0.5 * (c - s);
    let b2 = 0.5 * (c + s);
    let k = Modulus::from_parameter(a2 / b2)?;
    let (big_k, big_k_prime) = quarter_periods(&k)?;
    Ok(QuarticParams {
        energy,
        a: a2.sqrt(),
        b: b2.sqrt(),
        k_prime: k.complementary(),
        k,
        big_k,
        big_k_prime,
    })
}

/// Parameters (a, b, k, k') for V = x^4 - 5x^2.
pub fn quartic_params(energy: Complex64) -> Result<QuarticParams, QuarticError> {
    params_with_barrier(BARRIER, energy)
}

/// x(t) = a sn(ibt, k), the orbit through the origin.
pub fn exact_trajectory(energy: Complex64, t: f64) -> Result<Complex64, QuarticError> {
    exact_state(energy, t).map(|(x, _)| x)
}

/// Position and velocity of the exact orbit through the origin.
pub fn exact_state(energy: Complex64, t: f64) -> Result<(Complex64, Complex64), QuarticError> {
    let p = quartic_params(energy)?;
    p.state_at(Complex64::i() * p.b * t)
}

/// Cleared-denominator closure residual
/// `f(E) = m Im[2iK/b] - sigma n Im[K'/b]`, with sigma = -1 below the real
/// axis and +1 otherwise. The zero set is symmetric under E -> conj(E).
pub fn periodicity_residual(energy: Complex64, w: WindingPair) -> Result<f64, QuarticError> {
    let p = quartic_params(energy)?;
    Ok(residual_of(&p, w))
}

pub(crate) fn residual_of(p: &QuarticParams, w: WindingPair) -> f64 {
    w.m as f64 * p.numerator() - p.sigma() * w.n as f64 * p.denominator()
}

/// The ratio n/m = Im[2iK/b] / (sigma Im[K'/b]) singled out by the energy;
/// infinite on the negative real axis.
pub fn periodicity_ratio(energy: Complex64) -> Result<f64, QuarticError> {
    let p = quartic_params(energy)?;
    Ok(p.numerator() / (p.sigma() * p.denominator()))
}

/// Period of the orbit at an energy on the (n, m) curve,
/// `T = |Re[(4mK + 2niK')/(ib)]|`. Fails if the discarded imaginary part
/// exceeds `OFF_CURVE_TOL * T`.
pub fn predicted_period(energy: Complex64, w: WindingPair) -> Result<f64, QuarticError> {
    let t = lattice_period(energy, w.n.into(), w.m.into())?;
    let period = t.re.abs();
    if !(t.im.abs() < OFF_CURVE_TOL * period) {
        return Err(QuarticError::OffCurve {
            energy,
            n: w.n,
            m: w.m,
            period,
            imag: t.im,
        });
    }
    Ok(period)
}

/// Raw lattice time (4mK + 2 sigma n iK')/(ib) for arbitrary integers; unlike
/// [`predicted_period`] it takes no admissibility constraint and keeps the
/// imaginary part. At E = -1 the pair (n, m) = (1, 0) gives the real period
/// of oscillation inside one well.
pub fn lattice_period(energy: Complex64, n: i64, m: i64) -> Result<Complex64, QuarticError> {
    Ok(quartic_params(energy)?.lattice_period(n, m))
}

/// Small-|E| energy on the (n, m) curve: `r exp(+-i pi (1 - 2m/n))`.
pub fn asymptotic_seed(w: WindingPair, r: f64, half_plane: HalfPlane) -> Complex64 {
    let arg = PI * (1.0 - 2.0 * w.m as f64 / w.n as f64);
    Complex64::from_polar(r, half_plane.sign() * arg)
}
