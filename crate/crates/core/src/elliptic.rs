//! Complete elliptic integral K and the Jacobi elliptic functions for complex
//! modulus and complex argument.
//!
//! K is evaluated through the arithmetic-geometric mean, sn/cn/dn through the
//! descending Landen transformation after reducing the argument into the
//! fundamental period cell. All square roots are principal.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

const AGM_MAX_ITER: usize = 64;
const AGM_REL_TOL: f64 = 1e-14;

/// Landen descent stops once the modulus falls below this.
const LANDEN_TERMINAL_MODULUS: f64 = 1e-12;
const LANDEN_MAX_ITER: usize = 64;

/// Arguments closer than this to a pole of sn are rejected.
pub const POLE_PROXIMITY: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EllipticError {
    #[error("AGM did not converge after {iterations} iterations (a = {a}, b = {b})")]
    Divergence {
        iterations: usize,
        a: Complex64,
        b: Complex64,
    },
    #[error("AGM argument is zero")]
    ZeroArgument,
    #[error("parameter k^2 = {0} lies on the branch cut [1, inf)")]
    BranchCut(Complex64),
    #[error("argument {u} is within {distance:.3e} of a pole of sn at {pole}")]
    PoleProximity {
        u: Complex64,
        pole: Complex64,
        distance: f64,
    },
    #[error("non-finite input")]
    NonFinite,
}

/// Elliptic modulus k together with its parameter k^2.
///
/// Construction rejects parameters on the real half-line [1, inf), where the
/// principal branch of K is discontinuous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulus {
    k: Complex64,
    m: Complex64,
}

impl Modulus {
    pub fn new(k: Complex64) -> Result<Self, EllipticError> {
        Self::checked(k, k * k)
    }

    /// Builds the modulus from its parameter `m = k^2`, taking the principal
    /// root for k.
    pub fn from_parameter(m: Complex64) -> Result<Self, EllipticError> {
        Self::checked(m.sqrt(), m)
    }

    fn checked(k: Complex64, m: Complex64) -> Result<Self, EllipticError> {
        if !(m.re.is_finite() && m.im.is_finite()) {
            return Err(EllipticError::NonFinite);
        }
        if on_cut(m) {
            return Err(EllipticError::BranchCut(m));
        }
        Ok(Self { k, m })
    }

    pub fn k(&self) -> Complex64 {
        self.k
    }

    /// The parameter k^2.
    pub fn parameter(&self) -> Complex64 {
        self.m
    }

    /// Complementary modulus k' = sqrt(1 - k^2), principal root (Re k' >= 0).
    pub fn complementary(&self) -> Complex64 {
        (Complex64::new(1.0, 0.0) - self.m).sqrt()
    }

    /// The complementary modulus as a `Modulus`, if its parameter 1 - k^2 is
    /// off the cut (i.e. k^2 is not real and <= 0).
    pub fn complement(&self) -> Result<Modulus, EllipticError> {
        Modulus::checked(self.complementary(), Complex64::new(1.0, 0.0) - self.m)
    }
}

fn on_cut(m: Complex64) -> bool {
    m.im == 0.0 && m.re >= 1.0
}

/// Arithmetic-geometric mean with the "right choice" of square-root sign:
/// each geometric mean is taken on the side closer to the arithmetic mean.
pub fn agm(a: Complex64, b: Complex64) -> Result<Complex64, EllipticError> {
    if !(a.re.is_finite() && a.im.is_finite() && b.re.is_finite() && b.im.is_finite()) {
        return Err(EllipticError::NonFinite);
    }
    if a == Complex64::new(0.0, 0.0) || b == Complex64::new(0.0, 0.0) {
        return Err(EllipticError::ZeroArgument);
    }
    let (mut a, mut b) = (a, b);
    for _ in 0..AGM_MAX_ITER {
        if (a - b).norm() < AGM_REL_TOL * a.norm() {
            return Ok(a);
        }
        let next_a = 0.5 * (a + b);
        let mut g = (a * b).sqrt();
        if (next_a - g).norm() > (next_a + g).norm() {
            g = -g;
        }
        a = next_a;
        b = g;
        if a.norm() == 0.0 {
            break;
        }
    }
    Err(EllipticError::Divergence {
        iterations: AGM_MAX_ITER,
        a,
        b,
    })
}

/// Complete elliptic integral of the first kind, K(k) = pi / (2 agm(1, k')).
pub fn complete_elliptic_k(k: &Modulus) -> Result<Complex64, EllipticError> {
    let kp = k.complementary();
    Ok(Complex64::new(PI, 0.0) / (2.0 * agm(Complex64::new(1.0, 0.0), kp)?))
}

/// K evaluated directly from the parameter m = k^2.
pub fn complete_elliptic_k_param(m: Complex64) -> Result<Complex64, EllipticError> {
    complete_elliptic_k(&Modulus::from_parameter(m)?)
}

/// Boundary value of K on its cut, approached from the upper half plane:
/// `lim K(m + i0)` for real `m > 1`.
pub fn complete_elliptic_k_above_cut(m: f64) -> Result<Complex64, EllipticError> {
    if !(m.is_finite() && m > 1.0) {
        return Err(EllipticError::NonFinite);
    }
    let inv = 1.0 / m;
    let near = complete_elliptic_k_param(Complex64::new(inv, 0.0))?;
    let far = complete_elliptic_k_param(Complex64::new(1.0 - inv, 0.0))?;
    Ok((near + Complex64::i() * far) / m.sqrt())
}

/// The quarter periods (K, K') for parameter m. K' = K(1 - m); when 1 - m
/// lands on the cut (m real and negative) the upper boundary value is used,
/// which is still a period of sn.
pub fn quarter_periods(k: &Modulus) -> Result<(Complex64, Complex64), EllipticError> {
    let big_k = complete_elliptic_k(k)?;
    let mc = Complex64::new(1.0, 0.0) - k.parameter();
    let big_kp = if on_cut(mc) {
        complete_elliptic_k_above_cut(mc.re)?
    } else {
        complete_elliptic_k_param(mc)?
    };
    Ok((big_k, big_kp))
}

/// The three Jacobi functions at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobi {
    pub sn: Complex64,
    pub cn: Complex64,
    pub dn: Complex64,
}

/// Jacobi sn(u, k).
pub fn jacobi_sn(u: Complex64, k: &Modulus) -> Result<Complex64, EllipticError> {
    jacobi(u, k).map(|j| j.sn)
}

/// sn, cn and dn at `u`. The argument is first reduced modulo the period
/// lattice generated by 4K and 2iK'.
pub fn jacobi(u: Complex64, k: &Modulus) -> Result<Jacobi, EllipticError> {
    if !(u.re.is_finite() && u.im.is_finite()) {
        return Err(EllipticError::NonFinite);
    }
    let m = k.parameter();
    if m == Complex64::new(0.0, 0.0) {
        return Ok(Jacobi {
            sn: u.sin(),
            cn: u.cos(),
            dn: Complex64::new(1.0, 0.0),
        });
    }
    let (big_k, big_kp) = quarter_periods(k)?;
    let (reduced, flips) = reduce(u, 4.0 * big_k, 2.0 * Complex64::i() * big_kp);

    let i_kp = Complex64::i() * big_kp;
    for pole in [
        i_kp,
        -i_kp,
        2.0 * big_k + i_kp,
        2.0 * big_k - i_kp,
        -2.0 * big_k + i_kp,
        -2.0 * big_k - i_kp,
    ] {
        let distance = (reduced - pole).norm();
        if distance < POLE_PROXIMITY {
            return Err(EllipticError::PoleProximity { u, pole, distance });
        }
    }

    let mut j = landen(reduced, m);
    // a shift by 2iK' flips the signs of cn and dn
    if flips % 2 != 0 {
        j.cn = -j.cn;
        j.dn = -j.dn;
    }
    Ok(j)
}

/// Writes `u = alpha * w1 + beta * w2` with real alpha, beta, removes the
/// integer parts and returns the reduced argument plus the integer shift
/// applied along `w2`.
fn reduce(u: Complex64, w1: Complex64, w2: Complex64) -> (Complex64, i64) {
    let det = w1.re * w2.im - w1.im * w2.re;
    if det == 0.0 || !det.is_finite() {
        return (u, 0);
    }
    let alpha = (u.re * w2.im - u.im * w2.re) / det;
    let beta = (w1.re * u.im - w1.im * u.re) / det;
    let (ia, ib) = (alpha.round(), beta.round());
    (u - ia * w1 - ib * w2, ib as i64)
}

fn landen(u: Complex64, m: Complex64) -> Jacobi {
    let one = Complex64::new(1.0, 0.0);
    let mut mus: Vec<Complex64> = Vec::with_capacity(16);
    let mut mn = m;
    let mut un = u;
    for _ in 0..LANDEN_MAX_ITER {
        if mn.norm().sqrt() < LANDEN_TERMINAL_MODULUS {
            break;
        }
        let kp = (one - mn).sqrt();
        // (1 - k')/(1 + k') written without cancellation
        let mu = mn / ((one + kp) * (one + kp));
        mus.push(mu);
        un /= one + mu;
        mn = mu * mu;
    }
    let mut sn = un.sin();
    let mut cn = un.cos();
    let mut dn = one;
    for &mu in mus.iter().rev() {
        let s2 = sn * sn;
        let denom = one + mu * s2;
        let next_sn = (one + mu) * sn / denom;
        let next_cn = cn * dn / denom;
        let next_dn = (one - mu * s2) / denom;
        sn = next_sn;
        cn = next_cn;
        dn = next_dn;
    }
    Jacobi { sn, cn, dn }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Plain Simpson quadrature of the defining integral in the angle form,
    /// used as an oracle independent of the AGM.
    fn k_by_quadrature(m: Complex64) -> Complex64 {
        let n = 20_000;
        let h = (PI / 2.0) / n as f64;
        let f = |th: f64| {
            let s = th.sin();
            1.0 / (c(1.0, 0.0) - m * s * s).sqrt()
        };
        let mut acc = f(0.0) + f(PI / 2.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn agm_fixed_point() {
        assert_eq!(agm(c(1.0, 0.0), c(1.0, 0.0)).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn agm_real_pair() {
        // independent high-precision iteration gives 0.7283955155234534...
        let g = agm(c(1.0, 0.0), c(0.5, 0.0)).unwrap();
        assert!((g - c(0.728_395_515_523_453_4, 0.0)).norm() < 1e-15);
        // and K(k') relation: K(sqrt(3)/2) = pi / (2 agm(1, 1/2))
        let kk = complete_elliptic_k_param(c(0.75, 0.0)).unwrap();
        assert!((kk - c(PI / (2.0 * 0.728_395_515_523_453_4), 0.0)).norm() < 1e-14);
    }

    #[test]
    fn agm_conjugation() {
        let p = agm(c(1.0, 0.0), c(0.0, 1.0)).unwrap();
        let q = agm(c(1.0, 0.0), c(0.0, -1.0)).unwrap();
        assert!((p - q.conj()).norm() < 1e-15);
    }

    #[test]
    fn agm_rejects_zero() {
        assert_eq!(
            agm(c(0.0, 0.0), c(1.0, 0.0)),
            Err(EllipticError::ZeroArgument)
        );
    }

    #[test]
    fn k_at_zero_is_half_pi() {
        let k = complete_elliptic_k(&Modulus::new(c(0.0, 0.0)).unwrap()).unwrap();
        assert!((k - c(PI / 2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn k_small_modulus() {
        let k = complete_elliptic_k(&Modulus::new(c(0.1, 0.0)).unwrap()).unwrap();
        let q = k_by_quadrature(c(0.01, 0.0));
        assert!((k - q).norm() < 1e-12);
        // quadrature and an independent 30-digit evaluation agree on 1.5747455615...
        assert!((k.re - 1.574_745_561_517_356).abs() < 1e-14);
    }

    #[test]
    fn k_near_one_matches_log_asymptote() {
        for eps in [1e-4, 1e-6, 1e-8] {
            let k = Modulus::new(c(1.0 - eps, 0.0)).unwrap();
            let big_k = complete_elliptic_k(&k).unwrap();
            let kp = k.complementary().re;
            let gap = (big_k.re - (4.0 / kp).ln()).abs();
            // the next term is O(k'^2 log k')
            assert!(
                gap < 10.0 * kp * kp * (4.0 / kp).ln() + 1e-12,
                "eps={eps} gap={gap}"
            );
        }
    }

    #[test]
    fn branch_cut_is_rejected() {
        assert!(matches!(
            Modulus::from_parameter(c(2.0, 0.0)),
            Err(EllipticError::BranchCut(_))
        ));
        assert!(matches!(
            Modulus::new(c(1.0, 0.0)),
            Err(EllipticError::BranchCut(_))
        ));
        assert!(Modulus::from_parameter(c(2.0, 1e-9)).is_ok());
    }

    #[test]
    fn above_cut_boundary_value_is_the_upper_limit() {
        for m in [1.037, 1.5, 3.0, 10.0] {
            let boundary = complete_elliptic_k_above_cut(m).unwrap();
            let near = complete_elliptic_k_param(c(m, 1e-12)).unwrap();
            assert!(
                (boundary - near).norm() < 1e-9,
                "m={m}: {boundary} vs {near}"
            );
        }
    }

    #[test]
    fn k_is_conjugate_symmetric() {
        let m = c(0.3, 0.4);
        let a = complete_elliptic_k_param(m).unwrap();
        let b = complete_elliptic_k_param(m.conj()).unwrap();
        assert!((a - b.conj()).norm() < 1e-15);
    }

    #[test]
    fn sn_special_values() {
        for k in [c(0.3, 0.0), c(0.4, 0.1), c(0.9, -0.3)] {
            let k = Modulus::new(k).unwrap();
            assert!(jacobi_sn(c(0.0, 0.0), &k).unwrap().norm() < 1e-15);
            let big_k = complete_elliptic_k(&k).unwrap();
            let s = jacobi_sn(big_k, &k).unwrap();
            assert!((s - c(1.0, 0.0)).norm() < 1e-10, "sn(K) = {s}");
        }
    }

    #[test]
    fn sn_zero_modulus_is_sine() {
        let k = Modulus::new(c(0.0, 0.0)).unwrap();
        let u = c(0.4, -0.2);
        assert!((jacobi_sn(u, &k).unwrap() - u.sin()).norm() < 1e-15);
    }

    #[test]
    fn sn_half_period_sign_flip() {
        let k = Modulus::new(c(0.4, 0.1)).unwrap();
        let u = c(0.3, 0.2);
        let big_k = complete_elliptic_k(&k).unwrap();
        let a = jacobi_sn(u + 2.0 * big_k, &k).unwrap();
        let b = jacobi_sn(u, &k).unwrap();
        assert!((a + b).norm() < 1e-12);
    }

    #[test]
    fn sn_real_value() {
        // RK4 on w'' = -(1 + k^2) w + 2 k^2 w^3 from w(0)=0, w'(0)=1 to u=0.7
        let k2 = 0.25;
        let (mut w, mut p) = (0.0_f64, 1.0_f64);
        let n = 70_000;
        let h = 0.7 / n as f64;
        let acc = |w: f64| -(1.0 + k2) * w + 2.0 * k2 * w * w * w;
        for _ in 0..n {
            let (k1w, k1p) = (p, acc(w));
            let (k2w, k2p) = (p + 0.5 * h * k1p, acc(w + 0.5 * h * k1w));
            let (k3w, k3p) = (p + 0.5 * h * k2p, acc(w + 0.5 * h * k2w));
            let (k4w, k4p) = (p + h * k3p, acc(w + h * k3w));
            w += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
            p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        }
        let s = jacobi_sn(c(0.7, 0.0), &Modulus::new(c(0.5, 0.0)).unwrap()).unwrap();
        assert!((s.re - w).abs() < 1e-12, "{} vs {}", s.re, w);
        assert!((s.re - 0.634_293_276_335_112).abs() < 1e-13);
    }

    #[test]
    fn jacobi_identities() {
        let k = Modulus::new(c(0.7, 0.2)).unwrap();
        for u in [c(0.1, 0.0), c(1.3, -0.4), c(-2.0, 0.9), c(7.0, 3.0)] {
            let j = jacobi(u, &k).unwrap();
            let one = c(1.0, 0.0);
            assert!((j.sn * j.sn + j.cn * j.cn - one).norm() < 1e-11);
            assert!((j.dn * j.dn + k.parameter() * j.sn * j.sn - one).norm() < 1e-11);
            // d sn / du = cn dn
            let h = 1e-5;
            let d = (jacobi_sn(u + h, &k).unwrap() - jacobi_sn(u - h, &k).unwrap()) / (2.0 * h);
            assert!((d - j.cn * j.dn).norm() < 1e-8, "u={u}");
        }
    }

    #[test]
    fn pole_is_reported() {
        let k = Modulus::new(c(0.5, 0.0)).unwrap();
        let (_, kp) = quarter_periods(&k).unwrap();
        let err = jacobi_sn(Complex64::i() * kp, &k).unwrap_err();
        assert!(matches!(err, EllipticError::PoleProximity { .. }));
    }

    #[test]
    fn negative_parameter_periods() {
        // m < 0 puts 1 - m on the cut; the boundary value must still be a period
        let k = Modulus::from_parameter(c(-0.3, 0.0)).unwrap();
        let (big_k, big_kp) = quarter_periods(&k).unwrap();
        let u = c(0.2, 0.1);
        let base = landen(u, k.parameter()).sn;
        let shifted = landen(u + 2.0 * Complex64::i() * big_kp, k.parameter()).sn;
        let shifted_k = landen(u + 4.0 * big_k, k.parameter()).sn;
        assert!((base - shifted).norm() < 1e-10, "{base} vs {shifted}");
        assert!((base - shifted_k).norm() < 1e-10);
    }
}
