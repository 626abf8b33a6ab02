//! Eigencurves of the double well: the curves in the complex energy plane on
//! which every orbit closes.
//!
//! [`refine_energy`] solves f(E) = 0 on a one-parameter slice of the energy
//! plane with a safeguarded secant method. [`trace_curve`] follows a curve
//! outward from its small-|E| asymptote with a tangent predictor and a
//! corrector along the local normal, so curves that bend back are handled the
//! same as straight ones.

use crate::quartic::{
    asymptotic_seed, quartic_params, residual_of, HalfPlane, QuarticError, WindingPair,
    DEGENERACY_RADIUS,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Corrector stops once |f| drops below this.
const CONVERGED_RESIDUAL: f64 = 1e-13;
/// A refined energy is accepted only if |f| is below this.
pub const ACCEPT_RESIDUAL: f64 = 1e-10;
const MAX_ITER: usize = 100;

/// Radius of the seed point on the asymptotic ray.
pub const SEED_RADIUS: f64 = 1e-4;
/// Tracing stalls once the step has been halved below this.
pub const MIN_STEP: f64 = 1e-6;
/// Steps never exceed this fraction of |E|, so the march resolves the
/// neighbourhood of the origin.
const RELATIVE_STEP: f64 = 0.25;
/// Points closer than this to E = 0 or E = -25/4 end a trace.
const DEGENERACY_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigencurveError {
    #[error("corrector did not converge in {iterations} iterations (last E = {last}, |f| = {residual:.3e})")]
    Basin {
        iterations: usize,
        last: Complex64,
        residual: f64,
    },
    #[error("invalid slice: {0}")]
    InvalidSlice(&'static str),
    #[error("invalid trace parameters: {0}")]
    InvalidTrace(&'static str),
    #[error(transparent)]
    Quartic(#[from] QuarticError),
}

/// A real one-parameter family of energies on which f is solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slice {
    /// Im E held fixed; Re E is free.
    FixedIm(f64),
    /// Re E held fixed; Im E is free.
    FixedRe(f64),
    /// arg E held fixed; |E| is free.
    FixedArg(f64),
    /// E = origin + s * direction, s real.
    Line {
        origin: Complex64,
        direction: Complex64,
    },
}

impl Slice {
    /// The slice as `origin + s * unit`, together with the coordinate of
    /// the point on it nearest to `e`.
    fn parametrize(&self, e: Complex64) -> Result<(Complex64, Complex64, f64), EigencurveError> {
        let (origin, direction) = match *self {
            Slice::FixedIm(v) => (Complex64::new(0.0, v), Complex64::new(1.0, 0.0)),
            Slice::FixedRe(v) => (Complex64::new(v, 0.0), Complex64::new(0.0, 1.0)),
            Slice::FixedArg(theta) => (Complex64::new(0.0, 0.0), Complex64::from_polar(1.0, theta)),
            Slice::Line { origin, direction } => (origin, direction),
        };
        let len = direction.norm();
        if !(len > 0.0 && len.is_finite() && origin.re.is_finite() && origin.im.is_finite()) {
            return Err(EigencurveError::InvalidSlice(
                "direction must be finite and nonzero",
            ));
        }
        let unit = direction / len;
        let s = ((e - origin) * unit.conj()).re;
        Ok((origin, unit, s))
    }
}

/// Solves f(E) = 0 for the (n, m) curve on `slice`, starting from the point
/// of the slice nearest to `guess`.
pub fn refine_energy(
    guess: Complex64,
    w: WindingPair,
    slice: Slice,
) -> Result<Complex64, EigencurveError> {
    refine_with_residual(guess, w, slice).map(|(e, _)| e)
}

fn refine_with_residual(
    guess: Complex64,
    w: WindingPair,
    slice: Slice,
) -> Result<(Complex64, f64), EigencurveError> {
    let (origin, unit, s_start) = slice.parametrize(guess)?;
    let at = |s: f64| origin + unit * s;
    let f = |s: f64| -> Result<f64, QuarticError> { Ok(residual_of(&quartic_params(at(s))?, w)) };

    let mut s1 = s_start;
    let mut f1 = f(s1)?;
    if f1.abs() < CONVERGED_RESIDUAL {
        return Ok((at(s1), f1));
    }
    let h0 = 1e-4 * at(s1).norm().max(1e-9);
    let mut s0 = s1 + h0;
    let mut f0 = f(s0)?;
    // Latest pair of points with opposite signs, once one is seen.
    let mut bracket: Option<(f64, f64, f64, f64)> = None;
    if f0.signum() != f1.signum() {
        bracket = Some((s0, f0, s1, f1));
    }
    // secant steps are capped relative to the starting offset and distance
    let max_jump = 0.5 * (h0 + at(s_start).norm());

    for _ in 0..MAX_ITER {
        if f1.abs() < CONVERGED_RESIDUAL {
            return Ok((at(s1), f1));
        }
        let mut s2 = if f1 != f0 {
            s1 - f1 * (s1 - s0) / (f1 - f0)
        } else {
            f64::NAN
        };
        if let Some((lo, _, hi, _)) = bracket {
            let (a, b) = (lo.min(hi), lo.max(hi));
            if !(s2 > a && s2 < b) {
                s2 = 0.5 * (a + b);
            }
        } else if !s2.is_finite() {
            return Err(EigencurveError::Basin {
                iterations: MAX_ITER,
                last: at(s1),
                residual: f1.abs(),
            });
        } else if (s2 - s1).abs() > max_jump {
            s2 = s1 + max_jump * (s2 - s1).signum();
        }

        if (s2 - s1).abs() <= 4.0 * f64::EPSILON * (1.0 + s1.abs()) {
            break;
        }
        let f2 = match f(s2) {
            Ok(v) => v,
            Err(QuarticError::Degenerate { .. }) | Err(QuarticError::Elliptic(_)) => {
                // walk back toward the last good point
                s0 = s1;
                f0 = f1;
                let mid = 0.5 * (s1 + s2);
                (s1, f1) = (mid, f(mid)?);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        if let Some((lo, flo, hi, fhi)) = bracket {
            bracket = Some(if f2.signum() == flo.signum() {
                (s2, f2, hi, fhi)
            } else {
                (lo, flo, s2, f2)
            });
        } else if f2.signum() != f1.signum() {
            bracket = Some((s1, f1, s2, f2));
        }
        s0 = s1;
        f0 = f1;
        s1 = s2;
        f1 = f2;
    }

    if f1.abs() < ACCEPT_RESIDUAL {
        Ok((at(s1), f1))
    } else {
        Err(EigencurveError::Basin {
            iterations: MAX_ITER,
            last: at(s1),
            residual: f1.abs(),
        })
    }
}

/// Why a trace ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TraceStatus {
    /// The curve was followed out past the requested radius.
    Complete,
    /// The curve reached the real axis and would continue in the other half plane.
    ReachedRealAxis,
    /// The curve ran into E = 0 or E = -25/4.
    Degenerate,
    /// The corrector failed repeatedly; the polyline is truncated.
    CorrectorFailed { message: String },
    /// The step collapsed below the minimum.
    Stalled { step: f64 },
}

/// Polyline approximation of one eigencurve branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigencurve {
    pub winding: WindingPair,
    pub half_plane: HalfPlane,
    pub points: Vec<Complex64>,
    pub residuals: Vec<f64>,
    pub status: TraceStatus,
}

impl Eigencurve {
    /// Euclidean distance from `e` to the polyline.
    pub fn distance_to(&self, e: Complex64) -> f64 {
        match self.points.as_slice() {
            [] => f64::INFINITY,
            [p] => (e - p).norm(),
            pts => pts
                .windows(2)
                .map(|seg| {
                    let d = seg[1] - seg[0];
                    let t = (((e - seg[0]) * d.conj()).re / d.norm_sqr()).clamp(0.0, 1.0);
                    (e - (seg[0] + d * t)).norm()
                })
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// First point where the polyline reaches modulus `r`, by linear
    /// interpolation along the crossing segment.
    pub fn at_radius(&self, r: f64) -> Option<Complex64> {
        self.points.windows(2).find_map(|seg| {
            let (r0, r1) = (seg[0].norm(), seg[1].norm());
            if (r0 - r) * (r1 - r) <= 0.0 && r0 != r1 {
                Some(seg[0] + (seg[1] - seg[0]) * ((r - r0) / (r1 - r0)))
            } else {
                None
            }
        })
    }
}

/// Tracing controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub max_radius: f64,
    /// Upper bound on the distance between consecutive points.
    pub step: f64,
    pub half_plane: HalfPlane,
}

impl TraceConfig {
    pub fn new(max_radius: f64, step: f64) -> Self {
        Self {
            max_radius,
            step,
            half_plane: HalfPlane::Upper,
        }
    }

    pub fn lower(self) -> Self {
        Self {
            half_plane: HalfPlane::Lower,
            ..self
        }
    }
}

/// Follows the (n, m) curve from |E| = `SEED_RADIUS` outward.
pub fn trace_curve(w: WindingPair, config: TraceConfig) -> Result<Eigencurve, EigencurveError> {
    if !(config.step > 0.0 && config.step.is_finite()) {
        return Err(EigencurveError::InvalidTrace("step must be positive"));
    }
    if !(config.max_radius > SEED_RADIUS && config.max_radius.is_finite()) {
        return Err(EigencurveError::InvalidTrace(
            "max_radius must exceed the seed radius",
        ));
    }
    let side = config.half_plane;
    let seed = asymptotic_seed(w, SEED_RADIUS, side);
    let radial = seed / seed.norm();
    let (p0, r0) = refine_with_residual(
        seed,
        w,
        Slice::Line {
            origin: seed,
            direction: Complex64::i() * radial,
        },
    )?;

    let mut curve = Eigencurve {
        winding: w,
        half_plane: side,
        points: vec![p0],
        residuals: vec![r0],
        status: TraceStatus::Complete,
    };
    let mut tangent = radial;
    let mut h = config.step.min(RELATIVE_STEP * p0.norm());

    loop {
        let last = *curve.points.last().expect("seeded");
        if last.norm() > config.max_radius {
            curve.status = TraceStatus::Complete;
            break;
        }
        let predicted = last + tangent * h;
        let corrected = refine_with_residual(
            predicted,
            w,
            Slice::Line {
                origin: predicted,
                direction: Complex64::i() * tangent,
            },
        );
        let accepted = match corrected {
            Ok((e, r)) => {
                let jump = (e - predicted).norm();
                let stride = (e - last).norm();
                if jump <= 0.5 * h && stride <= config.step && stride > 0.0 {
                    Some((e, r))
                } else {
                    None
                }
            }
            Err(EigencurveError::Quartic(QuarticError::Degenerate { .. })) => {
                curve.status = TraceStatus::Degenerate;
                break;
            }
            Err(_) => None,
        };

        let Some((e, r)) = accepted else {
            h *= 0.5;
            if h < MIN_STEP {
                curve.status = match corrected {
                    Err(e) => TraceStatus::CorrectorFailed {
                        message: e.to_string(),
                    },
                    Ok(_) => TraceStatus::Stalled { step: h },
                };
                break;
            }
            continue;
        };

        if side.sign() * e.im < 0.0 {
            curve.status = TraceStatus::ReachedRealAxis;
            break;
        }
        if e.norm() < DEGENERACY_GUARD.max(DEGENERACY_RADIUS)
            || (e + 6.25).norm() < DEGENERACY_GUARD
        {
            curve.status = TraceStatus::Degenerate;
            break;
        }

        tangent = (e - last) / (e - last).norm();
        curve.points.push(e);
        curve.residuals.push(r);
        h = (1.5 * h).min(config.step).min(RELATIVE_STEP * e.norm());
    }
    Ok(curve)
}
