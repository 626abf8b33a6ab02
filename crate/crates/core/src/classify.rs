//! Periodic/open classification of integrated orbits, winding counts, and
//! separatrix location by bisection.
//!
//! An orbit is called periodic when the phase-space distance
//! d(t) = |x(t) - x0| + |x'(t) - x'(0)| returns below a closure tolerance.
//! Recurrences are found online: every local minimum of d along the dense
//! output is refined by golden-section search, and the run stops at the first
//! one below tolerance. "Open" is therefore a statement about a finite
//! horizon, which is recorded with the verdict.

use crate::dynamics::{
    initial_velocity, integrate_state, Branch, Chart, DynamicsError, IntegratorConfig, Sample,
    StepView, Termination, Trajectory,
};
use crate::potential::{turning_points, PolynomialPotential, PotentialError, TurningPointSet};
use crate::quartic::{QuarticError, WindingPair};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::ControlFlow;
use thiserror::Error;

pub const DEFAULT_CLOSURE_TOL: f64 = 1e-4;
/// Radius in y = 1/x of the cap skipped around a pole passage (|x| > 20).
pub const POLAR_CAP: f64 = 0.05;
/// Values of Re x - c smaller than this count as lying on the line.
pub const TANGENCY_TOL: f64 = 1e-9;
/// Recurrences are only looked for once d(t) has exceeded this multiple of
/// the closure tolerance, which skips the trivial minimum at t = 0.
const ARMING_FACTOR: f64 = 10.0;
/// Evaluations of d per accepted step, before refinement.
const PROBES_PER_STEP: usize = 4;
const GOLDEN_ITER: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("crossing of Re x = {line} near t = {t} is within {TANGENCY_TOL:e} of a tangency")]
    AmbiguousCrossing { line: f64, t: f64 },
    #[error("winding counts need four turning points in two pairs, found {0} (with multiplicity)")]
    UnsupportedLayout(usize),
    #[error("trajectory segment has too few samples ({0})")]
    TooFewSamples(usize),
    #[error("raw counts (n, m) = ({n}, {m}) do not form an admissible winding pair")]
    Inadmissible { n: u64, m: u64 },
    #[error("{endpoint} endpoint {x0} classified as {found:?}, expected {expected:?}")]
    Precondition {
        endpoint: &'static str,
        x0: Complex64,
        found: Verdict,
        expected: Verdict,
    },
    #[error("bisection stalled at {at}: {cause} (bracket {inside} .. {outside})")]
    Stall {
        at: Complex64,
        cause: String,
        inside: Complex64,
        outside: Complex64,
    },
    #[error("invalid separatrix tolerance")]
    InvalidTolerance,
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Periodic,
    Open,
    Undetermined,
}

/// Result of a periodicity test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub period: Option<f64>,
    pub winding: Option<WindingPair>,
    /// Raw crossing counts (n, m) over one period, before reduction.
    pub raw_counts: Option<(u64, u64)>,
    /// d at the accepted recurrence, or the smallest refined local minimum
    /// of d when none was accepted.
    pub closure_defect: f64,
    /// Time of `closure_defect`.
    pub defect_time: Option<f64>,
    pub horizon: f64,
    pub closure_tol: f64,
    pub x0: Complex64,
    pub energy: Complex64,
    /// Reason for an undetermined verdict, or why the winding is missing.
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub horizon: f64,
    pub closure_tol: f64,
    /// Integrator tolerance.
    pub tol: f64,
    pub branch: Branch,
}

impl ClassifyConfig {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            closure_tol: DEFAULT_CLOSURE_TOL,
            tol: 1e-11,
            branch: Branch::Plus,
        }
    }

    pub fn closure_tol(self, closure_tol: f64) -> Self {
        Self {
            closure_tol,
            ..self
        }
    }

    pub fn tol(self, tol: f64) -> Self {
        Self { tol, ..self }
    }
}

/// Online recurrence search over the dense output.
struct Recurrence {
    x0: Complex64,
    v0: Complex64,
    closure_tol: f64,
    armed: bool,
    /// Last three probes (t, d) and the steps that cover them.
    probes: Vec<(f64, f64)>,
    views: Vec<StepView>,
    best: Option<(f64, f64)>,
    found: Option<(f64, f64)>,
}

impl Recurrence {
    fn distance(&self, (x, v): (Complex64, Complex64)) -> f64 {
        let d = (x - self.x0).norm() + (v - self.v0).norm();
        if d.is_finite() {
            d
        } else {
            f64::INFINITY
        }
    }

    fn distance_at(&self, t: f64) -> f64 {
        let view = self
            .views
            .iter()
            .rev()
            .find(|v| t >= v.t0 && t <= v.t1())
            .or(self.views.first())
            .expect("at least one step");
        self.distance(view.state(t.clamp(view.t0, view.t1())))
    }

    /// Golden-section minimum of d on [a, b].
    fn refine(&self, mut a: f64, mut b: f64) -> (f64, f64) {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let mut fc = self.distance_at(c);
        let mut fd = self.distance_at(d);
        for _ in 0..GOLDEN_ITER {
            if (b - a).abs() < 1e-14 * b.abs().max(1.0) {
                break;
            }
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = self.distance_at(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = self.distance_at(d);
            }
        }
        if fc < fd {
            (c, fc)
        } else {
            (d, fd)
        }
    }

    fn push_probe(&mut self, t: f64, d: f64) -> ControlFlow<()> {
        if !self.armed {
            if d > ARMING_FACTOR * self.closure_tol {
                self.armed = true;
            }
            self.probes.clear();
            self.probes.push((t, d));
            return ControlFlow::Continue(());
        }
        self.probes.push((t, d));
        if self.probes.len() > 3 {
            self.probes.remove(0);
        }
        if let [(t0, d0), (_, d1), (t2, d2)] = self.probes[..] {
            if d1 <= d0 && d1 < d2 {
                let (tm, dm) = self.refine(t0, t2);
                if self.best.is_none_or(|(_, bd)| dm < bd) {
                    self.best = Some((tm, dm));
                }
                if dm < self.closure_tol {
                    self.found = Some((tm, dm));
                    return ControlFlow::Break(());
                }
            }
        }
        ControlFlow::Continue(())
    }
}

impl crate::dynamics::Observer for Recurrence {
    fn observe(&mut self, step: &StepView) -> ControlFlow<()> {
        self.views.push(*step);
        if self.views.len() > 3 {
            self.views.remove(0);
        }
        for j in 1..=PROBES_PER_STEP {
            let t = step.t0 + step.h * j as f64 / PROBES_PER_STEP as f64;
            let d = self.distance(step.state(t));
            self.push_probe(t, d)?;
        }
        ControlFlow::Continue(())
    }
}

/// Integrates from `x0` for up to `config.horizon` and looks for the first
/// return to the initial phase-space point.
pub fn detect_periodicity(
    potential: &PolynomialPotential,
    energy: Complex64,
    x0: Complex64,
    config: &ClassifyConfig,
) -> Classification {
    let v0 = initial_velocity(potential, energy, x0, config.branch);
    let mut base = Classification {
        verdict: Verdict::Undetermined,
        period: None,
        winding: None,
        raw_counts: None,
        closure_defect: f64::INFINITY,
        defect_time: None,
        horizon: config.horizon,
        closure_tol: config.closure_tol,
        x0,
        energy,
        note: None,
    };
    let mut rec = Recurrence {
        x0,
        v0,
        closure_tol: config.closure_tol,
        armed: false,
        probes: Vec::with_capacity(4),
        views: Vec::with_capacity(4),
        best: None,
        found: None,
    };
    let mut icfg = IntegratorConfig::new(config.horizon, config.tol);
    icfg.branch = config.branch;
    let traj = match integrate_state(potential, energy, x0, v0, &icfg, &mut rec) {
        Ok(t) => t,
        Err(e) => {
            base.note = Some(integration_note(&e));
            if let Some((t, d)) = rec.best {
                base.closure_defect = d;
                base.defect_time = Some(t);
            }
            return base;
        }
    };

    if let Some((t, d)) = rec.found {
        base.verdict = Verdict::Periodic;
        base.period = Some(t);
        base.closure_defect = d;
        base.defect_time = Some(t);
        // winding pairs are defined for the two-pair layout of a quartic
        if potential.degree() == 4 {
            // winding over exactly one period, closing the loop at the start
            let one_period = traj.window(0.0, t);
            let poles: Vec<f64> = traj
                .pole_passages
                .iter()
                .copied()
                .filter(|&p| p < t)
                .collect();
            match turning_points(potential, energy)
                .map_err(ClassifyError::from)
                .and_then(|tp| crossing_counts(one_period, &poles, &tp))
            {
                Ok(counts) => {
                    base.raw_counts = Some((counts.n_raw, counts.m_raw));
                    match counts.reduced() {
                        Ok(w) => base.winding = Some(w),
                        Err(e) => base.note = Some(e.to_string()),
                    }
                }
                Err(e) => base.note = Some(e.to_string()),
            }
        }
        return base;
    }

    if let Some((t, d)) = rec.best {
        base.closure_defect = d;
        base.defect_time = Some(t);
    }
    base.verdict = Verdict::Open;
    if let Termination::Escaped { t } = traj.termination {
        base.note = Some(format!("escaped at t = {t} without returning"));
    }
    base
}

fn integration_note(e: &DynamicsError) -> String {
    format!("integration failed: {e}")
}

/// Raw crossing counts over one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossingCounts {
    /// Crossings of the imaginary axis.
    pub m_raw: u64,
    /// Crossings of the two vertical lines through the turning-point pairs.
    pub n_raw: u64,
}

impl CrossingCounts {
    pub fn reduced(&self) -> Result<WindingPair, ClassifyError> {
        WindingPair::new(self.n_raw as i64, self.m_raw as i64).map_err(|e| match e {
            QuarticError::Inadmissible { .. } => ClassifyError::Inadmissible {
                n: self.n_raw,
                m: self.m_raw,
            },
            _ => unreachable!("WindingPair::new only reports admissibility"),
        })
    }
}

/// Counts crossings of the imaginary axis (m) and of the two vertical lines
/// Re x = c_L, Re x = c_R (n), where c_L and c_R are the mean real parts of
/// the left and right turning-point pairs. `period` must cover one full
/// period, first sample at the start; the loop is closed back to it.
///
/// `poles` lists the times within the period at which the orbit passes
/// through x = infinity. Near such a time x ~ ±i/(t - t_p) with no constant
/// term, so the orbit touches every vertical line tangentially at infinity.
/// Neighbouring orbits resolve the contact by swinging out to Re x -> ±inf,
/// which crosses one of the two outer lines twice and leaves the imaginary
/// axis count unchanged. Each passage is therefore counted as two crossings
/// towards n, with the samples inside the polar cap |x| > 1/[`POLAR_CAP`]
/// skipped.
pub fn crossing_counts(
    period: &[Sample],
    poles: &[f64],
    tp: &TurningPointSet,
) -> Result<CrossingCounts, ClassifyError> {
    let pts = tp.expanded();
    if pts.len() != 4 {
        return Err(ClassifyError::UnsupportedLayout(pts.len()));
    }
    if period.len() < 3 {
        return Err(ClassifyError::TooFewSamples(period.len()));
    }
    let kept = outside_polar_caps(period, poles);
    let left = 0.5 * (pts[0].re + pts[1].re);
    let right = 0.5 * (pts[2].re + pts[3].re);
    let m_raw = cyclic_crossings(&kept, 0.0)?;
    let n_raw =
        cyclic_crossings(&kept, left)? + cyclic_crossings(&kept, right)? + 2 * poles.len() as u64;
    Ok(CrossingCounts { m_raw, n_raw })
}

/// Winding pair of a trajectory over [0, period].
pub fn winding_counts(
    traj: &Trajectory,
    period: f64,
    tp: &TurningPointSet,
) -> Result<WindingPair, ClassifyError> {
    let poles: Vec<f64> = traj
        .pole_passages
        .iter()
        .copied()
        .filter(|&p| p < period)
        .collect();
    crossing_counts(traj.window(0.0, period), &poles, tp)?.reduced()
}

/// Drops the run of inverted-chart samples with |y| < POLAR_CAP around each
/// pole passage.
fn outside_polar_caps(samples: &[Sample], poles: &[f64]) -> Vec<Sample> {
    let in_cap = |s: &Sample| s.chart == Chart::Inverted && s.z.norm() < POLAR_CAP;
    let mut keep = vec![true; samples.len()];
    for &tp in poles {
        let centre = samples.partition_point(|s| s.t < tp);
        let mut lo = centre;
        while lo > 0 && in_cap(&samples[lo - 1]) {
            lo -= 1;
            keep[lo] = false;
        }
        let mut hi = centre;
        while hi < samples.len() && in_cap(&samples[hi]) {
            keep[hi] = false;
            hi += 1;
        }
    }
    samples
        .iter()
        .zip(keep)
        .filter_map(|(s, k)| k.then_some(*s))
        .collect()
}

/// Sign changes of Re x - c around the closed loop. The final sample is
/// treated as a repeat of the first when they are the same phase-space
/// point up to the closure defect, so it is dropped. A run of samples on the
/// line counts as one crossing if its neighbours lie on opposite sides and is
/// a tangency otherwise.
fn cyclic_crossings(samples: &[Sample], c: f64) -> Result<u64, ClassifyError> {
    let mut samples = samples;
    if samples.len() > 3 {
        let (first, last) = (samples[0], samples[samples.len() - 1]);
        if last.t > first.t && same_point(&first, &last) {
            samples = &samples[..samples.len() - 1];
        }
    }
    let values: Vec<f64> = samples.iter().map(|s| s.re_offset(c)).collect();
    let n = values.len();
    let side = |v: f64| -> i8 {
        if v.abs() < TANGENCY_TOL {
            0
        } else if v > 0.0 {
            1
        } else {
            -1
        }
    };
    let sides: Vec<i8> = values.iter().map(|&v| side(v)).collect();
    let Some(anchor) = sides.iter().position(|&s| s != 0) else {
        return Err(ClassifyError::AmbiguousCrossing {
            line: c,
            t: samples[0].t,
        });
    };

    let mut count = 0;
    let mut prev = sides[anchor];
    let mut i = 1;
    while i <= n {
        let idx = (anchor + i) % n;
        let s = sides[idx];
        if s == 0 {
            // skip over the run on the line
            let run_start = idx;
            let mut j = i;
            while sides[(anchor + j) % n] == 0 {
                j += 1;
            }
            let next = sides[(anchor + j) % n];
            if next == prev {
                return Err(ClassifyError::AmbiguousCrossing {
                    line: c,
                    t: samples[run_start].t,
                });
            }
            count += 1;
            prev = next;
            i = j + 1;
            continue;
        }
        if s != prev {
            count += 1;
            prev = s;
        }
        i += 1;
    }
    Ok(count)
}

fn same_point(a: &Sample, b: &Sample) -> bool {
    let (pa, pb) = (a.on_sphere(), b.on_sphere());
    let dist: f64 = (0..3).map(|i| (pa[i] - pb[i]).powi(2)).sum::<f64>().sqrt();
    dist < 1e-3
}

/// Outcome of a separatrix bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separatrix {
    /// Midpoint of the final bracket.
    pub point: Complex64,
    /// Last initial point classified periodic.
    pub inside: Complex64,
    /// Last initial point classified open.
    pub outside: Complex64,
    pub iterations: usize,
    /// Every classification made, endpoints first.
    pub history: Vec<Classification>,
}

/// Bisects the segment from `inside` (periodic) to `outside` (open) until the
/// bracket is shorter than `tol`.
pub fn find_separatrix(
    potential: &PolynomialPotential,
    energy: Complex64,
    inside: Complex64,
    outside: Complex64,
    tol: f64,
    config: &ClassifyConfig,
) -> Result<Separatrix, ClassifyError> {
    if !(tol > 0.0) {
        return Err(ClassifyError::InvalidTolerance);
    }
    let first = detect_periodicity(potential, energy, inside, config);
    if first.verdict != Verdict::Periodic {
        return Err(ClassifyError::Precondition {
            endpoint: "inside",
            x0: inside,
            found: first.verdict,
            expected: Verdict::Periodic,
        });
    }
    let second = detect_periodicity(potential, energy, outside, config);
    if second.verdict != Verdict::Open {
        return Err(ClassifyError::Precondition {
            endpoint: "outside",
            x0: outside,
            found: second.verdict,
            expected: Verdict::Open,
        });
    }
    let mut history = vec![first, second];
    let (mut lo, mut hi) = (inside, outside);
    let mut iterations = 0;
    while (hi - lo).norm() >= tol {
        let mid = 0.5 * (lo + hi);
        let c = detect_periodicity(potential, energy, mid, config);
        iterations += 1;
        match c.verdict {
            Verdict::Periodic => lo = mid,
            Verdict::Open => hi = mid,
            Verdict::Undetermined => {
                let cause = c.note.clone().unwrap_or_else(|| "undetermined".into());
                return Err(ClassifyError::Stall {
                    at: mid,
                    cause,
                    inside: lo,
                    outside: hi,
                });
            }
        }
        history.push(c);
    }
    Ok(Separatrix {
        point: 0.5 * (lo + hi),
        inside: lo,
        outside: hi,
        iterations,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Chart, Trajectory};
    use crate::quartic::{predicted_period, WindingPair};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn loop_samples(points: &[(f64, f64)]) -> Vec<Sample> {
        let v = PolynomialPotential::double_well();
        Trajectory::from_states(
            &v,
            c(1.0, 0.0),
            points
                .iter()
                .enumerate()
                .map(|(i, &(re, im))| (i as f64, c(re, im), c(0.0, 0.0))),
        )
        .samples
    }

    fn square_tp() -> TurningPointSet {
        TurningPointSet {
            points: vec![c(-2.0, -1.0), c(-2.0, 1.0), c(2.0, -1.0), c(2.0, 1.0)],
            multiplicities: vec![1, 1, 1, 1],
        }
    }

    #[test]
    fn counts_on_a_synthetic_loop() {
        // a circle of radius 3 around the origin crosses each line twice
        let pts: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * (i as f64 + 0.3) / 200.0;
                (3.0 * th.cos(), 3.0 * th.sin())
            })
            .collect();
        let counts = crossing_counts(&loop_samples(&pts), &[], &square_tp()).unwrap();
        assert_eq!(counts, CrossingCounts { m_raw: 2, n_raw: 4 });
        assert_eq!(counts.reduced().unwrap(), WindingPair::new(2, 1).unwrap());
    }

    #[test]
    fn start_on_the_axis_counts_once() {
        let pts = [(0.0, 0.0), (1.0, 0.5), (1.0, 1.0), (-1.0, 1.0), (-1.0, 0.5)];
        let counts = crossing_counts(&loop_samples(&pts), &[], &square_tp()).unwrap();
        assert_eq!(counts.m_raw, 2);
    }

    #[test]
    fn tangency_is_ambiguous() {
        let pts = [(1.0, 0.0), (0.0, 1.0), (1.0, 2.0), (1.5, 1.0)];
        assert!(matches!(
            crossing_counts(&loop_samples(&pts), &[], &square_tp()),
            Err(ClassifyError::AmbiguousCrossing { .. })
        ));
    }

    #[test]
    fn inverted_samples_cross_through_infinity() {
        // Re x flips sign through infinity: y passes through zero
        let mut s = loop_samples(&[(1.0, 0.0), (0.5, 0.5), (-0.5, 0.5), (-1.0, 0.0)]);
        for (sample, y) in
            s.iter_mut()
                .zip([c(0.01, 0.2), c(0.005, 0.0), c(-0.005, 0.0), c(-0.01, -0.2)])
        {
            sample.chart = Chart::Inverted;
            sample.z = y;
        }
        assert_eq!(cyclic_crossings(&s, 0.0).unwrap(), 2);
    }

    #[test]
    fn layout_must_be_quartic() {
        let tp = TurningPointSet {
            points: vec![c(-1.0, 0.0), c(1.0, 0.0)],
            multiplicities: vec![1, 1],
        };
        assert!(matches!(
            crossing_counts(&loop_samples(&[(0.0, 1.0); 4]), &[], &tp),
            Err(ClassifyError::UnsupportedLayout(2))
        ));
    }

    #[test]
    fn real_energy_well_orbit_is_periodic() {
        let v = PolynomialPotential::double_well();
        let cls = detect_periodicity(&v, c(-1.0, 0.0), c(0.5, 0.0), &ClassifyConfig::new(20.0));
        assert_eq!(cls.verdict, Verdict::Periodic);
        let period = crate::quartic::lattice_period(c(-1.0, 0.0), 1, 0)
            .unwrap()
            .re
            .abs();
        assert!((cls.period.unwrap() - period).abs() < 1e-4 * period);
        // never crosses the imaginary axis, so no admissible pair
        assert_eq!(cls.raw_counts.map(|r| r.1), Some(0));
        assert!(cls.winding.is_none());
    }

    #[test]
    fn eigencurve_orbit_has_its_winding() {
        let v = PolynomialPotential::double_well();
        let e = c(0.672_543_108_910_498, 1.0);
        let w = WindingPair::new(3, 1).unwrap();
        let t = predicted_period(e, w).unwrap();
        let cls = detect_periodicity(&v, e, c(0.0, 0.0), &ClassifyConfig::new(20.0 * t));
        assert_eq!(cls.verdict, Verdict::Periodic, "{cls:?}");
        assert!((cls.period.unwrap() - t).abs() < 1e-4 * t);
        assert_eq!(cls.winding, Some(w));
        assert_eq!(cls.raw_counts, Some((6, 2)));
    }

    #[test]
    fn classification_serializes() {
        let v = PolynomialPotential::double_well();
        let cls = detect_periodicity(&v, c(-1.0, 0.0), c(0.5, 0.0), &ClassifyConfig::new(10.0));
        let json = serde_json::to_value(&cls).unwrap();
        assert_eq!(json["verdict"], "periodic");
        assert!(json["period"].is_number());
        let back: Classification = serde_json::from_value(json).unwrap();
        assert_eq!(back, cls);
    }

    #[test]
    fn separatrix_rejects_bad_endpoints() {
        let v = PolynomialPotential::double_well();
        let cfg = ClassifyConfig::new(10.0);
        let err =
            find_separatrix(&v, c(-1.0, 0.0), c(0.5, 0.0), c(0.6, 0.0), 1e-2, &cfg).unwrap_err();
        assert!(matches!(
            err,
            ClassifyError::Precondition {
                endpoint: "outside",
                ..
            }
        ));
    }
}
