//! Numerical integration of complex trajectories x(t), t real, obeying
//! (dx/dt)^2 + V(x) = E.
//!
//! The second-order form x'' = -V'(x)/2 is integrated, so after t = 0 no
//! square-root branch is ever chosen. The integrator is Dormand-Prince 5(4)
//! with PI step control on the error per unit step and the standard
//! fourth-order dense output.
//!
//! Orbits of quartic (and lower-degree) potentials can reach infinity in
//! finite real time: x = a sn(ibt, k) passes through a pole of sn. For those
//! potentials the state is carried on the Riemann sphere. Once |x| grows past
//! [`CHART_SWITCH_OUT`] the integrator continues in y = 1/x, which obeys
//! (y')^2 + W(y) = 0 with the polynomial W(y) = y^4 (V(1/y) - E), and returns
//! to x when |y| exceeds [`CHART_SWITCH_IN`]. Higher-degree potentials cannot
//! be compactified this way and use an escape radius instead.

use crate::potential::{Polynomial, PolynomialPotential};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::ControlFlow;
use std::str::FromStr;
use thiserror::Error;

/// Leave the x chart once |x| exceeds this.
pub const CHART_SWITCH_OUT: f64 = 4.0;
/// Leave the y = 1/x chart once |y| exceeds this (|x| < 2).
pub const CHART_SWITCH_IN: f64 = 0.5;
pub const DEFAULT_ESCAPE_RADIUS: f64 = 50.0;
pub const DEFAULT_SAMPLE_SPACING: f64 = 0.05;
/// A pole passage is recorded when |1/x| dips below this.
pub const POLE_PASSAGE_RADIUS: f64 = 1e-3;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
/// Error per unit step behaves like h^4, hence 1/4 in the integral gain.
const EXPO1: f64 = 0.25 - BETA * 0.75;
/// Bounds on h_new / h.
const SHRINK_LIMIT: f64 = 0.2;
const GROW_LIMIT: f64 = 10.0;
/// Cap on dense sub-samples per step.
const MAX_SUBSAMPLES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("initial state is not finite")]
    NonFiniteStart,
    #[error("step size collapsed to {h:.3e} at t = {t}")]
    StepCollapse { t: f64, h: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
}

/// Sign of the initial velocity, +sqrt(E - V(x0)) or its negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Branch {
    #[default]
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

impl FromStr for Branch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "+" | "plus" => Ok(Branch::Plus),
            "-" | "minus" => Ok(Branch::Minus),
            other => Err(format!("branch must be '+' or '-', got '{other}'")),
        }
    }
}

/// Initial velocity on the chosen branch: ±sqrt(E - V(x0)), principal root.
pub fn initial_velocity(
    potential: &PolynomialPotential,
    energy: Complex64,
    x0: Complex64,
    branch: Branch,
) -> Complex64 {
    branch.sign() * (energy - potential.eval(x0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub t_max: f64,
    /// Absolute and relative tolerance on the local error per unit time
    /// (per step when h > 1).
    pub tol: f64,
    /// Only used when the potential cannot be carried through infinity.
    pub escape_radius: f64,
    /// Maximum distance between consecutive stored samples, in chart
    /// coordinates.
    pub sample_spacing: f64,
    pub branch: Branch,
    /// Carry quartic-or-lower orbits through infinity via y = 1/x.
    pub compactify: bool,
    pub max_steps: usize,
}

impl IntegratorConfig {
    pub fn new(t_max: f64, tol: f64) -> Self {
        Self {
            t_max,
            tol,
            escape_radius: DEFAULT_ESCAPE_RADIUS,
            sample_spacing: DEFAULT_SAMPLE_SPACING,
            branch: Branch::Plus,
            compactify: true,
            max_steps: 10_000_000,
        }
    }

    pub fn with_branch(self, branch: Branch) -> Self {
        Self { branch, ..self }
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(DynamicsError::InvalidConfig(
                "t_max must be positive and finite",
            ));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(DynamicsError::InvalidConfig("tol must lie in (0, 1)"));
        }
        if !(self.sample_spacing > 0.0) {
            return Err(DynamicsError::InvalidConfig(
                "sample spacing must be positive",
            ));
        }
        if !(self.escape_radius > CHART_SWITCH_OUT) {
            return Err(DynamicsError::InvalidConfig("escape radius must exceed 4"));
        }
        Ok(())
    }
}

/// Coordinate chart on the Riemann sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chart {
    /// (x, x').
    Direct,
    /// (y, y') with y = 1/x.
    Inverted,
}

/// One stored point of a trajectory, in the chart it was computed in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub chart: Chart,
    /// x or y.
    pub z: Complex64,
    /// x' or y'.
    pub w: Complex64,
}

impl Sample {
    fn direct(t: f64, x: Complex64, v: Complex64) -> Self {
        Self {
            t,
            chart: Chart::Direct,
            z: x,
            w: v,
        }
    }

    /// Position x; infinite at y = 0.
    pub fn x(&self) -> Complex64 {
        match self.chart {
            Chart::Direct => self.z,
            Chart::Inverted => self.z.inv(),
        }
    }

    /// Velocity x' = -y'/y^2 in the inverted chart.
    pub fn v(&self) -> Complex64 {
        match self.chart {
            Chart::Direct => self.w,
            Chart::Inverted => -self.w / (self.z * self.z),
        }
    }

    /// Sign-faithful value of Re x - c: positive, negative or zero exactly
    /// when Re x - c is, and finite through x = infinity.
    pub fn re_offset(&self, c: f64) -> f64 {
        match self.chart {
            Chart::Direct => self.z.re - c,
            Chart::Inverted => self.z.re - c * self.z.norm_sqr(),
        }
    }

    /// Point on the unit sphere under stereographic projection, for
    /// chart-independent distances.
    pub fn on_sphere(&self) -> [f64; 3] {
        let (p, flip) = match self.chart {
            Chart::Direct => (self.z, 1.0),
            Chart::Inverted => (self.z.conj(), -1.0),
        };
        let d = 1.0 + p.norm_sqr();
        [
            2.0 * p.re / d,
            2.0 * p.im / d,
            flip * (p.norm_sqr() - 1.0) / d,
        ]
    }
}

/// Why integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    /// Reached t_max.
    Completed,
    /// |x| exceeded the escape radius.
    Escaped { t: f64 },
    /// An observer asked to stop.
    Stopped { t: f64 },
}

/// The two polynomial systems (one per chart): (z')^2 + Q(z) = 0 and
/// z'' = -Q'(z)/2.
#[derive(Debug, Clone)]
struct System {
    q: Polynomial,
    half_dq: Polynomial,
}

impl System {
    fn new(q: Polynomial) -> Self {
        let dq = q.derivative();
        let half_dq = Polynomial::new(dq.coefficients().iter().map(|c| 0.5 * c).collect());
        Self { q, half_dq }
    }

    fn rhs(&self, y: [Complex64; 2]) -> [Complex64; 2] {
        [y[1], -self.half_dq.eval(y[0])]
    }

    fn energy_residual(&self, z: Complex64, w: Complex64) -> Complex64 {
        w * w + self.q.eval(z)
    }
}

/// Direct system V(x) - E and, when the degree allows, the inverted system
/// W(y) = y^4 (V(1/y) - E).
fn systems(potential: &PolynomialPotential, energy: Complex64) -> (System, Option<System>) {
    let mut q = potential.coefficients().to_vec();
    q[0] -= energy;
    let direct = System::new(Polynomial::new(q.clone()));
    let inverted = (potential.degree() <= 4).then(|| {
        let mut wc = vec![Complex64::new(0.0, 0.0); 5];
        for (j, &c) in q.iter().enumerate() {
            wc[4 - j] += c;
        }
        System::new(Polynomial::new(wc))
    });
    (direct, inverted)
}

/// Integrated trajectory with samples spaced at most `sample_spacing` apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub energy: Complex64,
    #[serde(skip)]
    potential: Option<PolynomialPotential>,
    pub samples: Vec<Sample>,
    /// Times at which x passed through infinity (|y| = |1/x| dipped below
    /// [`POLE_PASSAGE_RADIUS`] in the inverted chart).
    #[serde(default)]
    pub pole_passages: Vec<f64>,
    pub termination: Termination,
}

impl Trajectory {
    /// A trajectory from externally computed direct-chart states.
    pub fn from_states(
        potential: &PolynomialPotential,
        energy: Complex64,
        states: impl IntoIterator<Item = (f64, Complex64, Complex64)>,
    ) -> Self {
        Self {
            energy,
            potential: Some(potential.clone()),
            samples: states
                .into_iter()
                .map(|(t, x, v)| Sample::direct(t, x, v))
                .collect(),
            pole_passages: Vec::new(),
            termination: Termination::Completed,
        }
    }

    pub fn potential(&self) -> Option<&PolynomialPotential> {
        self.potential.as_ref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn positions(&self) -> Vec<Complex64> {
        self.samples.iter().map(Sample::x).collect()
    }

    pub fn velocities(&self) -> Vec<Complex64> {
        self.samples.iter().map(Sample::v).collect()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Largest |x| over the samples.
    pub fn max_abs_position(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.x().norm())
            .fold(0.0, f64::max)
    }

    /// Samples with t in [t0, t1].
    pub fn window(&self, t0: f64, t1: f64) -> &[Sample] {
        let lo = self.samples.partition_point(|s| s.t < t0);
        let hi = self.samples.partition_point(|s| s.t <= t1);
        &self.samples[lo..hi]
    }

    pub fn energy_drift(&self) -> f64 {
        energy_drift(self)
    }
}

/// Largest |x'^2 + V(x) - E| over the samples, each measured in the chart it
/// was stored in (in the y chart the residual is |y'^2 + W(y)|).
pub fn energy_drift(traj: &Trajectory) -> f64 {
    let Some(potential) = traj.potential.as_ref() else {
        return f64::NAN;
    };
    let (direct, inverted) = systems(potential, traj.energy);
    traj.samples
        .iter()
        .map(|s| match (s.chart, inverted.as_ref()) {
            (Chart::Direct, _) => direct.energy_residual(s.z, s.w).norm(),
            (Chart::Inverted, Some(sys)) => sys.energy_residual(s.z, s.w).norm(),
            (Chart::Inverted, None) => f64::NAN,
        })
        .fold(0.0, f64::max)
}

/// Dense-output polynomial of one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct StepView {
    pub t0: f64,
    pub h: f64,
    pub chart: Chart,
    cont: [[Complex64; 2]; 5],
}

impl StepView {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Interpolated state at `t` in [t0, t0 + h], in this step's chart.
    pub fn sample(&self, t: f64) -> Sample {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let c = &self.cont;
        let y = |i: usize| c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * c[4][i])));
        Sample {
            t,
            chart: self.chart,
            z: y(0),
            w: y(1),
        }
    }

    /// Interpolated (x, x') at `t`.
    pub fn state(&self, t: f64) -> (Complex64, Complex64) {
        let s = self.sample(t);
        (s.x(), s.v())
    }
}

/// Callback run after every accepted step.
pub trait Observer {
    fn observe(&mut self, step: &StepView) -> ControlFlow<()>;
}

/// Observer that never stops the run.
pub struct NoObserver;

impl Observer for NoObserver {
    fn observe(&mut self, _: &StepView) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

impl<F: FnMut(&StepView) -> ControlFlow<()>> Observer for F {
    fn observe(&mut self, step: &StepView) -> ControlFlow<()> {
        self(step)
    }
}

/// Integrates from x0 with initial velocity ±sqrt(E - V(x0)) chosen by
/// `config.branch`.
pub fn integrate(
    potential: &PolynomialPotential,
    energy: Complex64,
    x0: Complex64,
    config: &IntegratorConfig,
) -> Result<Trajectory, DynamicsError> {
    let v0 = initial_velocity(potential, energy, x0, config.branch);
    integrate_state(potential, energy, x0, v0, config, &mut NoObserver)
}

/// Integrates from an explicit phase-space point (x0, v0). `energy` should
/// equal v0^2 + V(x0); it is used for the inverted chart and for drift.
pub fn integrate_state(
    potential: &PolynomialPotential,
    energy: Complex64,
    x0: Complex64,
    v0: Complex64,
    config: &IntegratorConfig,
    observer: &mut dyn Observer,
) -> Result<Trajectory, DynamicsError> {
    config.validate()?;
    if ![x0.re, x0.im, v0.re, v0.im, energy.re, energy.im]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(DynamicsError::NonFiniteStart);
    }
    let (direct, inverted) = systems(potential, energy);
    let inverted = inverted.filter(|_| config.compactify);

    let mut traj = Trajectory {
        energy,
        potential: Some(potential.clone()),
        samples: vec![Sample::direct(0.0, x0, v0)],
        pole_passages: Vec::new(),
        termination: Termination::Completed,
    };

    let mut chart = Chart::Direct;
    let mut y = [x0, v0];
    if let Some(flipped) = switch_chart(&mut chart, &mut y, inverted.is_some()) {
        traj.samples[0] = flipped;
    }
    let system = |chart: Chart| match chart {
        Chart::Direct => &direct,
        Chart::Inverted => inverted
            .as_ref()
            .expect("inverted chart requires compactification"),
    };

    let tol = config.tol;
    let mut t = 0.0;
    let mut k1 = system(chart).rhs(y);
    let mut h = initial_step(system(chart), y, k1, tol).min(config.t_max);
    let mut fac_old: f64 = 1e-4;
    let mut steps = 0;
    let mut last_rejected = false;
    let mut pole_depth = f64::INFINITY;

    while t < config.t_max {
        steps += 1;
        if steps > config.max_steps {
            return Err(DynamicsError::TooManySteps {
                t,
                max_steps: config.max_steps,
            });
        }
        let remaining = config.t_max - t;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(DynamicsError::StepCollapse { t, h });
        }

        let sys = system(chart);
        let step = dopri_step(sys, y, k1, h);
        // error per unit step: the local error may not exceed tol * min(h, 1),
        // so the accumulated error grows like tol * t rather than tol * steps
        let err = error_norm(&y, &step.y1, &step.err, tol) / h.min(1.0);

        if !(err <= 1.0) {
            // rejected (also catches NaN from overflow)
            let fac11 = if err.is_finite() {
                err.powf(EXPO1)
            } else {
                f64::INFINITY
            };
            h /= (fac11 / SAFETY).clamp(1.0, 1.0 / SHRINK_LIMIT);
            last_rejected = true;
            continue;
        }

        let t1 = if last { config.t_max } else { t + h };
        let view = StepView {
            t0: t,
            h: t1 - t,
            chart,
            cont: dense_coefficients(&y, &step, h),
        };
        emit_samples(&mut traj.samples, &view, &step.y1, config.sample_spacing);
        if let Some((tp, depth)) = pole_passage(&view) {
            // |y'| is about 1 near a pole, so one passage spans about 2 * radius
            // in t and may be found by two neighbouring steps
            let same = traj
                .pole_passages
                .last()
                .is_some_and(|&prev| tp - prev < 10.0 * POLE_PASSAGE_RADIUS);
            if !same {
                traj.pole_passages.push(tp);
                pole_depth = depth;
            } else if depth < pole_depth {
                *traj.pole_passages.last_mut().expect("checked above") = tp;
                pole_depth = depth;
            }
        }
        let flow = observer.observe(&view);

        t = t1;
        y = step.y1;
        k1 = step.k7;

        let fac11 = err.powf(EXPO1);
        let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / GROW_LIMIT, 1.0 / SHRINK_LIMIT);
        let mut h_new = h / fac;
        if last_rejected {
            h_new = h_new.min(h);
        }
        fac_old = err.max(1e-4);
        h = h_new;
        last_rejected = false;

        if flow.is_break() {
            traj.termination = Termination::Stopped { t };
            break;
        }
        if inverted.is_none() && chart == Chart::Direct && y[0].norm() > config.escape_radius {
            traj.termination = Termination::Escaped { t };
            break;
        }
        if switch_chart(&mut chart, &mut y, inverted.is_some()).is_some() {
            k1 = system(chart).rhs(y);
        }
    }
    Ok(traj)
}

/// Moves the state to the other chart if it has left the current one.
/// Returns the converted sample (at an unspecified time) when a switch happened.
fn switch_chart(chart: &mut Chart, y: &mut [Complex64; 2], allowed: bool) -> Option<Sample> {
    if !allowed {
        return None;
    }
    match *chart {
        Chart::Direct if y[0].norm() > CHART_SWITCH_OUT => {
            let inv = y[0].inv();
            *y = [inv, -y[1] * inv * inv];
            *chart = Chart::Inverted;
        }
        Chart::Inverted if y[0].norm() > CHART_SWITCH_IN => {
            let x = y[0].inv();
            *y = [x, -y[1] * x * x];
            *chart = Chart::Direct;
        }
        _ => return None,
    }
    Some(Sample {
        t: 0.0,
        chart: *chart,
        z: y[0],
        w: y[1],
    })
}

/// Time of closest approach to x = infinity within an inverted-chart step,
/// and the |y| reached there, if |y| gets below [`POLE_PASSAGE_RADIUS`].
fn pole_passage(view: &StepView) -> Option<(f64, f64)> {
    if view.chart != Chart::Inverted {
        return None;
    }
    let abs_y = |t: f64| view.sample(t).z.norm();
    let probes = 8;
    let (mut best_t, mut best) = (view.t0, f64::INFINITY);
    for j in 0..=probes {
        let t = view.t0 + view.h * j as f64 / probes as f64;
        let r = abs_y(t);
        if r < best {
            best = r;
            best_t = t;
        }
    }
    if best > 0.25 {
        return None;
    }
    let cell = view.h / probes as f64;
    let (mut a, mut b) = ((best_t - cell).max(view.t0), (best_t + cell).min(view.t1()));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (abs_y(c), abs_y(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = abs_y(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = abs_y(d);
        }
    }
    let t = 0.5 * (a + b);
    let depth = abs_y(t);
    (depth < POLE_PASSAGE_RADIUS).then_some((t, depth))
}

/// Dense samples strictly inside the step plus its endpoint, spaced so
/// consecutive chart positions differ by less than `spacing`.
fn emit_samples(out: &mut Vec<Sample>, view: &StepView, y1: &[Complex64; 2], spacing: f64) {
    let start = view.sample(view.t0).z;
    let mid = view.sample(view.t0 + 0.5 * view.h).z;
    let path = (mid - start).norm() + (y1[0] - mid).norm();
    let pieces = ((path / (0.8 * spacing)).ceil() as usize).clamp(1, MAX_SUBSAMPLES);
    for j in 1..pieces {
        out.push(view.sample(view.t0 + view.h * j as f64 / pieces as f64));
    }
    out.push(Sample {
        t: view.t1(),
        chart: view.chart,
        z: y1[0],
        w: y1[1],
    });
}

struct StepResult {
    y1: [Complex64; 2],
    err: [Complex64; 2],
    k: [[Complex64; 2]; 7],
    k7: [Complex64; 2],
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn combine(y: &[Complex64; 2], h: f64, terms: &[(f64, &[Complex64; 2])]) -> [Complex64; 2] {
    let mut out = *y;
    for &(a, k) in terms {
        out[0] += h * a * k[0];
        out[1] += h * a * k[1];
    }
    out
}

fn dopri_step(sys: &System, y: [Complex64; 2], k1: [Complex64; 2], h: f64) -> StepResult {
    // autonomous system: the stage times c_i never enter
    let k2 = sys.rhs(combine(&y, h, &[(A21, &k1)]));
    let k3 = sys.rhs(combine(&y, h, &[(A31, &k1), (A32, &k2)]));
    let k4 = sys.rhs(combine(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
    let k5 = sys.rhs(combine(
        &y,
        h,
        &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
    ));
    let k6 = sys.rhs(combine(
        &y,
        h,
        &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
    ));
    let y1 = combine(
        &y,
        h,
        &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
    );
    let k7 = sys.rhs(y1);
    let zero = [Complex64::new(0.0, 0.0); 2];
    let err = combine(
        &zero,
        h,
        &[
            (E1, &k1),
            (E3, &k3),
            (E4, &k4),
            (E5, &k5),
            (E6, &k6),
            (E7, &k7),
        ],
    );
    StepResult {
        y1,
        err,
        k: [k1, k2, k3, k4, k5, k6, k7],
        k7,
    }
}

fn error_norm(y0: &[Complex64; 2], y1: &[Complex64; 2], err: &[Complex64; 2], tol: f64) -> f64 {
    let sum: f64 = (0..2)
        .map(|i| {
            let scale = tol + tol * y0[i].norm().max(y1[i].norm());
            (err[i].norm() / scale).powi(2)
        })
        .sum();
    (sum / 2.0).sqrt()
}

fn dense_coefficients(y0: &[Complex64; 2], step: &StepResult, h: f64) -> [[Complex64; 2]; 5] {
    let k = &step.k;
    let mut cont = [[Complex64::new(0.0, 0.0); 2]; 5];
    for i in 0..2 {
        let diff = step.y1[i] - y0[i];
        let bspl = h * k[0][i] - diff;
        cont[0][i] = y0[i];
        cont[1][i] = diff;
        cont[2][i] = bspl;
        cont[3][i] = diff - h * k[6][i] - bspl;
        cont[4][i] = h
            * (D1 * k[0][i]
                + D3 * k[2][i]
                + D4 * k[3][i]
                + D5 * k[4][i]
                + D6 * k[5][i]
                + D7 * k[6][i]);
    }
    cont
}

/// Starting step from the magnitudes of the state and its derivatives.
fn initial_step(sys: &System, y: [Complex64; 2], f0: [Complex64; 2], tol: f64) -> f64 {
    let norm = |v: &[Complex64; 2], base: &[Complex64; 2]| -> f64 {
        let s: f64 = (0..2)
            .map(|i| (v[i].norm() / (tol + tol * base[i].norm())).powi(2))
            .sum();
        (s / 2.0).sqrt()
    };
    let d0 = norm(&y, &y);
    let d1 = norm(&f0, &y);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(1.0);
    let y1 = combine(&y, h0, &[(1.0, &f0)]);
    let f1 = sys.rhs(y1);
    let df = [f1[0] - f0[0], f1[1] - f0[1]];
    let d2 = norm(&df, &y) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quartic::{exact_state, predicted_period, WindingPair};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn harmonic() -> PolynomialPotential {
        PolynomialPotential::from_real(&[0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn harmonic_oscillator_is_sine() {
        let traj = integrate(
            &harmonic(),
            c(1.0, 0.0),
            c(0.0, 0.0),
            &IntegratorConfig::new(20.0, 1e-10),
        )
        .unwrap();
        assert_eq!(traj.termination, Termination::Completed);
        assert_eq!(traj.last().unwrap().t, 20.0);
        for s in &traj.samples {
            assert!((s.x() - c(s.t.sin(), 0.0)).norm() < 1e-8, "t = {}", s.t);
            assert!((s.v() - c(s.t.cos(), 0.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn samples_are_dense_and_increasing() {
        let traj = integrate(
            &PolynomialPotential::double_well(),
            c(-1.0, -1.0),
            c(0.0, 0.0),
            &IntegratorConfig::new(30.0, 1e-10),
        )
        .unwrap();
        for pair in traj.samples.windows(2) {
            assert!(pair[1].t > pair[0].t);
            if pair[0].chart == pair[1].chart {
                assert!((pair[1].z - pair[0].z).norm() < DEFAULT_SAMPLE_SPACING);
            }
        }
    }

    #[test]
    fn analytic_harmonic_samples_have_no_drift() {
        let traj = Trajectory::from_states(
            &harmonic(),
            c(1.0, 0.0),
            (0..200).map(|i| {
                let t = 0.1 * i as f64;
                (t, c(t.sin(), 0.0), c(t.cos(), 0.0))
            }),
        );
        assert!(energy_drift(&traj) < 1e-12);
    }

    #[test]
    fn drift_is_small_at_tight_tolerance() {
        let v = PolynomialPotential::double_well();
        let fine = integrate(
            &v,
            c(-1.0, 0.0),
            c(0.5, 0.0),
            &IntegratorConfig::new(100.0, 1e-10),
        )
        .unwrap();
        let coarse = integrate(
            &v,
            c(-1.0, 0.0),
            c(0.5, 0.0),
            &IntegratorConfig::new(100.0, 1e-2),
        )
        .unwrap();
        assert!(fine.energy_drift() < 1e-8, "{}", fine.energy_drift());
        assert!(coarse.energy_drift() > fine.energy_drift());
    }

    #[test]
    fn passes_through_infinity() {
        // the orbit from the origin on the (3,1) curve reaches a pole of sn at T/2
        let e = c(0.672_543_108_910_498, 1.0);
        let period = predicted_period(e, WindingPair::new(3, 1).unwrap()).unwrap();
        let traj = integrate(
            &PolynomialPotential::double_well(),
            e,
            c(0.0, 0.0),
            &IntegratorConfig::new(period, 1e-12),
        )
        .unwrap();
        assert!(traj.samples.iter().any(|s| s.chart == Chart::Inverted));
        assert!(traj.max_abs_position() > 100.0);
        assert_eq!(traj.pole_passages.len(), 1, "{:?}", traj.pole_passages);
        assert!((traj.pole_passages[0] - 0.5 * period).abs() < 1e-6);
        let end = traj.last().unwrap();
        assert_eq!(end.chart, Chart::Direct);
        let (_, v0) = exact_state(e, 0.0).unwrap();
        assert!(end.x().norm() + (end.v() - v0).norm() < 1e-6);
    }

    #[test]
    fn matches_exact_quartic_orbit() {
        let e = c(0.672_543_108_910_498, 1.0);
        let period = predicted_period(e, WindingPair::new(3, 1).unwrap()).unwrap();
        let traj = integrate(
            &PolynomialPotential::double_well(),
            e,
            c(0.0, 0.0),
            &IntegratorConfig::new(period, 1e-12),
        )
        .unwrap();
        let mut compared = 0;
        for s in traj.samples.iter().step_by(7) {
            let Ok((x, _)) = exact_state(e, s.t) else {
                continue;
            };
            // compare in whichever chart the sample lives in
            let diff = match s.chart {
                Chart::Direct => (s.z - x).norm(),
                Chart::Inverted => (s.z - x.inv()).norm(),
            };
            assert!(diff < 1e-6, "t = {}: {diff}", s.t);
            compared += 1;
        }
        assert!(compared > 50);
    }

    #[test]
    fn generic_orbit_has_no_pole_passage() {
        let e = c(0.672_543_108_910_498, 1.0);
        let traj = integrate(
            &PolynomialPotential::double_well(),
            e,
            c(0.2, 0.1),
            &IntegratorConfig::new(20.0, 1e-10),
        )
        .unwrap();
        assert!(traj.samples.iter().any(|s| s.chart == Chart::Inverted));
        assert!(traj.pole_passages.is_empty());
    }

    #[test]
    fn escape_for_high_degree() {
        let v = PolynomialPotential::from_real(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]).unwrap();
        let traj = integrate(
            &v,
            c(1.0, 0.0),
            c(0.0, 0.0),
            &IntegratorConfig::new(50.0, 1e-9),
        )
        .unwrap();
        assert!(matches!(traj.termination, Termination::Escaped { .. }));
    }

    #[test]
    fn negative_branch_reverses_time() {
        let v = PolynomialPotential::double_well();
        let e = c(-1.0, -1.0);
        let cfg = IntegratorConfig::new(2.0, 1e-11);
        let plus = integrate(&v, e, c(0.3, 0.1), &cfg).unwrap();
        let minus = integrate(&v, e, c(0.3, 0.1), &cfg.with_branch(Branch::Minus)).unwrap();
        assert_eq!(minus.samples[0].w, -plus.samples[0].w,);
        assert!((plus.last().unwrap().x() - minus.last().unwrap().x()).norm() > 1e-3);
    }

    #[test]
    fn observer_can_stop_early() {
        let v = PolynomialPotential::double_well();
        let mut seen = 0;
        let mut stop_after_ten = |_: &StepView| {
            seen += 1;
            if seen == 10 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        };
        let traj = integrate_state(
            &v,
            c(-1.0, 0.0),
            c(0.5, 0.0),
            initial_velocity(&v, c(-1.0, 0.0), c(0.5, 0.0), Branch::Plus),
            &IntegratorConfig::new(100.0, 1e-10),
            &mut stop_after_ten,
        )
        .unwrap();
        assert!(matches!(traj.termination, Termination::Stopped { t } if t < 100.0));
    }

    #[test]
    fn rejects_bad_config() {
        let v = harmonic();
        assert!(integrate(
            &v,
            c(1.0, 0.0),
            c(0.0, 0.0),
            &IntegratorConfig::new(-1.0, 1e-8)
        )
        .is_err());
        assert!(integrate(
            &v,
            c(1.0, 0.0),
            c(0.0, 0.0),
            &IntegratorConfig::new(1.0, 0.0)
        )
        .is_err());
    }

    #[test]
    fn branch_parsing() {
        assert_eq!("+".parse::<Branch>().unwrap(), Branch::Plus);
        assert_eq!("-".parse::<Branch>().unwrap(), Branch::Minus);
        assert!("x".parse::<Branch>().is_err());
    }

    #[test]
    fn sphere_projection_is_chart_independent() {
        let x = c(3.0, -1.5);
        let direct = Sample::direct(0.0, x, c(1.0, 0.0));
        let inverted = Sample {
            t: 0.0,
            chart: Chart::Inverted,
            z: x.inv(),
            w: c(0.0, 0.0),
        };
        let (a, b) = (direct.on_sphere(), inverted.on_sphere());
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-15);
        }
        assert!(direct.re_offset(1.0) > 0.0 && inverted.re_offset(1.0) > 0.0);
        assert!(direct.re_offset(4.0) < 0.0 && inverted.re_offset(4.0) < 0.0);
    }
}
