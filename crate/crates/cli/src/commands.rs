use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, Context};
use complex_orbits::classify::{detect_periodicity, find_separatrix, ClassifyConfig};
use complex_orbits::dynamics::{initial_velocity, integrate, Branch, IntegratorConfig};
use complex_orbits::eigencurve::{self, Eigencurve, TraceConfig};
use complex_orbits::potential::{parse_potential, PolynomialPotential};
use complex_orbits::quartic::{exact_state, periodicity_residual, WindingPair};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crate::output::{self, RunManifest};
use crate::{
    ClassifyArgs, ClassifyOptions, CliError, SeparatrixArgs, SystemArgs, TraceArgs, TrajectoryArgs,
};

type CmdResult = Result<(), CliError>;

fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Usage(e.into())
}

fn numerical(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Numerical(e.into())
}

fn load_potential(system: &SystemArgs) -> Result<PolynomialPotential, CliError> {
    parse_potential(&system.potential)
        .with_context(|| format!("cannot parse potential {:?}", system.potential))
        .map_err(usage)
}

fn positive(name: &str, value: f64) -> Result<(), CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(usage(anyhow!(
            "--{name} must be positive and finite, got {value}"
        )))
    }
}

/// Runs `f` over `items` on up to `jobs` threads, keeping input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = match jobs {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        j => j,
    }
    .min(items.len().max(1));
    if jobs <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(|| part.iter().map(&f).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[derive(Serialize)]
struct TrajectoryParams<'a> {
    potential: &'a str,
    energy: Complex64,
    x0: Complex64,
    tmax: f64,
    tol: f64,
    exact: bool,
    dt: f64,
    spacing: f64,
    branch: Branch,
}

pub fn trajectory(args: TrajectoryArgs) -> CmdResult {
    let started = Instant::now();
    let v = load_potential(&args.system)?;
    positive("tmax", args.tmax)?;
    positive("tol", args.tol)?;
    positive("dt", args.dt)?;
    positive("spacing", args.spacing)?;
    let energy = args.system.energy;

    let mut manifest = RunManifest::new(
        "trajectory",
        TrajectoryParams {
            potential: &args.system.potential,
            energy,
            x0: args.x0,
            tmax: args.tmax,
            tol: args.tol,
            exact: args.exact,
            dt: args.dt,
            spacing: args.spacing,
            branch: args.system.branch,
        },
    );

    if args.exact {
        if v != PolynomialPotential::double_well() {
            return Err(usage(anyhow!("--exact needs the potential x^4 - 5x^2")));
        }
        if args.x0 != Complex64::new(0.0, 0.0) {
            return Err(usage(anyhow!("--exact starts at x0 = 0")));
        }
        // the closed form starts with some velocity +-sqrt(E); run it backwards
        // in time when the requested branch has the other sign
        let wanted = initial_velocity(&v, energy, args.x0, args.system.branch);
        let (_, v_exact) = exact_state(energy, 0.0).map_err(numerical)?;
        let dir = if (v_exact - wanted).norm() <= (v_exact + wanted).norm() {
            1.0
        } else {
            -1.0
        };

        let steps = (args.tmax / args.dt).floor() as usize;
        let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * args.dt).collect();
        if times
            .last()
            .is_some_and(|&t| args.tmax - t > 1e-12 * args.tmax)
        {
            times.push(args.tmax);
        }
        let mut rows = Vec::with_capacity(times.len());
        let mut at_poles = 0;
        for t in times {
            match exact_state(energy, dir * t) {
                Ok((x, vel)) => rows.push((t, x, dir * vel)),
                Err(complex_orbits::quartic::QuarticError::Elliptic(_)) => at_poles += 1,
                Err(e) => return Err(numerical(e)),
            }
        }
        output::write_trajectory_csv(&args.out, rows)?;
        manifest.status = Some(json!({ "rows_skipped_at_poles": at_poles }));
    } else {
        let mut cfg = IntegratorConfig::new(args.tmax, args.tol).with_branch(args.system.branch);
        cfg.sample_spacing = args.spacing;
        let traj = integrate(&v, energy, args.x0, &cfg).map_err(numerical)?;
        output::write_trajectory_csv(&args.out, traj.samples.iter().map(|s| (s.t, s.x(), s.v())))?;
        manifest.status = Some(json!({
            "termination": traj.termination,
            "samples": traj.len(),
            "energy_drift": traj.energy_drift(),
            "pole_passages": traj.pole_passages,
        }));
    }
    manifest.outputs.push(args.out.clone());
    manifest.finish(
        &output::sibling(&args.out, ".manifest.json"),
        started.elapsed(),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct TraceParams {
    n: i64,
    m: i64,
    max_radius: f64,
    step: f64,
    jobs: usize,
}

fn curve_rows(curve: &Eigencurve) -> Vec<(Complex64, f64)> {
    curve
        .points
        .iter()
        .map(|&e| {
            (
                e,
                periodicity_residual(e, curve.winding).unwrap_or(f64::NAN),
            )
        })
        .collect()
}

pub fn trace_curve(args: TraceArgs) -> CmdResult {
    let started = Instant::now();
    let w = WindingPair::new(args.n, args.m).map_err(usage)?;
    positive("max-radius", args.max_radius)?;
    positive("step", args.step)?;
    let upper = TraceConfig::new(args.max_radius, args.step);
    let configs = [upper, upper.lower()];
    let traced = parallel_map(&configs, args.jobs.min(2), |cfg| {
        eigencurve::trace_curve(w, *cfg).map_err(numerical)
    });
    let [up, down] = <[_; 2]>::try_from(traced).map_err(|_| anyhow!("expected two branches"))?;
    let (up, down) = (up?, down?);

    let conj_path = output::sibling(&args.out, "_conj.csv");
    output::write_curve_csv(&args.out, curve_rows(&up))?;
    output::write_curve_csv(&conj_path, curve_rows(&down))?;

    let mut manifest = RunManifest::new(
        "trace-curve",
        TraceParams {
            n: args.n,
            m: args.m,
            max_radius: args.max_radius,
            step: args.step,
            jobs: args.jobs,
        },
    );
    manifest.outputs = vec![args.out.clone(), conj_path];
    manifest.status = Some(json!({
        "winding": w,
        "upper": { "points": up.points.len(), "status": up.status },
        "lower": { "points": down.points.len(), "status": down.status },
    }));
    manifest.finish(
        &output::sibling(&args.out, ".manifest.json"),
        started.elapsed(),
    )?;
    Ok(())
}

fn classify_config(options: &ClassifyOptions, branch: Branch) -> Result<ClassifyConfig, CliError> {
    positive("horizon", options.horizon)?;
    positive("closure-tol", options.closure_tol)?;
    positive("tol", options.tol)?;
    let mut cfg = ClassifyConfig::new(options.horizon)
        .closure_tol(options.closure_tol)
        .tol(options.tol);
    cfg.branch = branch;
    Ok(cfg)
}

#[derive(Serialize)]
struct ClassifyParams<'a> {
    potential: &'a str,
    energy: Complex64,
    x0: &'a [Complex64],
    horizon: f64,
    closure_tol: f64,
    tol: f64,
    branch: Branch,
    jobs: usize,
}

pub fn classify(args: ClassifyArgs) -> CmdResult {
    let started = Instant::now();
    let v = load_potential(&args.system)?;
    let cfg = classify_config(&args.options, args.system.branch)?;
    let energy = args.system.energy;
    let records = parallel_map(&args.x0, args.jobs, |&x0| {
        detect_periodicity(&v, energy, x0, &cfg)
    });
    let params = ClassifyParams {
        potential: &args.system.potential,
        energy,
        x0: &args.x0,
        horizon: args.options.horizon,
        closure_tol: args.options.closure_tol,
        tol: args.options.tol,
        branch: args.system.branch,
        jobs: args.jobs,
    };
    emit("classify", params, &records, args.out, started)
}

#[derive(Serialize)]
struct SeparatrixParams<'a> {
    potential: &'a str,
    energy: Complex64,
    from: Complex64,
    to: Complex64,
    bisect_tol: f64,
    horizon: f64,
    closure_tol: f64,
    tol: f64,
    branch: Branch,
}

pub fn separatrix(args: SeparatrixArgs) -> CmdResult {
    let started = Instant::now();
    let v = load_potential(&args.system)?;
    let cfg = classify_config(&args.options, args.system.branch)?;
    positive("bisect-tol", args.bisect_tol)?;
    let energy = args.system.energy;
    let found = find_separatrix(&v, energy, args.from, args.to, args.bisect_tol, &cfg)
        .map_err(numerical)?;
    let params = SeparatrixParams {
        potential: &args.system.potential,
        energy,
        from: args.from,
        to: args.to,
        bisect_tol: args.bisect_tol,
        horizon: args.options.horizon,
        closure_tol: args.options.closure_tol,
        tol: args.options.tol,
        branch: args.system.branch,
    };
    emit("separatrix", params, &found, args.out, started)
}

/// Prints `value` as JSON, or writes it and a manifest when `out` is given.
fn emit<P: Serialize, T: Serialize>(
    command: &'static str,
    params: P,
    value: &T,
    out: Option<PathBuf>,
    started: Instant,
) -> CmdResult {
    match out {
        None => {
            let text = serde_json::to_string_pretty(value).map_err(numerical)?;
            println!("{text}");
        }
        Some(path) => {
            output::write_json(&path, value)?;
            let mut manifest = RunManifest::new(command, params);
            manifest.outputs.push(path.clone());
            manifest.finish(&output::sibling(&path, ".manifest.json"), started.elapsed())?;
        }
    }
    Ok(())
}
