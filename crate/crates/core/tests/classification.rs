use complex_orbits::classify::{detect_periodicity, find_separatrix, ClassifyConfig, Verdict};
use complex_orbits::potential::{parse_potential, PolynomialPotential};
use complex_orbits::quartic::{predicted_period, WindingPair};
use complex_orbits::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn real_energy_orbits_close() {
    let v = PolynomialPotential::double_well();
    for x0 in [c(0.0, 0.0), c(0.5, 0.0), c(1.2, 0.3)] {
        let cls = detect_periodicity(&v, c(-1.0, 0.0), x0, &ClassifyConfig::new(60.0));
        assert_eq!(cls.verdict, Verdict::Periodic, "{x0}: {cls:?}");
    }
}

#[test]
fn generic_complex_energy_is_open() {
    let v = PolynomialPotential::double_well();
    let cls = detect_periodicity(&v, c(-1.0, -1.0), c(0.0, 0.0), &ClassifyConfig::new(50.0));
    assert_eq!(cls.verdict, Verdict::Open, "{cls:?}");
    assert_eq!(cls.horizon, 50.0);
    assert!(cls.closure_defect > cls.closure_tol);
}

#[test]
fn every_start_closes_on_an_eigencurve() {
    let v = PolynomialPotential::double_well();
    let e = c(-0.852_958_824_6, 1.0);
    let w = WindingPair::new(8, 1).unwrap();
    let period = predicted_period(e, w).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let x0 = c(rng.gen_range(-2.0..2.0), rng.gen_range(-0.5..0.5));
        let cls = detect_periodicity(&v, e, x0, &ClassifyConfig::new(20.0 * period));
        assert_eq!(cls.verdict, Verdict::Periodic, "{x0}: {cls:?}");
        // the orbit may close after a divisor of the lattice period
        let t = cls.period.unwrap();
        let ratio = period / t;
        assert!(
            (ratio - ratio.round()).abs() < 1e-4,
            "{x0}: {t} vs {period}"
        );
        assert_eq!(cls.winding.map(|w| w.ratio()), Some(8.0), "{x0}: {cls:?}");
    }
}

#[test]
fn octic_bracket_straddles_the_boundary() {
    let v = parse_potential("(x^2 - 1)^2 (x^2 - 4)^2").unwrap();
    let e = c(16.489, 10.0);
    let cfg = ClassifyConfig::new(40.0).closure_tol(1e-3);
    let sep = find_separatrix(&v, e, c(0.3, 0.0), c(1.0, 0.0), 1e-3, &cfg).unwrap();
    assert!((sep.outside - sep.inside).norm() < 1e-3);
    assert_eq!(
        detect_periodicity(&v, e, sep.inside, &cfg).verdict,
        Verdict::Periodic
    );
    assert_eq!(
        detect_periodicity(&v, e, sep.outside, &cfg).verdict,
        Verdict::Open
    );
    // independent integration places the orbit through infinity at x0 = 0.6950
    assert!((sep.point.re - 0.695).abs() < 2e-3, "{}", sep.point);
    assert_eq!(sep.history.len(), sep.iterations + 2);
}

#[test]
fn separatrix_checks_its_endpoints() {
    let v = parse_potential("(x^2 - 1)^2 (x^2 - 4)^2").unwrap();
    let e = c(16.489, 10.0);
    let cfg = ClassifyConfig::new(40.0).closure_tol(1e-3);
    assert!(find_separatrix(&v, e, c(1.0, 0.0), c(0.3, 0.0), 1e-3, &cfg).is_err());
    assert!(find_separatrix(&v, e, c(0.3, 0.0), c(1.0, 0.0), 0.0, &cfg).is_err());
}
