use complex_orbits::eigencurve::{refine_energy, trace_curve, Slice, TraceConfig, TraceStatus};
use complex_orbits::quartic::{exact_state, predicted_period, WindingPair};
use complex_orbits::Complex64;

fn w(n: i64, m: i64) -> WindingPair {
    WindingPair::new(n, m).unwrap()
}

#[test]
fn curves_are_ordered_anticlockwise_at_unit_radius() {
    let order = [
        (5, 2),
        (3, 1),
        (4, 1),
        (5, 1),
        (7, 1),
        (10, 1),
        (20, 1),
        (40, 1),
    ];
    let mut args = Vec::new();
    for (n, m) in order {
        let curve = trace_curve(w(n, m), TraceConfig::new(1.2, 0.02)).unwrap();
        let p = curve
            .at_radius(1.0)
            .unwrap_or_else(|| panic!("({n},{m}) never reaches |E| = 1: {:?}", curve.status));
        args.push(p.arg());
    }
    for pair in args.windows(2) {
        assert!(pair[0] < pair[1], "{args:?}");
    }
}

#[test]
fn traced_points_close_the_exact_orbit() {
    for (n, m) in [(3, 1), (5, 2), (4, 1)] {
        let curve = trace_curve(w(n, m), TraceConfig::new(2.5, 0.05)).unwrap();
        assert_eq!(curve.status, TraceStatus::Complete);
        let len = curve.points.len();
        for idx in [len / 5, 2 * len / 5, 3 * len / 5, 4 * len / 5, len - 1] {
            let e = curve.points[idx];
            let t = predicted_period(e, curve.winding).unwrap();
            let (x0, v0) = exact_state(e, 0.0).unwrap();
            let (x, v) = exact_state(e, t).unwrap();
            let defect = (x - x0).norm() + (v - v0).norm();
            assert!(defect < 1e-4, "({n},{m}) at {e}: defect {defect}");
        }
    }
}

#[test]
fn refine_recovers_eight_one_energy() {
    let e = refine_energy(Complex64::new(-0.8, 1.0), w(8, 1), Slice::FixedIm(1.0)).unwrap();
    assert!((e.re + 0.852_958_824_6).abs() < 1e-8, "{e}");
}
