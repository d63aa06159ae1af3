use std::f64::consts::PI;

use grazing_core::builtins::{impact_cycle, spiral_impact, spiral_period};
use grazing_core::continuation::{
    analyze_cycle, bifurcation_scan, continuation_jacobian, find_periodic, generating_seed, orbits_at, poincare_residual,
    NewtonOptions, ScanOptions, Seed,
};
use grazing_core::export::{fmt_f64, write_bifurcation_csv, write_events_csv, write_trajectory_csv};
use grazing_core::floquet::DEFAULT_UNIT_TOL;
use grazing_core::integrate::{simulate, SimOptions};
use grazing_core::linearize::LinOptions;
use grazing_core::system::StateVec;
use grazing_core::Error;

fn v2(a: f64, b: f64) -> StateVec {
    StateVec::from_vec(vec![a, b])
}

#[test]
fn residual_vanishes_on_known_cycles() {
    let opts = SimOptions::default();
    let r = poincare_residual(&spiral_impact(), spiral_period(), &v2(0.0, 1.0), &opts).unwrap();
    assert!(r.value.norm() < 1e-8);
    assert_eq!((r.events, r.grazing), (2, 1));

    let r = poincare_residual(&impact_cycle().at(0.0), 2.0 * PI, &v2(2.0, 0.0), &opts).unwrap();
    assert!(r.value.norm() < 1e-8);
    assert_eq!((r.events, r.grazing), (1, 1));

    // half a turn of the circle moves (2, 0) to the wall
    let r = poincare_residual(&impact_cycle().at(0.0), PI, &v2(2.0, 0.0), &opts).unwrap();
    assert!((r.value - v2(-2.0, 0.0)).norm() < 1e-6);
}

#[test]
fn residual_rejects_bad_period() {
    let err = poincare_residual(&spiral_impact(), -1.0, &v2(0.0, 1.0), &SimOptions::default()).unwrap_err();
    assert!(matches!(err, Error::ResidualUnavailable(_)));
}

#[test]
fn newton_finds_both_cycles_below_the_grazing_value() {
    let sys = impact_cycle().at(-0.2);
    let opts = NewtonOptions::default();
    let smooth = Seed { label: "inner".into(), period: 6.3, zeta: v2(1.81, 0.0), fixed_index: 1 };
    let o = find_periodic(&sys, -0.2, &smooth, &opts).unwrap();
    assert_eq!(o.events_per_period, 0);
    assert!((o.zeta[0] - 1.8).abs() < 1e-6);
    assert!((o.period - 2.0 * PI).abs() < 1e-6);
    assert_eq!(o.zeta[1], 0.0);
    assert!(o.residual_norm <= opts.tol);

    let impacting = Seed { label: "outer".into(), period: 6.2086, zeta: v2(2.0007, 0.0), fixed_index: 1 };
    let o = find_periodic(&sys, -0.2, &impacting, &opts).unwrap();
    assert_eq!(o.events_per_period, 1);
    assert!((o.zeta[0] - 2.000697).abs() < 1e-5);
    assert!((o.period - 6.208573).abs() < 1e-5);

    // the orbit repeats over several periods
    let tr = simulate(&sys, &o.zeta, 0.0, 3.0 * o.period, &SimOptions::default()).unwrap();
    assert_eq!(tr.events.len(), 3);
    assert!((tr.final_state() - &o.zeta).norm() < 1e-6);
    for k in 1..3 {
        assert!((tr.state_after(k as f64 * o.period) - &o.zeta).norm() < 1e-6);
    }
}

#[test]
fn newton_at_a_solution_takes_no_steps() {
    let sys = impact_cycle().at(0.0);
    let seed = Seed { label: "g".into(), period: 2.0 * PI, zeta: v2(2.0, 0.0), fixed_index: 1 };
    let o = find_periodic(&sys, 0.0, &seed, &NewtonOptions::default()).unwrap();
    assert_eq!(o.iterations, 0);
    assert_eq!(o.events_per_period, 1);
}

#[test]
fn continuation_jacobian_on_the_smooth_cycle() {
    // ∂S/∂T = f(ζ) and ∂S/∂ζ1 = (U − E)e1; the smooth cycle at μ = -0.2 is the
    // circle of radius 0.8 about (1, 0), so f(1.8, 0) = (0, -0.8)
    let sys = impact_cycle().at(-0.2);
    let zeta = v2(1.8, 0.0);
    let opts = NewtonOptions::default();
    let cj = continuation_jacobian(&sys, 2.0 * PI, &zeta, 1, 0, &opts).unwrap();
    assert!((cj.matrix[(0, 0)]).abs() < 1e-5);
    assert!((cj.matrix[(1, 0)] + 0.8).abs() < 1e-5);
    assert!(cj.one_sided.is_empty());

    let rep = analyze_cycle(&sys, &zeta, 2.0 * PI, 1, &LinOptions::default(), DEFAULT_UNIT_TOL).unwrap();
    assert_eq!(rep.det_a6_branches.len(), 1);
    assert!((rep.det_a6_branches[0] - cj.det).abs() < 1e-5 * cj.det.abs().max(1e-3), "{} vs {}", rep.det_a6_branches[0], cj.det);
}

#[test]
fn continuation_jacobian_requires_the_locked_event_count() {
    let sys = impact_cycle().at(-0.2);
    let err = continuation_jacobian(&sys, 2.0 * PI, &v2(1.8, 0.0), 1, 1, &NewtonOptions::default()).unwrap_err();
    assert!(matches!(err, Error::BranchCrossing { .. }));
}

#[test]
fn generating_seed_matches_the_known_cycle() {
    let sys = spiral_impact();
    let seed = generating_seed(&sys, &sys.meta.cycles[0], &SimOptions::default()).unwrap();
    assert!((seed.period - spiral_period()).abs() < 1e-12);
    // the seed is moved off the surfaces but stays on the cycle
    for d in &sys.discontinuities {
        assert!(d.patch.phi_at(&seed.zeta).abs() > 0.1);
    }
    let r = poincare_residual(&sys, seed.period, &seed.zeta, &SimOptions::default()).unwrap();
    assert!(r.value.norm() < 1e-8);
    assert_eq!(r.events, 2);
}

#[test]
fn zero_parameter_reproduces_the_generating_cycle_only() {
    let fam = impact_cycle();
    let cell = orbits_at(&fam, 0.0, &ScanOptions::default()).unwrap();
    assert_eq!(cell.orbits.len(), 1, "{:?}", cell.orbits.iter().map(|o| (&o.zeta, o.period)).collect::<Vec<_>>());
    let o = &cell.orbits[0];
    assert!((&o.zeta - v2(2.0, 0.0)).norm() < 1e-6);
    assert!((o.period - 2.0 * PI).abs() < 1e-6);
}

#[test]
fn scan_rejects_non_finite_parameters() {
    let err = bifurcation_scan(&impact_cycle(), &[0.0, f64::NAN], &ScanOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Invalid(_)));
}

#[test]
fn csv_headers_and_round_trip() {
    let sys = spiral_impact();
    let tr = simulate(&sys, &v2(0.0, 1.0), 0.0, spiral_period(), &SimOptions::default()).unwrap();

    let mut buf = Vec::new();
    write_trajectory_csv(&mut buf, &tr).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,arc_index"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[1].parse::<f64>().unwrap(), tr.x0[0]);
    assert_eq!(first[2].parse::<f64>().unwrap(), tr.x0[1]);

    let mut buf = Vec::new();
    write_events_csv(&mut buf, &tr).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "theta,type,axial,transversality,pre_1,pre_2,post_1,post_2,zero_coords");
    assert_eq!(lines.len(), 1 + tr.events.len());
    let row: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(row[1], "gamma");
    assert_eq!(row[0].parse::<f64>().unwrap(), tr.events[0].theta);

    let mut buf = Vec::new();
    write_bifurcation_csv(&mut buf, &[], 2).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().trim_end(), "mu,orbit_id,T,zeta_1,zeta_2,events_per_period,det_A6,stable");
}

#[test]
fn float_format_round_trips_exactly() {
    for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, f64::MAX, spiral_period()] {
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }
}
