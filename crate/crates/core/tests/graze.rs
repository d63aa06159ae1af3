use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use grazing_core::builtins::{builtin_system, impact_cycle, nonaxial_circle, spiral_impact, BUILTIN_NAMES};
use grazing_core::conditions::{validate_conditions, ConditionStatus, SamplePlan};
use grazing_core::continuation::{find_periodic, Seed, NewtonOptions};
use grazing_core::graze::{axial_flag, classify_point, find_grazing_on_orbit, Side};
use grazing_core::integrate::{simulate, SimOptions};
use grazing_core::system::{fd_jacobian, sample_domain, Discontinuity, JumpMap, Matrix, StateVec, SurfacePatch};
use grazing_core::{Error, PointType};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn v2(a: f64, b: f64) -> StateVec {
    StateVec::from_vec(vec![a, b])
}

#[test]
fn spiral_points_are_classified() {
    let sys = spiral_impact();
    let opts = SimOptions::default();
    let alpha = classify_point(&sys, &v2(0.0, -(0.0005 * PI).exp()), Side::Forward, &opts).unwrap();
    assert_eq!(alpha.1, PointType::Alpha);

    // the builtin places the line at the exact tangency, 2.5e-7 relative beyond exp(0.00025π)
    let b = sys.meta.grazing_points[0][0];
    assert!((b / (0.00025 * PI).exp() - 1.0).abs() < 1e-6);
    let gamma = classify_point(&sys, &v2(b, 0.0), Side::Forward, &opts).unwrap();
    assert_eq!(gamma.1, PointType::Gamma);

    let err = classify_point(&sys, &v2(0.5, 0.5), Side::Forward, &opts).unwrap_err();
    assert!(matches!(err, Error::NotOnSurface { .. }));
}

#[test]
fn nonaxial_interior_point_is_alpha() {
    let sys = nonaxial_circle();
    let (_, t) = classify_point(&sys, &v2(1.0, 2f64.sqrt() - 1.0), Side::Forward, &SimOptions::default()).unwrap();
    assert_eq!(t, PointType::Alpha);
}

#[test]
fn classification_ignores_positive_rescaling_of_phi() {
    let opts = SimOptions::default();
    for scale in [0.01, 3.0, 250.0] {
        let mut sys = spiral_impact();
        for d in &mut sys.discontinuities {
            let phi = d.patch.phi.clone();
            let grad = d.patch.grad_phi.clone();
            d.patch.phi = Arc::new(move |x| scale * phi(x));
            d.patch.grad_phi = Arc::new(move |x| grad(x) * scale);
        }
        let b = sys.meta.grazing_points[0][0];
        let base = spiral_impact();
        for x in [v2(0.0, -1.0), v2(b, 0.0), v2(b, 0.4), v2(0.0, 0.0)] {
            let a = classify_point(&base, &x, Side::Forward, &opts).unwrap().1;
            let s = classify_point(&sys, &x, Side::Forward, &opts).unwrap().1;
            assert_eq!(a, s, "scale {scale} at {x:?}");
        }
    }
}

#[test]
fn axial_flags() {
    let opts = SimOptions::default();
    let sp = spiral_impact();
    let info = axial_flag(&sp, &sp.meta.grazing_points[0], &opts).unwrap();
    assert!(info.axial);
    assert_eq!(info.image_zero_coords, vec![2]);

    let na = nonaxial_circle();
    let info = axial_flag(&na, &v2(FRAC_1_SQRT_2, FRAC_1_SQRT_2), &opts).unwrap();
    assert!(!info.axial);
    assert!(info.surface_zero_coords.is_empty());
}

#[test]
fn grazing_reports_along_orbits() {
    let opts = SimOptions::default();
    let sp = spiral_impact();
    let t = PI / (1.0 - 0.0005f64.powi(2)).sqrt();
    let tr = simulate(&sp, &v2(0.0, 1.0), 0.0, 3.0 * t, &opts).unwrap();
    let reports = find_grazing_on_orbit(&tr);
    assert_eq!(reports.len(), 3);
    for r in &reports {
        assert!((r.point[0] - (0.00025 * PI).exp()).abs() < 1e-6 && r.point[1].abs() < 1e-8);
        assert!(r.axial);
    }

    let ic = impact_cycle();
    let tr = simulate(&ic.at(0.0), &v2(2.0, 0.0), 0.0, 2.0 * PI, &opts).unwrap();
    let reports = find_grazing_on_orbit(&tr);
    assert_eq!(reports.len(), 1);
    assert!(StateVec::from_vec(reports[0].point.clone()).norm() < 1e-6);

    // the impacting cycle at μ = -0.2 hits the wall transversally
    let sys = ic.at(-0.2);
    let seed = Seed { label: "impacting".into(), period: 6.2086, zeta: v2(2.0007, 0.0), fixed_index: 1 };
    let orbit = find_periodic(&sys, -0.2, &seed, &NewtonOptions::default()).unwrap();
    assert!((orbit.zeta[0] - 2.000697).abs() < 1e-5 && (orbit.period - 6.208573).abs() < 1e-5);
    assert_eq!(orbit.events_per_period, 1);
    let tr = simulate(&sys, &orbit.zeta, 0.0, orbit.period, &opts).unwrap();
    assert!(find_grazing_on_orbit(&tr).is_empty());
}

#[test]
fn builtin_jacobians_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for name in BUILTIN_NAMES {
        let model = builtin_system(name).unwrap();
        for mu in [0.0, -0.05] {
            let sys = model.at(mu);
            for _ in 0..100 {
                let x = sample_domain(&sys.domain, &mut rng);
                let fd = fd_jacobian(&|y| sys.field(y), &x);
                let an = sys.jacobian(&x);
                let rel = (&fd - &an).norm() / an.norm().max(1.0);
                assert!(rel < 1e-6, "{name} at mu {mu}: {rel:e}");
                for d in &sys.discontinuities {
                    let fd = fd_jacobian(&|y| d.jump.apply(y), &x);
                    let an = d.jump.jacobian(&x);
                    assert!((&fd - &an).norm() / an.norm().max(1.0) < 1e-6, "{name} jump Jacobian");
                }
            }
        }
    }
}

#[test]
fn known_grazing_points_are_tangent() {
    for name in BUILTIN_NAMES {
        let sys = builtin_system(name).unwrap().base().clone();
        for x in &sys.meta.grazing_points {
            let ip = sys
                .discontinuities
                .iter()
                .filter(|d| d.patch.phi_at(x).abs() < 1e-9)
                .map(|d| d.patch.grad_at(x).dot(&sys.field(x)).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(ip < 1e-10, "{name}: {ip:e}");
        }
    }
}

#[test]
fn family_at_zero_is_the_base() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for name in ["perturbed-impact", "impact-cycle"] {
        let model = builtin_system(name).unwrap();
        let fam = model.family();
        let at0 = fam.at(0.0);
        for _ in 0..50 {
            let x = sample_domain(&at0.domain, &mut rng);
            assert!((at0.field(&x) - fam.base.field(&x)).norm() <= 1e-12);
            for (a, b) in at0.discontinuities.iter().zip(&fam.base.discontinuities) {
                assert!((a.jump.apply(&x) - b.jump.apply(&x)).norm() <= 1e-12);
                assert!((a.patch.phi_at(&x) - b.patch.phi_at(&x)).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn spiral_conditions_pass_on_samples() {
    let sys = spiral_impact();
    let rep = validate_conditions(&sys, &SamplePlan::default(), &SimOptions::default()).unwrap();
    for id in ["C1", "C2", "C4", "C5", "C6", "C7", "C8"] {
        assert!(matches!(rep.get(id), Some(ConditionStatus::PassOnSamples { .. })), "{id}: {:?}", rep.get(id));
    }
    assert!(matches!(rep.get("C9"), Some(ConditionStatus::NotCheckable { .. })));
}

#[test]
fn nonaxial_jump_is_singular() {
    let rep = validate_conditions(&nonaxial_circle(), &SamplePlan::default(), &SimOptions::default()).unwrap();
    assert!(rep.get("C2").unwrap().is_fail());
}

#[test]
fn identity_jump_passes_c2_and_c6() {
    let mut sys = spiral_impact();
    for d in &mut sys.discontinuities {
        d.jump = JumpMap::identity();
    }
    let rep = validate_conditions(&sys, &SamplePlan::default(), &SimOptions::default()).unwrap();
    assert!(matches!(rep.get("C2"), Some(ConditionStatus::PassOnSamples { .. })));
    assert!(matches!(rep.get("C6"), Some(ConditionStatus::PassOnSamples { .. })));
}

#[test]
fn vanishing_gradient_fails_c1_with_witness() {
    let mut sys = spiral_impact();
    let mut patch = SurfacePatch::hyperplane("Square", vec![1.0, 0.0], 0.0, vec![], sys.domain.clone());
    patch.phi = Arc::new(|x| x[0] * x[0]);
    patch.grad_phi = Arc::new(|x| v2(2.0 * x[0], 0.0));
    let image = patch.clone();
    sys.discontinuities = vec![Discontinuity { patch, jump: JumpMap::identity(), image }];
    let rep = validate_conditions(&sys, &SamplePlan::default(), &SimOptions::default()).unwrap();
    match rep.get("C1") {
        Some(ConditionStatus::Fail { witness, .. }) => assert!(witness[0].abs() < 1e-12),
        other => panic!("C1 should fail: {other:?}"),
    }
}

#[test]
fn validation_is_deterministic_for_a_seed() {
    let sys = nonaxial_circle();
    let plan = SamplePlan { count: 50, seed: 11 };
    let a = validate_conditions(&sys, &plan, &SimOptions::default()).unwrap();
    let b = validate_conditions(&sys, &plan, &SimOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn non_finite_field_is_diagnosed() {
    let mut sys = spiral_impact();
    sys.f = Arc::new(|_| v2(f64::NAN, 0.0));
    sys.f_jacobian = Arc::new(|_| Matrix::zeros(2, 2));
    let err = validate_conditions(&sys, &SamplePlan::default(), &SimOptions::default()).unwrap_err();
    assert!(matches!(err, Error::NonFinite { .. }));
}
