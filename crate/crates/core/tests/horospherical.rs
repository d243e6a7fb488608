mod common;

use common::*;
use horolab_core::horospherical::*;
use horolab_core::ManifoldSpec;
use proptest::prelude::*;

fn check_profile(name: &str, spec: &ManifoldSpec, p: &HorosphericalProfile) -> Result<(), TestCaseError> {
    let m = (spec.dim() - 1) as i32;
    prop_assert!(p.eigenvalues_d[0] >= -1e-7, "{name}: {:?}", p.eigenvalues_d);
    if let Some(b) = spec.curvature_bounds() {
        prop_assert!(p.norm_d <= 2.0 * b.r0.sqrt() + 1e-6, "{name}: ‖D‖ = {}", p.norm_d);
    }
    prop_assert!(p.det_d <= (2.0 * p.h / m as f64).powi(m) + 1e-6, "{name}");
    if p.bound_checks.det_trace_equality {
        prop_assert!(p.bound_checks.rigidity_residual.unwrap() <= 1e-4, "{name}");
    }
    prop_assert!(p.bound_checks.h_plus_h_reverse_eq_trace_d <= 1e-6, "{name}");
    prop_assert!(p.asymmetry <= 1e-6);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn profile_bounds(seed in 0u64..1000) {
        for (name, spec) in no_conjugate_models() {
            for v in sample(&spec, seed, 2) {
                let p = profile(&spec, &v, &ProfileOptions::default()).unwrap();
                check_profile(name, &spec, &p)?;
            }
        }
    }

    #[test]
    fn rank_is_flow_and_reversal_invariant(seed in 0u64..1000) {
        let opts = ProfileOptions::default();
        for (name, spec) in no_conjugate_models() {
            let v = sample(&spec, seed, 1).remove(0);
            let scan = flow_invariance_scan(&spec, &v, &[-2.0, 1.0, 3.0], &opts).unwrap();
            prop_assert!(scan.rank_consistent, "{name}");
            prop_assert!(scan.max_deviation <= 1e-5, "{name}: {}", scan.max_deviation);
            if let Some(ok) = scan.rho_floor_ok {
                prop_assert!(ok, "{name}: ρ-floor");
            }
            let rev = reversibility_scan(&spec, std::slice::from_ref(&v), &opts).unwrap();
            prop_assert!(rev.rank_consistent, "{name}");
        }
    }

    #[test]
    fn busemann_gradient_is_minus_v(seed in 0u64..1000) {
        for (name, spec, t_max) in [("H3", h3(), 64.0), ("H2xR", h2xr(), 512.0)] {
            let v = sample(&spec, seed, 1).remove(0);
            let g = busemann_gradient_field(&spec, &v, &v.base, 1e-4, t_max, 1e-10).unwrap();
            let gap = (&g - &v.components).amax();
            prop_assert!(gap <= 1e-6, "{name}: {gap}");
        }
    }
}

#[test]
fn hyperbolic_profile_suite() {
    let spec = h3();
    for v in sample(&spec, 7, 5) {
        let p = profile(&spec, &v, &ProfileOptions::default()).unwrap();
        assert!((p.h - 2.0).abs() <= 1e-5);
        assert!((p.s + nalgebra::DMatrix::<f64>::identity(2, 2)).amax() <= 1e-5);
        assert!((p.u - nalgebra::DMatrix::<f64>::identity(2, 2)).amax() <= 1e-5);
        assert_eq!(p.rank, 1);
        assert!(p.bound_checks.det_trace_equality);
        assert!(p.bound_checks.rigidity_residual.unwrap() <= 1e-4);
    }
}

#[test]
fn product_rank_and_split() {
    let spec = h2xr();
    for v in sample(&spec, 9, 3) {
        let a = horolab_core::sampling::left_weight(&spec, &v).unwrap();
        let p = profile(&spec, &v, &ProfileOptions::default()).unwrap();
        assert_eq!(p.rank, 2);
        assert!((p.h - a).abs() <= 1e-5, "{} vs {a}", p.h);
        assert!(p.det_d.abs() <= 1e-6);
    }
}

#[test]
fn tilted_product_busemann_splits() {
    let spec = h2xr();
    let (h2, r1) = spec.factors().unwrap();
    let v = &sample(&spec, 3, 1)[0];
    let a = horolab_core::sampling::left_weight(&spec, v).unwrap();
    let b = (1.0 - a * a).sqrt();
    let c = &v.components;
    let vl = h2.normalize(&v.base.rows(0, 2).into_owned(), &c.rows(0, 2).into_owned()).unwrap();
    let vr = r1.normalize(&v.base.rows(2, 1).into_owned(), &c.rows(2, 1).into_owned()).unwrap();
    for u in [[0.3, -0.4, 0.8], [-0.5, 0.6, -0.2], [0.1, -0.9, 0.5]] {
        let x = nalgebra::DVector::from_vec(chart_point(&spec, &u));
        let bx = busemann(&spec, v, &x, 256.0, 1e-7).unwrap();
        let bl = busemann(h2, &vl, &x.rows(0, 2).into_owned(), 256.0, 1e-8).unwrap();
        let br = busemann(r1, &vr, &x.rows(2, 1).into_owned(), 256.0, 1e-8).unwrap();
        assert!((bx - a * bl - b * br).abs() <= 1e-6, "{u:?}: {bx} vs {}", a * bl + b * br);
    }
}

#[test]
fn hyperbolic_leaf_contracts_at_unit_rate() {
    let spec = h3();
    let v = unit_at(&spec, &[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0]);
    let w = stable_leaf_partner(&spec, &v, &nalgebra::DVector::from_vec(vec![0.5, -0.3, 0.0])).unwrap();
    let times: Vec<f64> = (0..=20).map(|k| 0.5 * k as f64).collect();
    let series = stable_leaf_probe(&spec, &v, &w, &times).unwrap();
    let rate = series.rate.unwrap();
    assert!((rate + 1.0).abs() <= 0.05, "{rate}");
    assert!(series.distances.windows(2).all(|d| d[1] < d[0]));
}

#[test]
fn horosphere_inequality_on_seeded_pairs() {
    let spec = h3();
    let pairs: Vec<_> = sample(&spec, 21, 50)
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let y = (0.3 * v.components[2]).exp();
            let p = nalgebra::DVector::from_vec(vec![v.components[0], v.components[1], y]);
            let scale = 0.5 + i as f64 * 0.08;
            let q = nalgebra::DVector::from_vec(vec![v.components[0] + scale * v.components[1], v.components[1] - scale, y]);
            (p, q)
        })
        .collect();
    let report = horosphere_distance_check(&spec, &pairs).unwrap();
    assert!(report.all_ok);
    assert_eq!(report.rows.len(), 50);
    assert!(report.rows.iter().all(|r| r.tightness <= 1.0 + 1e-12));
}
