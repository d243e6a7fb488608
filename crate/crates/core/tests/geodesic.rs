mod common;

use common::*;
use horolab_core::geodesic::{closed_form_distance, integrate_geodesic, pair_distances, GEODESIC_TOL};
use proptest::prelude::*;

fn coords(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

fn nonzero(c: &[f64]) -> bool {
    c.iter().map(|x| x * x).sum::<f64>() > 1e-3
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn energy_is_conserved(u in coords(4), c in coords(4), len in 1.0..50.0f64) {
        prop_assume!(nonzero(&c));
        for (name, spec) in all_models() {
            let n = spec.dim();
            let v = unit_at(&spec, &u[..n], &c[..n]);
            let traj = integrate_geodesic(&spec, &v, None, (-len, len), GEODESIC_TOL).unwrap();
            prop_assert!(traj.max_speed_drift() <= 1e-7, "{name}: {}", traj.max_speed_drift());
        }
    }

    #[test]
    fn flow_property(u in coords(4), c in coords(4), t1 in 0.0..10.0f64, t2 in 0.0..10.0f64) {
        prop_assume!(nonzero(&c));
        for (name, spec) in all_models() {
            let n = spec.dim();
            let v = unit_at(&spec, &u[..n], &c[..n]);
            let whole = integrate_geodesic(&spec, &v, None, (0.0, t1 + t2), GEODESIC_TOL).unwrap();
            let first = integrate_geodesic(&spec, &v, None, (0.0, t1), GEODESIC_TOL).unwrap();
            let w = first.tangent(t1).unwrap();
            let second = integrate_geodesic(&spec, &w, None, (0.0, t2), GEODESIC_TOL).unwrap();
            let gap = (whole.point(t1 + t2).unwrap() - second.point(t2).unwrap()).amax();
            prop_assert!(gap <= 1e-6, "{name}: {gap}");
        }
    }

    #[test]
    fn reversal(u in coords(4), c in coords(4), t in 0.0..10.0f64) {
        prop_assume!(nonzero(&c));
        for (name, spec) in all_models() {
            let n = spec.dim();
            let v = unit_at(&spec, &u[..n], &c[..n]);
            let fwd = integrate_geodesic(&spec, &v, None, (-t, 0.0), GEODESIC_TOL).unwrap();
            let rev = integrate_geodesic(&spec, &v.reversed(), None, (0.0, t), GEODESIC_TOL).unwrap();
            let gap = (fwd.point(-t).unwrap() - rev.point(t).unwrap()).amax();
            prop_assert!(gap <= 1e-7, "{name}: {gap}");
        }
    }

    #[test]
    fn hyperbolic_geodesics_diverge(c1 in coords(3), c2 in coords(3)) {
        prop_assume!(nonzero(&c1) && nonzero(&c2));
        let spec = h3();
        let base = [0.0, 0.0, 0.0];
        let v = unit_at(&spec, &base, &c1);
        let w = unit_at(&spec, &base, &c2);
        prop_assume!((&v.components - &w.components).amax() > 1e-2);
        let times: Vec<f64> = (0..=36).map(|k| 1.0 + 0.25 * k as f64).collect();
        let d = pair_distances(&spec, &v, &w, &times, GEODESIC_TOL).unwrap();
        for pair in d.windows(2) {
            prop_assert!(pair[1] > pair[0], "{d:?}");
        }
    }
}

#[test]
fn vertical_half_plane_geodesic() {
    let h2 = horolab_core::ManifoldSpec::hyperbolic(2, 1.0).unwrap();
    let v = unit_at(&h2, &[0.0, 0.0], &[0.0, 1.0]);
    let traj = integrate_geodesic(&h2, &v, None, (0.0, 1.0), GEODESIC_TOL).unwrap();
    let p = traj.point(1.0).unwrap();
    assert!(p[0].abs() < 1e-8 && (p[1] - 1f64.exp()).abs() < 1e-8);
    assert!((closed_form_distance(&h2, &[0.0, 1.0], p.as_slice()).unwrap() - 1.0).abs() < 1e-8);
}
