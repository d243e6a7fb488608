mod common;

use common::*;
use horolab_core::{DerivativeMode, ManifoldSpec};
use nalgebra::DVector;
use proptest::prelude::*;

fn coords(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn finite_difference_christoffel_matches_analytic(u in coords(4)) {
        for (name, spec) in all_models() {
            let p = chart_point(&spec, &u[..spec.dim()]);
            let exact = spec.christoffel(&p).unwrap();
            let fd = spec.with_derivative_mode(DerivativeMode::finite_difference()).christoffel(&p).unwrap();
            let scale = exact.max_abs().max(1.0);
            prop_assert!(exact.max_abs_diff(&fd) <= 1e-6 * scale, "{name} at {p:?}: {}", exact.max_abs_diff(&fd));
        }
    }

    #[test]
    fn riemann_symmetries_and_bianchi(u in coords(4)) {
        let mut models = all_models();
        models.push(("bump", ManifoldSpec::perturbed_euclidean(3, 0.3, 1.0, vec![0.0; 3]).unwrap()));
        for (name, spec) in models {
            let p = chart_point(&spec, &u[..spec.dim()]);
            let c = spec.curvature_at(&p).unwrap();
            let scale = c.riemann.max_abs().max(1.0);
            prop_assert!(c.antisymmetry_residual() <= 1e-8 * scale, "{name}: {}", c.antisymmetry_residual());
            prop_assert!(c.bianchi_residual() <= 1e-8 * scale, "{name}: {}", c.bianchi_residual());
        }
    }

    #[test]
    fn jacobi_operator_is_symmetric(u in coords(4), c in coords(4)) {
        prop_assume!(c.iter().map(|x| x * x).sum::<f64>() > 1e-3);
        for (name, spec) in all_models() {
            let n = spec.dim();
            let v = unit_at(&spec, &u[..n], &c[..n]);
            let frame = spec.orthonormal_frame(&v).unwrap();
            let r = spec.jacobi_operator_raw(&v, &frame).unwrap();
            prop_assert!((&r - r.transpose()).amax() <= 1e-10, "{name}: {}", (&r - r.transpose()).amax());
        }
    }

    #[test]
    fn constant_curvature_jacobi_operator(u in coords(3), c in coords(3)) {
        prop_assume!(c.iter().map(|x| x * x).sum::<f64>() > 1e-3);
        for (k, spec) in [(1.0, h3()), (1.5, ManifoldSpec::hyperbolic(2, 1.5).unwrap()), (0.0, e3())] {
            let n = spec.dim();
            let v = unit_at(&spec, &u[..n], &c[..n]);
            let frame = spec.orthonormal_frame(&v).unwrap();
            let r = spec.jacobi_operator(&v, &frame).unwrap();
            let want = nalgebra::DMatrix::<f64>::identity(n - 1, n - 1) * (-k * k);
            prop_assert!((r - want).amax() <= 1e-8);
        }
    }
}

#[test]
fn sectional_curvature_examples() {
    let h = h3();
    let p = [0.3, -0.2, 0.7];
    let k = h.sectional_curvature(&p, &DVector::from_vec(vec![1.0, 0.0, 0.5]), &DVector::from_vec(vec![0.0, 1.0, 0.0])).unwrap();
    assert!((k + 1.0).abs() < 1e-8);

    let m = h2xr();
    let k = m.sectional_curvature(&[0.0, 1.0, 0.0], &DVector::from_vec(vec![1.0, 0.0, 0.0]), &DVector::from_vec(vec![0.0, 0.0, 1.0])).unwrap();
    assert!(k.abs() < 1e-8);

    let half = ManifoldSpec::hyperbolic(2, 1.5).unwrap();
    let k = half.sectional_curvature(&[0.4, 2.0], &DVector::from_vec(vec![1.0, 0.0]), &DVector::from_vec(vec![0.0, 1.0])).unwrap();
    assert!((k + 2.25).abs() < 1e-8);

    let heis = ManifoldSpec::heisenberg(1.0).unwrap();
    let (x, z) = (DVector::from_vec(vec![1.0, 0.0, 0.0]), DVector::from_vec(vec![0.0, 0.0, 1.0]));
    let exact = heis.sectional_curvature(&[0.0; 3], &x, &z).unwrap();
    let fd = heis.with_derivative_mode(DerivativeMode::finite_difference()).sectional_curvature(&[0.0; 3], &x, &z).unwrap();
    assert!(exact < 0.0);
    assert!((exact - fd).abs() < 1e-6, "{exact} vs {fd}");
}
