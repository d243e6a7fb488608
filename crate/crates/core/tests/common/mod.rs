#![allow(dead_code)]

use horolab_core::sampling::{resolvable_tilt, unit_vectors_where};
use horolab_core::{ManifoldSpec, ModelTag, TangentVector};
use nalgebra::DVector;

pub fn h3() -> ManifoldSpec {
    ManifoldSpec::hyperbolic(3, 1.0).unwrap()
}

pub fn h2xr() -> ManifoldSpec {
    ManifoldSpec::product(ManifoldSpec::hyperbolic(2, 1.0).unwrap(), ManifoldSpec::euclidean(1).unwrap()).unwrap()
}

pub fn h2xh2() -> ManifoldSpec {
    ManifoldSpec::product(ManifoldSpec::hyperbolic(2, 1.0).unwrap(), ManifoldSpec::hyperbolic(2, 1.0).unwrap()).unwrap()
}

pub fn e3() -> ManifoldSpec {
    ManifoldSpec::euclidean(3).unwrap()
}

/// Models without conjugate points.
pub fn no_conjugate_models() -> Vec<(&'static str, ManifoldSpec)> {
    vec![("H3", h3()), ("H2xR", h2xr()), ("H2xH2", h2xh2()), ("E3", e3())]
}

pub fn all_models() -> Vec<(&'static str, ManifoldSpec)> {
    let mut m = no_conjugate_models();
    m.push(("H2(1.5)", ManifoldSpec::hyperbolic(2, 1.5).unwrap()));
    m.push(("sl2r", ManifoldSpec::sl2r(-2.0, 1.0).unwrap()));
    m.push(("heisenberg", ManifoldSpec::heisenberg(1.0).unwrap()));
    m
}

/// Maps `u ∈ [−1, 1]^n` into the chart: half-space heights become `e^{u}`.
pub fn chart_point(spec: &ManifoldSpec, u: &[f64]) -> Vec<f64> {
    if let Some((l, r)) = spec.factors() {
        let k = l.dim();
        let mut p = chart_point(l, &u[..k]);
        p.extend(chart_point(r, &u[k..]));
        return p;
    }
    let mut p: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
    if let ModelTag::Hyperbolic { .. } = spec.tag() {
        let n = p.len();
        p[n - 1] = u[n - 1].exp();
    }
    p
}

/// Unit vector with components `c` at the chart image of `u`.
pub fn unit_at(spec: &ManifoldSpec, u: &[f64], c: &[f64]) -> TangentVector {
    let p = DVector::from_vec(chart_point(spec, u));
    spec.normalize(&p, &DVector::from_column_slice(c)).unwrap()
}

/// Seeded sample at the anchor. Product directions are kept away from the
/// flat/curved split, where limits converge too slowly: the H² share is at
/// least 0.6 on H²×ℝ and both shares at least 0.45 on H²×H².
pub fn sample(spec: &ManifoldSpec, seed: u64, count: usize) -> Vec<TangentVector> {
    unit_vectors_where(spec, &spec.anchor(), seed, count, |v| resolvable_tilt(spec, v)).unwrap()
}

pub fn min_eig(m: &nalgebra::DMatrix<f64>) -> f64 {
    horolab_core::jacobi::sym_eigenvalues(&horolab_core::jacobi::symmetrize(m).value)[0]
}
