//! Conjugate points, D'Atri and harmonicity diagnostics built on
//! `det A_v(t)`, and the explicit left-invariant examples.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{HoroError, Result};
use crate::geodesic::{integrate_geodesic, GeodesicTrajectory, GEODESIC_TOL};
use crate::jacobi::{
    a_tensor, bvp_two_point, equilibrated_sigma_min, golden_min, integrate_jacobi_from, jacobi_path,
    jacobi_trajectory, operator_norm, sigma_minima, JacobiPath, JACOBI_TOL, SIGMA_FLOOR,
};
use crate::manifold::{ManifoldSpec, ModelTag, TangentVector};
use crate::ode::{self, OdeOptions, OdeSystem, StepControl};

/// Bisection stops once the bracket is this narrow and `|det A|` at its
/// midpoint is below [`ROOT_RESIDUAL`].
pub const ROOT_INTERVAL: f64 = 1e-6;
pub const ROOT_RESIDUAL: f64 = 1e-8;

/// `det A_v(t)`.
pub fn det_a(spec: &ManifoldSpec, v: &TangentVector, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(HoroError::InvalidParams(format!("det A_v(t) needs t > 0, got {t}")));
    }
    let traj = integrate_geodesic(spec, v, None, (0.0, t), GEODESIC_TOL)?;
    if !traj.covers(t) {
        return Err(HoroError::ChartExit { t: traj.t_span().1 });
    }
    Ok(a_tensor(&traj, t, JACOBI_TOL)?.j.determinant())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootKind {
    /// `det A` changes sign (odd multiplicity).
    SignChange,
    /// `det A` touches zero: found as a vanishing local minimum of the
    /// equilibrated smallest singular value of `A`.
    Touch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootBracket {
    pub t_lo: f64,
    pub t_hi: f64,
    pub refined_t: f64,
    pub det_at_root: f64,
    pub kind: RootKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateScanResult {
    pub v: TangentVector,
    pub t_grid: Vec<f64>,
    pub det_values: Vec<f64>,
    pub zero_crossings: Vec<RootBracket>,
    pub first_conjugate_time: Option<f64>,
    /// The chart ended before the requested horizon.
    pub truncated: bool,
}

fn a_path(traj: &GeodesicTrajectory, t_end: f64) -> Result<JacobiPath> {
    let m = traj.spec().dim() - 1;
    jacobi_path(traj, 0.0, &[(DMatrix::zeros(m, m), DMatrix::identity(m, m))], t_end, JACOBI_TOL)
}

fn det_on(path: &JacobiPath, t: f64) -> f64 {
    path.state(0, t).map(|s| s.j.determinant()).unwrap_or(f64::NAN)
}

fn sigma_on(path: &JacobiPath, t: f64) -> f64 {
    path.state(0, t).map(|s| equilibrated_sigma_min(&s.j, &s.j_prime)).unwrap_or(f64::NAN)
}

fn bisect(path: &JacobiPath, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = det_on(path, lo);
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        let f_mid = det_on(path, mid);
        if f_mid == 0.0 || (hi - lo <= ROOT_INTERVAL && f_mid.abs() <= ROOT_RESIDUAL) {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Roots of `det A` in `(0, t_end]` along `path`, sampled on `grid`.
fn roots(path: &JacobiPath, grid: &[f64], dets: &[f64]) -> Vec<RootBracket> {
    let mut out = Vec::new();
    for k in 1..grid.len().saturating_sub(1) {
        let (a, b) = (dets[k], dets[k + 1]);
        if a == 0.0 || (a > 0.0) != (b > 0.0) {
            let t = if a == 0.0 { grid[k] } else { bisect(path, grid[k], grid[k + 1]) };
            out.push(RootBracket {
                t_lo: grid[k],
                t_hi: grid[k + 1],
                refined_t: t,
                det_at_root: det_on(path, t),
                kind: RootKind::SignChange,
            });
        }
    }
    let sigma = |t: f64| sigma_on(path, t);
    let interior: Vec<f64> = grid[1..].to_vec();
    for (t, s) in sigma_minima(&interior, &sigma, 1e-9) {
        if s >= SIGMA_FLOOR || out.iter().any(|r| (r.refined_t - t).abs() < 1e-4) {
            continue;
        }
        let k = grid.partition_point(|&g| g < t).clamp(1, grid.len() - 1);
        out.push(RootBracket {
            t_lo: grid[k - 1],
            t_hi: grid[k],
            refined_t: t,
            det_at_root: det_on(path, t),
            kind: RootKind::Touch,
        });
    }
    out.sort_by(|a, b| a.refined_t.total_cmp(&b.refined_t));
    out
}

/// Samples `det A_v` on `0, dt, 2dt, …, T` and locates its zeros: sign
/// changes by bisection to [`ROOT_INTERVAL`], touching zeros through the
/// equilibrated singular value.
pub fn conjugate_scan(spec: &ManifoldSpec, v: &TangentVector, t_max: f64, dt: f64) -> Result<ConjugateScanResult> {
    if !(t_max > 0.0) || !(dt > 0.0) || dt > t_max / 10.0 * (1.0 + 1e-12) {
        return Err(HoroError::InvalidParams(format!("conjugate scan needs T > 0 and 0 < dt <= T/10, got T = {t_max}, dt = {dt}")));
    }
    let traj = integrate_geodesic(spec, v, None, (0.0, t_max), GEODESIC_TOL)?;
    let t_end = traj.t_span().1;
    let truncated = t_end < t_max;
    let path = a_path(&traj, t_end)?;
    let steps = (t_end / dt + 1e-9).floor() as usize;
    let t_grid: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let det_values: Vec<f64> = t_grid.iter().map(|&t| det_on(&path, t)).collect();
    let zero_crossings = roots(&path, &t_grid, &det_values);
    Ok(ConjugateScanResult {
        v: v.clone(),
        first_conjugate_time: zero_crossings.first().map(|r| r.refined_t),
        t_grid,
        det_values,
        zero_crossings,
        truncated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DAtriReport {
    /// `max |det A_v(t) − det A_{−v}(t)|`.
    pub max_asymmetry: f64,
    /// `max |det A_v(t) − mean_v det A_v(t)|` per fixed `t`, maximized.
    pub harmonic_spread: f64,
    pub samples: usize,
    /// Indices of vectors dropped for a conjugate point inside the grid.
    pub excluded: Vec<usize>,
    /// `(t, mean det A_v(t))`.
    pub means: Vec<(f64, f64)>,
}

/// `det A` at `times`, or `None` when a conjugate point occurs first.
fn dets_without_conjugate(spec: &ManifoldSpec, v: &TangentVector, times: &[f64]) -> Result<Option<Vec<f64>>> {
    let t_max = times.iter().fold(0.0_f64, |a, &t| a.max(t));
    let traj = integrate_geodesic(spec, v, None, (0.0, t_max), GEODESIC_TOL)?;
    if !traj.covers(t_max) {
        return Err(HoroError::ChartExit { t: traj.t_span().1 });
    }
    let path = a_path(&traj, t_max)?;
    let mut nodes = path.nodes();
    nodes.retain(|&t| t > 0.0);
    let dets: Vec<f64> = nodes.iter().map(|&t| det_on(&path, t)).collect();
    if dets.iter().any(|&d| !(d > 0.0)) {
        return Ok(None);
    }
    let sigma = |t: f64| sigma_on(&path, t);
    if sigma_minima(&nodes, &sigma, 1e-9).iter().any(|(_, s)| *s < SIGMA_FLOOR) {
        return Ok(None);
    }
    Ok(Some(times.iter().map(|&t| det_on(&path, t)).collect()))
}

/// D'Atri symmetry and harmonic spread of `det A_v(t)` over `vectors` and
/// `t_grid`. `det A_{−v}` comes from an independent integration of `−v`.
pub fn datri_check(spec: &ManifoldSpec, vectors: &[TangentVector], t_grid: &[f64]) -> Result<DAtriReport> {
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(HoroError::InvalidParams("D'Atri grid needs positive times".into()));
    }
    let per_vector: Vec<Result<Option<(Vec<f64>, Vec<f64>)>>> = vectors
        .par_iter()
        .map(|v| {
            let fwd = dets_without_conjugate(spec, v, t_grid)?;
            let rev = dets_without_conjugate(spec, &v.reversed(), t_grid)?;
            Ok(fwd.zip(rev))
        })
        .collect();
    let mut excluded = Vec::new();
    let mut kept: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (i, r) in per_vector.into_iter().enumerate() {
        match r? {
            Some(pair) => kept.push(pair),
            None => excluded.push(i),
        }
    }
    let mut max_asymmetry = 0.0_f64;
    for (f, r) in &kept {
        for (a, b) in f.iter().zip(r) {
            max_asymmetry = max_asymmetry.max((a - b).abs());
        }
    }
    let mut harmonic_spread = 0.0_f64;
    let mut means = Vec::with_capacity(t_grid.len());
    for (k, &t) in t_grid.iter().enumerate() {
        if kept.is_empty() {
            break;
        }
        let mean = kept.iter().map(|(f, _)| f[k]).sum::<f64>() / kept.len() as f64;
        for (f, _) in &kept {
            harmonic_spread = harmonic_spread.max((f[k] - mean).abs());
        }
        means.push((t, mean));
    }
    Ok(DAtriReport { max_asymmetry, harmonic_spread, samples: kept.len(), excluded, means })
}

/// `‖U'_{v,t}(0) − A'_w(t)A_w(t)⁻¹‖` with `w = φ^{−t}v`, both sides in the
/// parallel frame along `c_v`.
pub fn u_from_a_identity_check(spec: &ManifoldSpec, v: &TangentVector, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(HoroError::InvalidParams(format!("identity check needs t > 0, got {t}")));
    }
    let traj = jacobi_trajectory(spec, v, (-t, 0.0))?;
    if !traj.covers(-t) {
        return Err(HoroError::ChartExit { t: traj.t_span().0 });
    }
    let u = bvp_two_point(&traj, -t, JACOBI_TOL)?.value;
    let m = spec.dim() - 1;
    let a = integrate_jacobi_from(&traj, -t, &DMatrix::zeros(m, m), &DMatrix::identity(m, m), 0.0, JACOBI_TOL)?;
    let inv = a
        .j
        .clone()
        .try_inverse()
        .ok_or(HoroError::ConjugateObstruction { r: t, condition: f64::INFINITY })?;
    Ok(operator_norm(&(u - a.j_prime * inv)))
}

fn sl2_params(a: f64, b: f64) -> Result<()> {
    if !(b > 0.0) {
        return Err(HoroError::InvalidParams(format!("sl2r requires b > 0, got b = {b}")));
    }
    if !(a + b < 0.0) {
        return Err(HoroError::InvalidParams(format!("sl2r requires a + b < 0, got a + b = {}", a + b)));
    }
    Ok(())
}

/// Closed-form coefficients on `V₁ = ∂_t`, `V₂ = ∂_x − √(2b)e^{−t}∂_y`
/// proposed for the field along `s ↦ (t, 0, s)` with `J(0) = 0`:
/// `u₁ = √2|a+b|e^{−t}(cos(√b s) − 1)`, `u₂ = sin(√b s)`.
pub fn sl2_analytic_jacobi(a: f64, b: f64, t_coord: f64, s: f64) -> Result<(f64, f64)> {
    sl2_params(a, b)?;
    let w = b.sqrt();
    let u1 = 2f64.sqrt() * (a + b).abs() * (-t_coord).exp() * ((w * s).cos() - 1.0);
    Ok((u1, (w * s).sin()))
}

/// The coefficient system the closed form solves:
/// `u₁'' + √(2b)|a+b|e^{−t}u₂' = 0`, `u₂'' − (√(2b)/|a+b|)eᵗu₁' − b u₂ = 0`.
struct Sl2CoefficientSystem {
    p: f64,
    q: f64,
    b: f64,
}

impl OdeSystem for Sl2CoefficientSystem {
    fn dim(&self) -> usize {
        4
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> bool {
        // y = (u1, u2, u1', u2')
        dy[0] = y[2];
        dy[1] = y[3];
        dy[2] = -self.p * y[3];
        dy[3] = self.q * y[2] + self.b * y[1];
        true
    }
}

/// Sup-norm gap between [`sl2_analytic_jacobi`] and a numerical solution of
/// its coefficient system on `[0, s_max]`, sampled at `samples` points.
pub fn sl2_coefficient_system_check(a: f64, b: f64, t_coord: f64, s_max: f64, samples: usize) -> Result<f64> {
    sl2_params(a, b)?;
    let c = (a + b).abs();
    let sys = Sl2CoefficientSystem {
        p: (2.0 * b).sqrt() * c * (-t_coord).exp(),
        q: (2.0 * b).sqrt() / c * t_coord.exp(),
        b,
    };
    let y0 = [0.0, 0.0, 0.0, b.sqrt()];
    let opts = OdeOptions::with_tol(1e-12);
    let sol = ode::integrate(&sys, 0.0, &y0, s_max, &opts, &mut |_, _| StepControl::Continue)?;
    let mut worst = 0.0_f64;
    for k in 0..=samples {
        let s = s_max * k as f64 / samples.max(1) as f64;
        let y = sol.dense.eval(s);
        let (u1, u2) = sl2_analytic_jacobi(a, b, t_coord, s)?;
        worst = worst.max((y[0] - u1).abs()).max((y[1] - u2).abs());
    }
    Ok(worst)
}

/// Coefficients `(u₁, u₂)` on `V₁, V₂` of the genuine Jacobi field along
/// `s ↦ (t, 0, s)` with `J(0) = 0`, `J'(0) = √b·V₂`, at each `s`.
pub fn sl2_jacobi_field(a: f64, b: f64, t_coord: f64, s_values: &[f64]) -> Result<Vec<(f64, f64)>> {
    let spec = ManifoldSpec::sl2r(a, b)?;
    let base = DVector::from_vec(vec![t_coord, 0.0, 0.0]);
    let v = spec.normalize(&base, &DVector::from_vec(vec![0.0, 0.0, 1.0]))?;
    let s_max = s_values.iter().fold(0.0_f64, |m, s| m.max(*s));
    let traj = integrate_geodesic(&spec, &v, None, (0.0, s_max), GEODESIC_TOL)?;
    let g0 = spec.metric(base.as_slice())?;
    let v2 = DVector::from_vec(vec![0.0, 1.0, -(2.0 * b).sqrt() * (-t_coord).exp()]) * b.sqrt();
    let frame0 = traj.frame(0.0)?;
    let m = 2;
    let mut jp = DMatrix::zeros(m, m);
    for i in 0..m {
        jp[(i, 0)] = frame0[i].dot(&(&g0 * &v2));
    }
    let path = jacobi_path(&traj, 0.0, &[(DMatrix::zeros(m, m), jp)], s_max, JACOBI_TOL)?;
    s_values
        .iter()
        .map(|&s| {
            let st = path.state(0, s)?;
            let frame = traj.frame(s)?;
            let chart = &frame[0] * st.j[(0, 0)] + &frame[1] * st.j[(1, 0)];
            Ok((chart[0], chart[1]))
        })
        .collect()
}

/// Curvature of the left-invariant frame at `(t, 0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sl2CurvatureTable {
    /// `R(V₁,V₃)V₃` expanded as `c₁V₁ + c₂V₂ + c₃V₃`.
    pub r13: [f64; 3],
    /// `R(V₂,V₃)V₃` in the same basis.
    pub r23: [f64; 3],
    /// `⟨R(V₁,V₃)V₃, V₁⟩/|V₁|²` and `⟨R(V₂,V₃)V₃, V₂⟩/|V₂|²`.
    pub ratios: [f64; 2],
}

pub fn sl2_curvature_table(a: f64, b: f64, t_coord: f64) -> Result<Sl2CurvatureTable> {
    let spec = ManifoldSpec::sl2r(a, b)?;
    let p = [t_coord, 0.0, 0.0];
    let curv = spec.curvature_at(&p)?;
    let e = (2.0 * b).sqrt() * (-t_coord).exp();
    let v1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    let v2 = DVector::from_vec(vec![0.0, 1.0, -e]);
    let v3 = DVector::from_vec(vec![0.0, 0.0, 1.0]);
    let basis = DMatrix::from_columns(&[v1.clone(), v2.clone(), v3.clone()]);
    let lu = basis.lu();
    let expand = |w: DVector<f64>| -> Result<[f64; 3]> {
        let c = lu.solve(&w).ok_or(HoroError::SingularMetric { point: p.to_vec() })?;
        Ok([c[0], c[1], c[2]])
    };
    let r13 = curv.riemann.apply(&v1, &v3, &v3);
    let r23 = curv.riemann.apply(&v2, &v3, &v3);
    let ratios = [curv.inner(&r13, &v1) / curv.inner(&v1, &v1), curv.inner(&r23, &v2) / curv.inner(&v2, &v2)];
    Ok(Sl2CurvatureTable { r13: expand(r13)?, r23: expand(r23)?, ratios })
}

/// `count` unit directions at the Heisenberg origin with central (`∂_y`)
/// component at least `min_vertical` in size: vertical parts
/// `0.2, 0.4, 0.6, 0.8` (alternating sign) times evenly spread horizontal
/// azimuths.
pub fn heisenberg_direction_grid(spec: &ManifoldSpec, count: usize, min_vertical: f64) -> Result<Vec<TangentVector>> {
    let b = match spec.tag() {
        ModelTag::Heisenberg { b } => b,
        other => return Err(HoroError::Unsupported(format!("Heisenberg direction grid on {other:?}"))),
    };
    let verticals = [0.2, 0.4, 0.6, 0.8];
    let per = count.div_ceil(verticals.len()).max(1);
    let base = spec.anchor();
    let mut out = Vec::with_capacity(count);
    'outer: for (i, &c) in verticals.iter().enumerate() {
        if c < min_vertical {
            continue;
        }
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let h = (1.0 - c * c).sqrt();
        for k in 0..per {
            if out.len() == count {
                break 'outer;
            }
            let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.25 * i as f64) / per as f64;
            let comps = DVector::from_vec(vec![h * phi.cos() * b.sqrt(), sign * c, h * phi.sin()]);
            out.push(spec.normalize(&base, &comps)?);
        }
    }
    Ok(out)
}

/// First conjugate times over a direction set (parallel, order kept).
pub fn conjugate_times(spec: &ManifoldSpec, vectors: &[TangentVector], t_max: f64, dt: f64) -> Result<Vec<ConjugateScanResult>> {
    vectors.par_iter().map(|v| conjugate_scan(spec, v, t_max, dt)).collect()
}

/// Golden-section refinement of `det A_v`'s magnitude, exposed for
/// diagnostics of touching roots.
pub fn refine_touch(spec: &ManifoldSpec, v: &TangentVector, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let traj = integrate_geodesic(spec, v, None, (0.0, hi), GEODESIC_TOL)?;
    let path = a_path(&traj, hi)?;
    Ok(golden_min(&|t| sigma_on(&path, t), lo, hi, 1e-10))
}
