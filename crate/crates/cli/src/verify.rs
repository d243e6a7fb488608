//! The end-to-end acceptance suite behind `horolab verify-paper`.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use horolab_core::datri;
use horolab_core::geodesic::{integrate_geodesic, pair_distances, GEODESIC_TOL};
use horolab_core::horospherical::{self as horo, ProfileOptions};
use horolab_core::jacobi::{
    bvp_stable_approx, integrate_jacobi, jacobi_trajectory, operator_norm, riccati_propagate, stable_tensor,
    sym_eigenvalues, unstable_tensor, wronskian, LimitOptions, JACOBI_TOL,
};
use horolab_core::sampling::{self, resolvable_tilt, unit_vectors, unit_vectors_where};
use horolab_core::{ManifoldSpec, TangentVector};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// First conjugate time over the Heisenberg direction grid, pinned from
/// the first run.
pub const HEISENBERG_GOLDEN: f64 = 7.853981632;

#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: u32,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} {tag}: {}: {}", self.id, self.title, self.detail)
    }
}

type Outcome = Result<(bool, String), String>;

fn finish(id: u32, title: &'static str, out: Outcome) -> Criterion {
    match out {
        Ok((pass, detail)) => Criterion { id, title, pass, detail },
        Err(e) => Criterion { id, title, pass: false, detail: format!("error: {e}") },
    }
}

fn e<T: fmt::Display>(x: T) -> String {
    x.to_string()
}

fn unit(spec: &ManifoldSpec, base: &[f64], c: &[f64]) -> Result<TangentVector, String> {
    spec.normalize(&DVector::from_column_slice(base), &DVector::from_column_slice(c)).map_err(e)
}

fn eye(m: usize) -> DMatrix<f64> {
    DMatrix::identity(m, m)
}

fn h3() -> ManifoldSpec {
    ManifoldSpec::hyperbolic(3, 1.0).expect("H3")
}

fn h2xr() -> ManifoldSpec {
    ManifoldSpec::product(ManifoldSpec::hyperbolic(2, 1.0).expect("H2"), ManifoldSpec::euclidean(1).expect("R"))
        .expect("H2xR")
}

pub fn criterion_1() -> Criterion {
    finish(1, "H3 horospherical suite", (|| {
        let start = Instant::now();
        let spec = h3();
        let vs = unit_vectors(&spec, &spec.anchor(), 1, 20).map_err(e)?;
        let ps: Vec<_> = vs.par_iter().map(|v| horo::profile(&spec, v, &ProfileOptions::default())).collect();
        let ps = ps.into_iter().collect::<Result<Vec<_>, _>>().map_err(e)?;
        let secs = start.elapsed().as_secs_f64();
        let mut worst = 0.0_f64;
        let mut ok = true;
        for p in &ps {
            worst = worst
                .max((p.h - 2.0).abs())
                .max((&p.s + eye(2)).amax())
                .max((&p.u - eye(2)).amax())
                .max((&p.d - eye(2) * 2.0).amax());
            ok &= p.rank == 1 && p.bound_checks.det_trace_inequality && p.bound_checks.det_trace_equality;
        }
        ok &= worst <= 1e-5 && secs <= 30.0;
        Ok((ok, format!("20 vectors, max deviation from h = 2, S = -Id, U = Id, D = 2 Id: {worst:.3e}; rank 1 and det-trace equality: {ok}; {secs:.1} s")))
    })())
}

pub fn criterion_2() -> Criterion {
    finish(2, "BVP exactness on H3", (|| {
        let spec = h3();
        let mut worst = 0.0_f64;
        let mut monotone = true;
        for v in unit_vectors(&spec, &spec.anchor(), 2, 5).map_err(e)? {
            let traj = jacobi_trajectory(&spec, &v, (0.0, 9.0)).map_err(e)?;
            let mut prev: Option<DMatrix<f64>> = None;
            for r in [1.0f64, 2.0, 4.0, 8.0] {
                let s = bvp_stable_approx(&traj, r, JACOBI_TOL).map_err(e)?.value;
                worst = worst.max(operator_norm(&(&s + eye(2) / r.tanh())));
                if let Some(p) = &prev {
                    monotone &= sym_eigenvalues(&(&s - p))[0] >= -1e-8;
                }
                prev = Some(s);
            }
        }
        Ok((worst <= 1e-6 && monotone, format!("max |S'_(v,r)(0) + coth(r) Id| = {worst:.3e} for r in 1, 2, 4, 8; monotone: {monotone}")))
    })())
}

pub fn criterion_3() -> Criterion {
    finish(3, "SL(2,R)~ conjugate point", (|| {
        let (a, b) = (-2.0, 1.0);
        let spec = ManifoldSpec::sl2r(a, b).map_err(e)?;
        let v = unit(&spec, &[0.0; 3], &[0.0, 0.0, 1.0])?;
        let scan = datri::conjugate_scan(&spec, &v, 8.0, 0.05).map_err(e)?;
        let first = scan.first_conjugate_time;
        let time_ok = first.is_some_and(|t| (t - 2.0 * PI).abs() <= 1e-3);
        let s: Vec<f64> = (0..=200).map(|k| 2.0 * PI * k as f64 / 200.0).collect();
        let field = datri::sl2_jacobi_field(a, b, 0.0, &s).map_err(e)?;
        let mut sup = 0.0_f64;
        for (&si, &(j1, j2)) in s.iter().zip(&field) {
            let (u1, u2) = datri::sl2_analytic_jacobi(a, b, 0.0, si).map_err(e)?;
            sup = sup.max((u1 - j1).abs()).max((u2 - j2).abs());
        }
        let coefficient = datri::sl2_coefficient_system_check(a, b, 0.0, 2.0 * PI, 200).map_err(e)?;
        let shown = first.map_or("none".to_string(), |t| format!("{t:.6}"));
        Ok((
            time_ok && sup <= 1e-5,
            format!(
                "first conjugate time {shown} (expected 6.2832 +/- 1e-3); closed-form pair vs integrated Jacobi field sup {sup:.3e} (limit 1e-5); closed form vs its own coefficient system {coefficient:.3e}"
            ),
        ))
    })())
}

pub fn criterion_4() -> Criterion {
    finish(4, "Heisenberg conjugate times", (|| {
        let spec = ManifoldSpec::heisenberg(1.0).map_err(e)?;
        let grid = datri::heisenberg_direction_grid(&spec, 20, 0.05).map_err(e)?;
        let scans = datri::conjugate_times(&spec, &grid, 15.0, 0.05).map_err(e)?;
        let found: Vec<f64> = scans.iter().filter_map(|s| s.first_conjugate_time).filter(|&t| t <= 15.0).collect();
        let first = found.iter().copied().fold(f64::INFINITY, f64::min);
        let ok = !found.is_empty() && (first - HEISENBERG_GOLDEN).abs() <= 1e-6;
        Ok((ok, format!("{} of 20 directions conjugate by t = 15; earliest {first:.9} (golden {HEISENBERG_GOLDEN})", found.len())))
    })())
}

pub fn criterion_5() -> Criterion {
    finish(5, "product Busemann split on H2xR", (|| {
        let spec = h2xr();
        let v_tilde = unit(&spec, &[0.0, 1.0, 0.0], &[0.0, 0.6, 0.8])?;
        let h2 = ManifoldSpec::hyperbolic(2, 1.0).map_err(e)?;
        let r1 = ManifoldSpec::euclidean(1).map_err(e)?;
        let v = unit(&h2, &[0.0, 1.0], &[0.0, 1.0])?;
        let w = unit(&r1, &[0.0], &[1.0])?;
        let mut rng = sampling::rng(5);
        let pts: Vec<DVector<f64>> = (0..10)
            .map(|_| {
                let z = sampling::normal_vector(&mut rng, 3);
                DVector::from_vec(vec![0.5 * z[0], (0.5 * z[1]).exp(), 0.5 * z[2]])
            })
            .collect();
        let gaps: Vec<Result<f64, String>> = pts
            .par_iter()
            .map(|x| {
                let b = horo::busemann(&spec, &v_tilde, x, 512.0, 1e-8).map_err(e)?;
                let bl = horo::busemann(&h2, &v, &x.rows(0, 2).into_owned(), 512.0, 1e-8).map_err(e)?;
                let br = horo::busemann(&r1, &w, &x.rows(2, 1).into_owned(), 512.0, 1e-8).map_err(e)?;
                Ok((b - 0.6 * bl - 0.8 * br).abs())
            })
            .collect();
        let split = gaps.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().fold(0.0_f64, f64::max);
        let scan = horo::flow_invariance_scan(&spec, &v_tilde, &[-2.0, -1.0, 1.0, 2.0, 3.0], &ProfileOptions::default()).map_err(e)?;
        let base = horo::profile(&spec, &v_tilde, &ProfileOptions::default()).map_err(e)?;
        let h_dev = scan.rows.iter().map(|r| (r.h - 0.6).abs()).fold((base.h - 0.6).abs(), f64::max);
        Ok((
            split <= 1e-4 && h_dev <= 1e-4,
            format!("max split residual {split:.3e} on 10 points; max |h - 0.6| along the flow {h_dev:.3e}"),
        ))
    })())
}

pub fn criterion_6() -> Criterion {
    finish(6, "D'Atri vs harmonic separation", (|| {
        let grid = [0.5, 1.0, 2.0, 3.0];
        let h = h3();
        let a = datri::datri_check(&h, &unit_vectors(&h, &h.anchor(), 6, 8).map_err(e)?, &grid).map_err(e)?;
        let p = h2xr();
        let b = datri::datri_check(&p, &unit_vectors(&p, &p.anchor(), 6, 8).map_err(e)?, &grid).map_err(e)?;
        let ok = a.max_asymmetry <= 1e-6 && a.harmonic_spread <= 1e-6 && b.max_asymmetry <= 1e-6 && b.harmonic_spread >= 0.1;
        Ok((
            ok,
            format!(
                "H3 symmetry {:.2e}, spread {:.2e}; H2xR symmetry {:.2e}, spread {:.3}",
                a.max_asymmetry, a.harmonic_spread, b.max_asymmetry, b.harmonic_spread
            ),
        ))
    })())
}

#[derive(Default)]
struct Suite {
    wronskian: f64,
    norm_ok: bool,
    identity: f64,
    rank_ok: bool,
    riccati: f64,
    lower_ok: bool,
}

fn suite_for(spec: &ManifoldSpec, v: &TangentVector) -> Result<Suite, String> {
    let opts = LimitOptions::default();
    let m = spec.dim() - 1;
    let traj = jacobi_trajectory(spec, v, (-70.0, 70.0)).map_err(e)?;
    let s = stable_tensor(&traj, &opts).map_err(e)?.s;
    let u = unstable_tensor(&traj, &opts).map_err(e)?.s;
    let r0 = spec.curvature_bounds().map_or(0.0, |b| b.r0);
    let mut out = Suite { norm_ok: true, rank_ok: true, lower_ok: true, ..Suite::default() };

    let omega0 = &u - &s;
    for t in [1.0, 2.5, 5.0] {
        let a = integrate_jacobi(&traj, &eye(m), &u, t, JACOBI_TOL).map_err(e)?;
        let b = integrate_jacobi(&traj, &eye(m), &s, t, JACOBI_TOL).map_err(e)?;
        out.wronskian = out.wronskian.max(operator_norm(&(wronskian(&a, &b).map_err(e)?.omega - &omega0)));
        let sigma = b.j.singular_values().min();
        out.lower_ok &= sigma >= (-t * r0.sqrt()).exp() * (1.0 - 1e-8);

        let propagated = riccati_propagate(&traj, &s, t, JACOBI_TOL).map_err(e)?;
        let w = traj.tangent(t).map_err(e)?;
        let w_traj = integrate_geodesic(spec, &w, Some(&traj.frame(t).map_err(e)?), (0.0, 70.0), GEODESIC_TOL).map_err(e)?;
        let direct = stable_tensor(&w_traj, &opts).map_err(e)?.s;
        out.riccati = out.riccati.max(operator_norm(&(propagated - direct)));
    }

    let p = horo::profile(spec, v, &ProfileOptions::default()).map_err(e)?;
    out.norm_ok = p.bound_checks.norm_d_le_2sqrt_r0 != Some(false);
    out.identity = p.bound_checks.h_plus_h_reverse_eq_trace_d;
    let flow = horo::flow_invariance_scan(spec, v, &[-1.5, 2.0], &ProfileOptions::default()).map_err(e)?;
    let rev = horo::reversibility_scan(spec, std::slice::from_ref(v), &ProfileOptions::default()).map_err(e)?;
    out.rank_ok = flow.rank_consistent && rev.rank_consistent;
    Ok(out)
}

pub fn criterion_7() -> Criterion {
    finish(7, "invariant suite", (|| {
        let models = [
            ("H3", h3()),
            ("H2xR", h2xr()),
            (
                "H2xH2",
                ManifoldSpec::product(ManifoldSpec::hyperbolic(2, 1.0).map_err(e)?, ManifoldSpec::hyperbolic(2, 1.0).map_err(e)?)
                    .map_err(e)?,
            ),
            ("E3", ManifoldSpec::euclidean(3).map_err(e)?),
        ];
        let mut jobs = Vec::new();
        for (name, spec) in &models {
            for v in unit_vectors_where(spec, &spec.anchor(), 7, 3, |v| resolvable_tilt(spec, v)).map_err(e)? {
                jobs.push((*name, spec.clone(), v));
            }
        }
        let results: Vec<Result<Suite, String>> =
            jobs.par_iter().map(|(n, s, v)| suite_for(s, v).map_err(|x| format!("{n}: {x}"))).collect();
        let mut agg = Suite { norm_ok: true, rank_ok: true, lower_ok: true, ..Suite::default() };
        for r in results {
            let r = r?;
            agg.wronskian = agg.wronskian.max(r.wronskian);
            agg.identity = agg.identity.max(r.identity);
            agg.riccati = agg.riccati.max(r.riccati);
            agg.norm_ok &= r.norm_ok;
            agg.rank_ok &= r.rank_ok;
            agg.lower_ok &= r.lower_ok;
        }
        let ok = agg.wronskian <= 1e-7 && agg.identity <= 1e-6 && agg.riccati <= 1e-5 && agg.norm_ok && agg.rank_ok && agg.lower_ok;
        Ok((
            ok,
            format!(
                "{} vectors on H3, H2xR, H2xH2, E3: Wronskian drift {:.2e}, h(v)+h(-v)-tr D {:.2e}, Riccati vs BVP {:.2e}, norm bound {}, rank invariance {}, lower Jacobi bound {}",
                jobs.len(), agg.wronskian, agg.identity, agg.riccati, agg.norm_ok, agg.rank_ok, agg.lower_ok
            ),
        ))
    })())
}

pub fn criterion_8() -> Criterion {
    finish(8, "contraction and divergence", (|| {
        let spec = h3();
        let v = unit(&spec, &[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0])?;
        let w = horo::stable_leaf_partner(&spec, &v, &DVector::from_vec(vec![0.5, -0.3, 0.0])).map_err(e)?;
        let times: Vec<f64> = (0..=20).map(|k| 0.5 * k as f64).collect();
        let rate = horo::stable_leaf_probe(&spec, &v, &w, &times).map_err(e)?.rate.unwrap_or(f64::NAN);
        let rate_ok = (rate + 1.0).abs() <= 0.05;

        let grid: Vec<f64> = (0..=36).map(|k| 1.0 + 0.25 * k as f64).collect();
        let starts = unit_vectors(&spec, &spec.anchor(), 8, 10).map_err(e)?;
        let mut increasing = true;
        for pair in starts.chunks(2) {
            let d = pair_distances(&spec, &pair[0], &pair[1], &grid, GEODESIC_TOL).map_err(e)?;
            increasing &= d.windows(2).all(|x| x[1] > x[0]);
        }

        let mut rng = sampling::rng(8);
        let pairs: Vec<(DVector<f64>, DVector<f64>)> = (0..50)
            .map(|_| {
                let z = sampling::normal_vector(&mut rng, 5);
                let y = (0.5 * z[4]).exp();
                (DVector::from_vec(vec![z[0], z[1], y]), DVector::from_vec(vec![z[2], z[3], y]))
            })
            .collect();
        let rep = horo::horosphere_distance_check(&spec, &pairs).map_err(e)?;
        Ok((
            rate_ok && increasing && rep.all_ok,
            format!(
                "leaf decay rate {rate:.4}; divergence strictly increasing on [1, 10] for 5 pairs: {increasing}; horosphere inequality on 50 pairs: {} (max tightness {:.4})",
                rep.all_ok, rep.max_tightness
            ),
        ))
    })())
}

pub fn criterion_9() -> Criterion {
    finish(9, "2-D rigidity on H2(k = 1.5)", (|| {
        let spec = ManifoldSpec::hyperbolic(2, 1.5).map_err(e)?;
        let base = spec.anchor();
        let k = spec
            .sectional_curvature(base.as_slice(), &DVector::from_vec(vec![1.0, 0.0]), &DVector::from_vec(vec![0.0, 1.0]))
            .map_err(e)?;
        let mut h_dev = 0.0_f64;
        let mut k_dev = 0.0_f64;
        for v in unit_vectors(&spec, &base, 9, 5).map_err(e)? {
            let p = horo::profile(&spec, &v, &ProfileOptions::default()).map_err(e)?;
            h_dev = h_dev.max((p.h - 1.5).abs());
            k_dev = k_dev.max((-p.h * p.h - k).abs());
        }
        Ok((h_dev <= 1e-5 && k_dev <= 1e-4, format!("max |h - 1.5| {h_dev:.3e}; max |-h^2 - K| {k_dev:.3e} with K = {k:.10}")))
    })())
}

/// Criteria 1 to 9, in order.
pub fn all() -> Vec<Criterion> {
    let runs: [fn() -> Criterion; 9] =
        [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9];
    runs.iter().map(|f| f()).collect()
}
