//! Horospherical quantities built from the stable and unstable tensors:
//! `h(v) = tr U(v)`, `D(v) = U(v) − S(v)`, the rank, Busemann functions and
//! the scans over flow orbits, reversals and stable leaves.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{HoroError, Result};
use crate::geodesic::{closed_form_distance, distance, integrate_geodesic, GeodesicTrajectory, GEODESIC_TOL};
use crate::jacobi::{adapted_frame, stable_tensor, sym_eigenvalues, unstable_tensor, LimitOptions};
use crate::manifold::{ChartPoint, ManifoldSpec, ModelTag, TangentVector};

/// Relative kernel threshold for the rank.
pub const EPS_RANK: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileOptions {
    pub limit: LimitOptions,
    pub eps_rank: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { limit: LimitOptions::default(), eps_rank: EPS_RANK }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundChecks {
    /// `‖D‖ ≤ 2√R₀ + 1e−6`; `None` without curvature bounds.
    pub norm_d_le_2sqrt_r0: Option<bool>,
    /// `det D ≤ (2h/(n−1))^{n−1} + 1e−6`.
    pub det_trace_inequality: bool,
    /// Equality in the det-trace inequality within 1e−5.
    pub det_trace_equality: bool,
    /// With equality: largest deviation of `R_v(t)` from
    /// `−(h/(n−1))²·Id` at `t = 0, 1, 2, 3`.
    pub rigidity_residual: Option<f64>,
    /// `|h(v) + h(−v) − tr D(v)|` with `h(−v)` from an independent solve.
    pub h_plus_h_reverse_eq_trace_d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorosphericalProfile {
    pub v: TangentVector,
    /// Frame of `v^⊥` in which `S`, `U`, `D` are expressed.
    pub frame: Vec<DVector<f64>>,
    pub s: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub h: f64,
    pub det_d: f64,
    pub trace_d: f64,
    pub rank: usize,
    pub eigenvalues_d: Vec<f64>,
    pub norm_d: f64,
    /// `h(−v)` and `D(−v)` from the geodesic of `−v`, same frame.
    pub h_reverse: f64,
    pub d_reverse: DMatrix<f64>,
    pub bound_checks: BoundChecks,
    /// Largest `r` and Cauchy residual among the four limit extractions.
    pub r_used: f64,
    pub limit_residual: f64,
    pub asymmetry: f64,
}

fn rank_from(eigenvalues: &[f64], norm: f64, eps_rank: f64) -> usize {
    let thr = eps_rank * norm.max(1.0);
    1 + eigenvalues.iter().filter(|&&l| l < thr).count()
}

/// `S(v)` and `U(v)` from one trajectory over `[−r_max, r_max]`.
fn tensors(traj: &GeodesicTrajectory, opts: &LimitOptions) -> Result<(DMatrix<f64>, DMatrix<f64>, f64, f64, f64)> {
    let s = stable_tensor(traj, opts)?;
    let u = unstable_tensor(traj, opts)?;
    Ok((
        s.s,
        u.s,
        s.r_used.max(u.r_used),
        s.residual.max(u.residual),
        s.asymmetry.max(u.asymmetry),
    ))
}

/// Assembles the horospherical profile of the unit vector `v`.
pub fn profile(spec: &ManifoldSpec, v: &TangentVector, opts: &ProfileOptions) -> Result<HorosphericalProfile> {
    let frame = adapted_frame(spec, v)?;
    profile_in_frame(spec, v, frame, opts)
}

fn profile_in_frame(
    spec: &ManifoldSpec,
    v: &TangentVector,
    frame: Vec<DVector<f64>>,
    opts: &ProfileOptions,
) -> Result<HorosphericalProfile> {
    let r = opts.limit.r_max;
    let traj = integrate_geodesic(spec, v, Some(&frame), (-r, r), GEODESIC_TOL)?;
    let rev = integrate_geodesic(spec, &v.reversed(), Some(&frame), (-r, r), GEODESIC_TOL)?;
    let (s, u, r1, res1, asym1) = tensors(&traj, &opts.limit)?;
    let (s_rev, u_rev, r2, res2, asym2) = tensors(&rev, &opts.limit)?;

    let m = frame.len();
    let d = &u - &s;
    let d_reverse = &u_rev - &s_rev;
    let h = u.trace();
    let h_reverse = u_rev.trace();
    let eigenvalues_d = sym_eigenvalues(&d);
    let norm_d = eigenvalues_d.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
    let det_d = d.determinant();
    let trace_d = d.trace();
    let rank = rank_from(&eigenvalues_d, norm_d, opts.eps_rank);

    let am_gm = (2.0 * h / m as f64).powi(m as i32);
    let det_trace_equality = (det_d - am_gm).abs() <= 1e-5;
    let rigidity_residual = if det_trace_equality {
        let target = DMatrix::<f64>::identity(m, m) * -(h / m as f64).powi(2);
        let mut worst = 0.0_f64;
        for t in [0.0, 1.0, 2.0, 3.0] {
            if traj.covers(t) {
                worst = worst.max((traj.jacobi_operator(t)? - &target).amax());
            }
        }
        Some(worst)
    } else {
        None
    };
    let bound_checks = BoundChecks {
        norm_d_le_2sqrt_r0: spec.curvature_bounds().map(|b| norm_d <= 2.0 * b.r0.sqrt() + 1e-6),
        det_trace_inequality: det_d <= am_gm + 1e-6,
        det_trace_equality,
        rigidity_residual,
        h_plus_h_reverse_eq_trace_d: (h + h_reverse - trace_d).abs(),
    };
    Ok(HorosphericalProfile {
        v: v.clone(),
        frame,
        s,
        u,
        d,
        h,
        det_d,
        trace_d,
        rank,
        eigenvalues_d,
        norm_d,
        h_reverse,
        d_reverse,
        bound_checks,
        r_used: r1.max(r2),
        limit_residual: res1.max(res2),
        asymmetry: asym1.max(asym2),
    })
}

/// `1 + #{λ(D(v)) < eps_rank·max(1, ‖D(v)‖)}`.
pub fn rank_of(spec: &ManifoldSpec, v: &TangentVector, eps_rank: f64) -> Result<usize> {
    let opts = ProfileOptions { eps_rank, ..ProfileOptions::default() };
    Ok(profile(spec, v, &opts)?.rank)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanKind {
    FlowInvariance,
    Reversibility,
    StableLeafConstancy,
}

impl ScanKind {
    pub fn name(self) -> &'static str {
        match self {
            ScanKind::FlowInvariance => "flow_invariance",
            ScanKind::Reversibility => "reversibility",
            ScanKind::StableLeafConstancy => "stable_leaf_constancy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub vector: TangentVector,
    /// Flow time, or `None` for scans over a vector sample.
    pub t: Option<f64>,
    pub deviation: f64,
}

/// One evaluated sample of a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub vector: TangentVector,
    pub t: Option<f64>,
    pub h: f64,
    pub det_d: f64,
    pub trace_d: f64,
    pub rank: usize,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub kind: ScanKind,
    pub samples: usize,
    /// Max deviation of `h` (the scan's primary quantity).
    pub max_deviation: f64,
    /// Up to three worst samples, worst first.
    pub witnesses: Vec<Witness>,
    /// Requested times were dropped because the chart ended.
    pub truncated: bool,
    /// Rank equal across all samples (and their reversals, where checked).
    pub rank_consistent: bool,
    /// Named auxiliary maxima, e.g. `det_d` and `trace_d` deviations.
    pub secondary: Vec<(&'static str, f64)>,
    /// `Some(ok)` when the ρ-floor consequence of a positive `det D` floor
    /// was checkable.
    pub rho_floor_ok: Option<bool>,
    pub rows: Vec<ScanRow>,
}

fn witnesses(rows: &[ScanRow]) -> Vec<Witness> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.sort_by(|&a, &b| rows[b].deviation.total_cmp(&rows[a].deviation).then(a.cmp(&b)));
    idx.into_iter()
        .take(3)
        .map(|i| Witness { vector: rows[i].vector.clone(), t: rows[i].t, deviation: rows[i].deviation })
        .collect()
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0_f64, f64::max)
}

/// Checks the smallest eigenvalue of `D` against `α/(2√R₀)^{n−2}`, where
/// `α` is the smallest `det D` seen. Returns `None` when no positive floor
/// exists or `R₀` is unknown.
fn rho_floor(spec: &ManifoldSpec, profiles: &[&HorosphericalProfile]) -> Option<bool> {
    let b = spec.curvature_bounds()?;
    let alpha = profiles.iter().map(|p| p.det_d).fold(f64::INFINITY, f64::min);
    if !(alpha > 0.0) || !(b.r0 > 0.0) {
        return None;
    }
    let n = spec.dim() as i32;
    let rho = alpha / (2.0 * b.r0.sqrt()).powi(n - 2);
    Some(profiles.iter().all(|p| p.eigenvalues_d[0] >= rho - 1e-6))
}

/// Profiles `φ^t v` for `t` in `times` and reports the largest change of
/// `h`, `det D`, `tr D` relative to `t = 0`, plus rank constancy.
pub fn flow_invariance_scan(
    spec: &ManifoldSpec,
    v: &TangentVector,
    times: &[f64],
    opts: &ProfileOptions,
) -> Result<ScanReport> {
    let t_max = times.iter().fold(0.0_f64, |a, t| a.max(t.abs()));
    let frame = adapted_frame(spec, v)?;
    let orbit = integrate_geodesic(spec, v, Some(&frame), (-t_max, t_max), GEODESIC_TOL)?;
    let kept: Vec<f64> = times.iter().copied().filter(|&t| orbit.covers(t)).collect();
    let truncated = kept.len() < times.len();

    let base = profile(spec, v, opts)?;
    let others: Vec<Result<HorosphericalProfile>> = kept
        .par_iter()
        .map(|&t| {
            let w = orbit.tangent(t)?;
            let w = spec.normalize(&w.base, &w.components)?;
            profile(spec, &w, opts)
        })
        .collect();
    let others: Vec<HorosphericalProfile> = others.into_iter().collect::<Result<_>>()?;

    let rows: Vec<ScanRow> = kept
        .iter()
        .zip(&others)
        .map(|(&t, p)| ScanRow {
            vector: p.v.clone(),
            t: Some(t),
            h: p.h,
            det_d: p.det_d,
            trace_d: p.trace_d,
            rank: p.rank,
            deviation: (p.h - base.h).abs(),
        })
        .collect();
    let mut all: Vec<&HorosphericalProfile> = vec![&base];
    all.extend(others.iter());
    Ok(ScanReport {
        kind: ScanKind::FlowInvariance,
        samples: rows.len(),
        max_deviation: max_of(rows.iter().map(|r| r.deviation)),
        witnesses: witnesses(&rows),
        truncated,
        rank_consistent: others.iter().all(|p| p.rank == base.rank),
        secondary: vec![
            ("det_d", max_of(others.iter().map(|p| (p.det_d - base.det_d).abs()))),
            ("trace_d", max_of(others.iter().map(|p| (p.trace_d - base.trace_d).abs()))),
        ],
        rho_floor_ok: rho_floor(spec, &all),
        rows,
    })
}

/// Reports `max |h(v) − h(−v)|` over `vectors`, together with the identity
/// residual `h(v) + h(−v) − tr D(v)` and `‖D(−v) − D(v)‖`.
pub fn reversibility_scan(spec: &ManifoldSpec, vectors: &[TangentVector], opts: &ProfileOptions) -> Result<ScanReport> {
    let profiles: Vec<Result<HorosphericalProfile>> = vectors.par_iter().map(|v| profile(spec, v, opts)).collect();
    let profiles: Vec<HorosphericalProfile> = profiles.into_iter().collect::<Result<_>>()?;
    let rows: Vec<ScanRow> = profiles
        .iter()
        .map(|p| ScanRow {
            vector: p.v.clone(),
            t: None,
            h: p.h,
            det_d: p.det_d,
            trace_d: p.trace_d,
            rank: p.rank,
            deviation: (p.h - p.h_reverse).abs(),
        })
        .collect();
    // rank(−v) from D(−v) with the same threshold rule
    let rank_reversal_ok = profiles.iter().all(|p| {
        let ev = sym_eigenvalues(&p.d_reverse);
        let nrm = ev.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
        rank_from(&ev, nrm, opts.eps_rank) == p.rank
    });
    Ok(ScanReport {
        kind: ScanKind::Reversibility,
        samples: rows.len(),
        max_deviation: max_of(rows.iter().map(|r| r.deviation)),
        witnesses: witnesses(&rows),
        truncated: false,
        rank_consistent: rank_reversal_ok,
        secondary: vec![
            ("identity_residual", max_of(profiles.iter().map(|p| p.bound_checks.h_plus_h_reverse_eq_trace_d))),
            ("d_reverse", max_of(profiles.iter().map(|p| (&p.d_reverse - &p.d).amax()))),
        ],
        rho_floor_ok: None,
        rows,
    })
}

/// Busemann function `b_v(x) = lim d(c_v(T), x) − T`.
///
/// Evaluated at `T = 1, √2, 2, 2√2, …, T_max`. Curved directions converge
/// exponentially and are accepted on the raw iterates; directions with a
/// flat component converge like `1/T`, so the last four iterates are also
/// Richardson-extrapolated to third order in `1/T`. Either sequence
/// stopping within `tol` ends the search. The finer grid matters on
/// half-space charts, where a tilted ray loses precision past `T ≈ 50`.
pub fn busemann(spec: &ManifoldSpec, v: &TangentVector, x: &ChartPoint, t_max: f64, tol: f64) -> Result<f64> {
    if !(t_max >= 2.0) || !(tol > 0.0) {
        return Err(HoroError::InvalidParams(format!("busemann needs T_max >= 2 and tol > 0, got {t_max}, {tol}")));
    }
    if !spec.in_domain(x.as_slice()) {
        return Err(HoroError::OutsideChart { point: x.as_slice().to_vec() });
    }
    let traj = integrate_geodesic(spec, v, None, (0.0, t_max), GEODESIC_TOL)?;
    let mut raw: Vec<f64> = Vec::new();
    let mut extrapolated: Vec<f64> = Vec::new();
    let mut t = 1.0;
    while t <= t_max * (1.0 + 1e-12) && traj.covers(t) {
        let p = traj.point(t)?;
        let d = match closed_form_distance(spec, p.as_slice(), x.as_slice()) {
            Some(d) => d,
            None => distance(spec, &p, x)?,
        };
        let b = d - t;
        if let Some(prev) = raw.last() {
            if (b - prev).abs() <= tol {
                return Ok(b);
            }
        }
        raw.push(b);
        if raw.len() >= RICHARDSON_DEPTH {
            let e = richardson(&raw[raw.len() - RICHARDSON_DEPTH..]);
            if let Some(prev) = extrapolated.last() {
                if (e - prev).abs() <= tol {
                    return Ok(e);
                }
            }
            extrapolated.push(e);
        }
        t *= std::f64::consts::SQRT_2;
    }
    let seq = if extrapolated.len() >= 2 { &extrapolated } else { &raw };
    let k = seq.len();
    Err(HoroError::BusemannNotConverged {
        t_max,
        last: [
            if k >= 2 { seq[k - 2] } else { f64::NAN },
            seq.last().copied().unwrap_or(f64::NAN),
        ],
    })
}

/// Full Richardson table in `h = 1/T` for values at `T, 2T, 4T, …`.
const RICHARDSON_DEPTH: usize = 4;

/// Eliminates `1/T, …, 1/T^{k−1}` from `k` iterates on a `√2`-ratio grid.
fn richardson(vals: &[f64]) -> f64 {
    let mut col = vals.to_vec();
    for j in 1..vals.len() {
        let f = std::f64::consts::SQRT_2.powi(j as i32) - 1.0;
        col = col.windows(2).map(|w| w[1] + (w[1] - w[0]) / f).collect();
    }
    col[0]
}

/// `−grad b_v(x)` in chart components, by central differences of
/// [`busemann`] with step `h`.
pub fn busemann_gradient_field(
    spec: &ManifoldSpec,
    v: &TangentVector,
    x: &ChartPoint,
    h: f64,
    t_max: f64,
    tol: f64,
) -> Result<DVector<f64>> {
    let n = spec.dim();
    let mut grad = DVector::zeros(n);
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        grad[i] = (busemann(spec, v, &xp, t_max, tol)? - busemann(spec, v, &xm, t_max, tol)?) / (2.0 * h);
    }
    let g = spec.metric(x.as_slice())?;
    let up = g.lu().solve(&grad).ok_or(HoroError::SingularMetric { point: x.as_slice().to_vec() })?;
    Ok(-up)
}

/// A vector on the stable leaf of `v`: footpoint moved by `shift` within
/// the horosphere through `π(v)`, velocity `−grad b_v` there.
///
/// Available on Euclidean factors (any `v`, shift taken orthogonal to `v`),
/// on hyperbolic factors for `v` pointing straight up (shift horizontal),
/// and on products of these.
pub fn stable_leaf_partner(spec: &ManifoldSpec, v: &TangentVector, shift: &DVector<f64>) -> Result<TangentVector> {
    if shift.len() != spec.dim() {
        return Err(HoroError::InvalidParams("shift has the wrong dimension".into()));
    }
    let w = leaf_partner_raw(spec, &v.base, &v.components, shift)?;
    spec.normalize(&w.base, &w.components)
}

fn leaf_partner_raw(
    spec: &ManifoldSpec,
    base: &ChartPoint,
    comps: &DVector<f64>,
    shift: &DVector<f64>,
) -> Result<TangentVector> {
    match spec.tag() {
        ModelTag::Euclidean => {
            let c2 = comps.norm_squared();
            let s = if c2 > 0.0 { shift - comps * (comps.dot(shift) / c2) } else { shift.clone() };
            Ok(TangentVector::new(base + s, comps.clone()))
        }
        ModelTag::Hyperbolic { .. } => {
            let n = base.len();
            let horizontal = comps.rows(0, n - 1).amax();
            if comps.amax() == 0.0 {
                let mut p = base.clone();
                for i in 0..n - 1 {
                    p[i] += shift[i];
                }
                return Ok(TangentVector::new(p, comps.clone()));
            }
            if horizontal > 1e-12 * comps.amax() || comps[n - 1] <= 0.0 {
                return Err(HoroError::Unsupported(
                    "stable leaves on half-space factors are constructed for upward vectors only".into(),
                ));
            }
            let mut p = base.clone();
            for i in 0..n - 1 {
                p[i] += shift[i];
            }
            Ok(TangentVector::new(p, comps.clone()))
        }
        ModelTag::Product(..) => {
            let (l, r) = spec.factors().expect("product has factors");
            let k = l.dim();
            let part = |s: &ManifoldSpec, off: usize, len: usize| {
                leaf_partner_raw(
                    s,
                    &base.rows(off, len).into_owned(),
                    &comps.rows(off, len).into_owned(),
                    &shift.rows(off, len).into_owned(),
                )
            };
            let a = part(l, 0, k)?;
            let b = part(r, k, spec.dim() - k)?;
            Ok(TangentVector::new(
                crate::manifold::concat(&a.base, &b.base),
                crate::manifold::concat(&a.components, &b.components),
            ))
        }
        _ => Err(HoroError::Unsupported(format!(
            "stable leaf construction is not available for {:?}",
            spec.tag()
        ))),
    }
}

/// Distances `d(c_v(t), c_w(t))` with a fitted exponential rate.
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySeries {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    /// Least-squares slope of `log d` against `t` over the second half of
    /// the samples; `None` if a distance vanishes there.
    pub rate: Option<f64>,
}

/// Paired geodesic distances at `samples` (times ≥ 0).
pub fn pair_distance_series(
    spec: &ManifoldSpec,
    v: &TangentVector,
    w: &TangentVector,
    samples: &[f64],
) -> Result<Vec<f64>> {
    let t_max = samples.iter().fold(0.0_f64, |a, &t| a.max(t));
    let cv = integrate_geodesic(spec, v, None, (0.0, t_max), GEODESIC_TOL)?;
    let cw = integrate_geodesic(spec, w, None, (0.0, t_max), GEODESIC_TOL)?;
    samples
        .iter()
        .map(|&t| {
            let (p, q) = (cv.point(t)?, cw.point(t)?);
            distance(spec, &p, &q)
        })
        .collect()
}

/// Fits `log d ≈ a + rate·t` on the tail half of the samples.
pub fn decay_rate(times: &[f64], distances: &[f64]) -> Option<f64> {
    let start = times.len() / 2;
    let (ts, ds) = (&times[start..], &distances[start..]);
    if ts.len() < 2 || ds.iter().any(|&d| !(d > 0.0)) {
        return None;
    }
    let ys: Vec<f64> = ds.iter().map(|d| d.ln()).collect();
    let k = ts.len() as f64;
    let (mt, my) = (ts.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = ts.iter().zip(&ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = ts.iter().map(|t| (t - mt) * (t - mt)).sum();
    if sxx > 0.0 {
        Some(sxy / sxx)
    } else {
        None
    }
}

/// Distance table between `c_v` and `c_w` for `w` on the stable leaf of `v`.
pub fn stable_leaf_probe(spec: &ManifoldSpec, v: &TangentVector, w_on_leaf: &TangentVector, samples: &[f64]) -> Result<DecaySeries> {
    if spec.is_custom() {
        return Err(HoroError::Unsupported("stable leaf probes need an analytic model".into()));
    }
    let distances = pair_distance_series(spec, v, w_on_leaf, samples)?;
    Ok(DecaySeries { times: samples.to_vec(), rate: decay_rate(samples, &distances), distances })
}

/// `h` along the stable leaf: `|h(w) − h(v)|` for partners of `v` moved by
/// each of `shifts`.
pub fn leaf_constancy_scan(
    spec: &ManifoldSpec,
    v: &TangentVector,
    shifts: &[DVector<f64>],
    opts: &ProfileOptions,
) -> Result<ScanReport> {
    let base = profile(spec, v, opts)?;
    let partners: Vec<TangentVector> = shifts.iter().map(|s| stable_leaf_partner(spec, v, s)).collect::<Result<_>>()?;
    let profiles: Vec<Result<HorosphericalProfile>> = partners.par_iter().map(|w| profile(spec, w, opts)).collect();
    let profiles: Vec<HorosphericalProfile> = profiles.into_iter().collect::<Result<_>>()?;
    let rows: Vec<ScanRow> = profiles
        .iter()
        .map(|p| ScanRow {
            vector: p.v.clone(),
            t: None,
            h: p.h,
            det_d: p.det_d,
            trace_d: p.trace_d,
            rank: p.rank,
            deviation: (p.h - base.h).abs(),
        })
        .collect();
    Ok(ScanReport {
        kind: ScanKind::StableLeafConstancy,
        samples: rows.len(),
        max_deviation: max_of(rows.iter().map(|r| r.deviation)),
        witnesses: witnesses(&rows),
        truncated: false,
        rank_consistent: profiles.iter().all(|p| p.rank == base.rank),
        secondary: vec![],
        rho_floor_ok: None,
        rows,
    })
}

/// One pair of a horosphere-distance check.
#[derive(Debug, Clone, PartialEq)]
pub struct HorosphereRow {
    pub d: f64,
    pub d_horosphere: f64,
    pub bound: f64,
    /// `d_H / bound`, 0 for coincident points.
    pub tightness: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorosphereReport {
    pub rows: Vec<HorosphereRow>,
    pub all_ok: bool,
    pub max_tightness: f64,
}

/// Checks `d_H(x, y) ≤ e^{d(x,y)√R₀/2}·d(x,y)` for pairs on a common
/// horosphere `{y_n = const}` of a half-space model, where the intrinsic
/// distance is the flat one scaled by `1/(k·y_n)`.
pub fn horosphere_distance_check(spec: &ManifoldSpec, pairs: &[(ChartPoint, ChartPoint)]) -> Result<HorosphereReport> {
    let k = match spec.tag() {
        ModelTag::Hyperbolic { k } => k,
        other => return Err(HoroError::Unsupported(format!("horosphere distances need a half-space model, got {other:?}"))),
    };
    let r0 = k * k;
    let n = spec.dim();
    let mut rows = Vec::with_capacity(pairs.len());
    for (p, q) in pairs {
        for x in [p, q] {
            if !spec.in_domain(x.as_slice()) {
                return Err(HoroError::OutsideChart { point: x.as_slice().to_vec() });
            }
        }
        let height = p[n - 1];
        if (q[n - 1] - height).abs() > 1e-12 * height {
            return Err(HoroError::InvalidParams(format!(
                "points at heights {} and {} are not on one horosphere",
                height,
                q[n - 1]
            )));
        }
        let d = distance(spec, p, q)?;
        let d_horosphere = (p - q).norm() / (k * height);
        let bound = (d * r0.sqrt() / 2.0).exp() * d;
        let ok = d_horosphere <= bound * (1.0 + 1e-12) + 1e-15;
        let tightness = if bound > 0.0 { d_horosphere / bound } else { 0.0 };
        rows.push(HorosphereRow { d, d_horosphere, bound, tightness, ok });
    }
    Ok(HorosphereReport {
        all_ok: rows.iter().all(|r| r.ok),
        max_tightness: max_of(rows.iter().map(|r| r.tightness)),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn unit(spec: &ManifoldSpec, p: &[f64], c: &[f64]) -> TangentVector {
        spec.normalize(&dv(p), &dv(c)).unwrap()
    }

    fn h2r() -> ManifoldSpec {
        ManifoldSpec::product(ManifoldSpec::hyperbolic(2, 1.0).unwrap(), ManifoldSpec::euclidean(1).unwrap()).unwrap()
    }

    #[test]
    fn hyperbolic_profile() {
        let h3 = ManifoldSpec::hyperbolic(3, 1.0).unwrap();
        let p = profile(&h3, &unit(&h3, &[0.2, -0.1, 1.3], &[0.3, 0.5, 0.2]), &ProfileOptions::default()).unwrap();
        assert!((p.h - 2.0).abs() < 1e-9, "{}", p.h);
        assert!((&p.d - DMatrix::identity(2, 2) * 2.0).amax() < 1e-9);
        assert!((p.det_d - 4.0).abs() < 1e-8);
        assert!((p.trace_d - 4.0).abs() < 1e-8);
        assert_eq!(p.rank, 1);
        assert!(p.bound_checks.det_trace_equality);
        assert!(p.bound_checks.rigidity_residual.unwrap() < 1e-4);
        assert_eq!(p.bound_checks.norm_d_le_2sqrt_r0, Some(true));
        assert!(p.bound_checks.h_plus_h_reverse_eq_trace_d < 1e-9);
    }

    #[test]
    fn flat_profile() {
        let e3 = ManifoldSpec::euclidean(3).unwrap();
        let p = profile(&e3, &unit(&e3, &[0.0; 3], &[1.0, 2.0, 2.0]), &ProfileOptions::default()).unwrap();
        assert!(p.h.abs() < 1e-10);
        assert!(p.d.amax() < 1e-10);
        assert_eq!(p.rank, 3);
    }

    #[test]
    fn product_profile() {
        let m = h2r();
        let p = profile(&m, &unit(&m, &[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]), &ProfileOptions::default()).unwrap();
        assert!((p.h - 1.0).abs() < 1e-6);
        let mut ev = p.eigenvalues_d.clone();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-6 && (ev[1] - 2.0).abs() < 1e-6, "{ev:?}");
        assert!(p.det_d.abs() < 1e-6);
        assert_eq!(p.rank, 2);
    }

    #[test]
    fn mixed_direction_in_product_of_planes_is_null() {
        let h = ManifoldSpec::hyperbolic(2, 1.0).unwrap();
        let m = ManifoldSpec::product(h.clone(), h).unwrap();
        let v = unit(&m, &[0.0, 1.0, 0.0, 1.0], &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(rank_of(&m, &v, EPS_RANK).unwrap(), 2);
    }

    #[test]
    fn two_dimensional_h_matches_curvature() {
        let h2 = ManifoldSpec::hyperbolic(2, 1.5).unwrap();
        let v = unit(&h2, &[0.3, 0.7], &[1.0, -0.4]);
        let p = profile(&h2, &v, &ProfileOptions::default()).unwrap();
        assert!((p.h - 1.5).abs() < 1e-6 && (p.h_reverse - 1.5).abs() < 1e-6);
        let k = h2.sectional_curvature(&[0.3, 0.7], &dv(&[1.0, 0.0]), &dv(&[0.0, 1.0])).unwrap();
        assert!((-p.h * p.h - k).abs() < 1e-5);
    }

    #[test]
    fn flow_scan_on_tilted_product() {
        let m = h2r();
        let v = unit(&m, &[0.0, 1.0, 0.0], &[0.0, 0.6, 0.8]);
        let rep = flow_invariance_scan(&m, &v, &[0.5, 1.0, 2.0, 4.0], &ProfileOptions::default()).unwrap();
        assert_eq!(rep.samples, 4);
        assert!(rep.max_deviation < 1e-5, "{}", rep.max_deviation);
        assert!(rep.rows.iter().all(|r| (r.h - 0.6).abs() < 1e-5));
        assert!(rep.rank_consistent);
        assert!(!rep.truncated);
        assert_eq!(rep.witnesses.len(), 3);
    }

    #[test]
    fn reversibility_on_hyperbolic_space() {
        let h3 = ManifoldSpec::hyperbolic(3, 1.0).unwrap();
        let vs = crate::sampling::unit_vectors(&h3, &h3.anchor(), 11, 4).unwrap();
        let rep = reversibility_scan(&h3, &vs, &ProfileOptions::default()).unwrap();
        assert!(rep.max_deviation < 1e-8);
        assert!(rep.rank_consistent);
        assert!(rep.secondary.iter().all(|(_, x)| *x < 1e-8));
    }

    #[test]
    fn busemann_examples() {
        let h2 = ManifoldSpec::hyperbolic(2, 1.0).unwrap();
        let up = unit(&h2, &[0.0, 1.0], &[0.0, 1.0]);
        let b = busemann(&h2, &up, &dv(&[0.0, std::f64::consts::E]), 64.0, 1e-10).unwrap();
        assert!((b + 1.0).abs() < 1e-6);
        // off-axis points: b = −log y still
        let b = busemann(&h2, &up, &dv(&[0.7, 2.0]), 64.0, 1e-10).unwrap();
        assert!((b + 2f64.ln()).abs() < 1e-6, "{b}");

        let e3 = ManifoldSpec::euclidean(3).unwrap();
        let e1 = unit(&e3, &[0.0; 3], &[1.0, 0.0, 0.0]);
        let b = busemann(&e3, &e1, &dv(&[2.5, 0.0, 0.0]), 64.0, 1e-10).unwrap();
        assert!((b + 2.5).abs() < 1e-9);
        let b = busemann(&e3, &e1, &dv(&[2.5, 1.0, -2.0]), 512.0, 1e-6).unwrap();
        assert!((b + 2.5).abs() < 1e-6, "{b}");
    }

    #[test]
    fn product_busemann_splits() {
        let m = h2r();
        let v = unit(&m, &[0.0, 1.0, 0.0], &[0.0, 0.6, 0.8]);
        let x = dv(&[0.4, 2.5, -1.2]);
        let b = busemann(&m, &v, &x, 256.0, 1e-6).unwrap();
        let expect = 0.6 * -(2.5f64.ln()) + 0.8 * -(-1.2);
        assert!((b - expect).abs() < 1e-5, "{b} vs {expect}");
    }

    #[test]
    fn busemann_gradient_is_minus_v() {
        let h2 = ManifoldSpec::hyperbolic(2, 1.0).unwrap();
        let up = unit(&h2, &[0.0, 1.0], &[0.0, 1.0]);
        let g = busemann_gradient_field(&h2, &up, &up.base, 1e-3, 64.0, 1e-10).unwrap();
        assert!((g - &up.components).amax() < 1e-6);
    }

    #[test]
    fn busemann_rejects_short_horizon() {
        let e3 = ManifoldSpec::euclidean(3).unwrap();
        let e1 = unit(&e3, &[0.0; 3], &[1.0, 0.0, 0.0]);
        let r = busemann(&e3, &e1, &dv(&[0.0, 3.0, 0.0]), 2.0, 1e-12);
        assert!(matches!(r, Err(HoroError::BusemannNotConverged { .. })), "{r:?}");
    }

    #[test]
    fn stable_leaf_contracts_at_unit_rate() {
        let h3 = ManifoldSpec::hyperbolic(3, 1.0).unwrap();
        let v = unit(&h3, &[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0]);
        let w = stable_leaf_partner(&h3, &v, &dv(&[1.0, 0.0, 0.0])).unwrap();
        let times: Vec<f64> = (0..=10).map(f64::from).collect();
        let series = stable_leaf_probe(&h3, &v, &w, &times).unwrap();
        assert!((series.rate.unwrap() + 1.0).abs() < 0.05);

        let e3 = ManifoldSpec::euclidean(3).unwrap();
        let v = unit(&e3, &[0.0; 3], &[0.0, 0.0, 1.0]);
        let w = stable_leaf_partner(&e3, &v, &dv(&[0.5, 0.0, 0.0])).unwrap();
        let series = stable_leaf_probe(&e3, &v, &w, &times).unwrap();
        assert!(series.distances.iter().all(|d| (d - 0.5).abs() < 1e-9));
        assert!(series.rate.unwrap().abs() < 1e-9);
    }

    #[test]
    fn product_leaf_keeps_flat_offset() {
        let m = h2r();
        let v = unit(&m, &[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]);
        let w = stable_leaf_partner(&m, &v, &dv(&[1.0, 0.0, 0.3])).unwrap();
        let series = stable_leaf_probe(&m, &v, &w, &[0.0, 5.0, 10.0, 20.0]).unwrap();
        assert!((series.distances[3] - 0.3).abs() < 1e-6, "{:?}", series.distances);
    }

    #[test]
    fn leaf_needs_analytic_construction() {
        let h3 = ManifoldSpec::hyperbolic(3, 1.0).unwrap();
        let tilted = unit(&h3, &[0.0, 0.0, 1.0], &[1.0, 0.0, 1.0]);
        assert!(matches!(stable_leaf_partner(&h3, &tilted, &dv(&[1.0, 0.0, 0.0])), Err(HoroError::Unsupported(_))));
        let sl = ManifoldSpec::sl2r(-2.0, 1.0).unwrap();
        let v = unit(&sl, &[0.0; 3], &[0.0, 0.0, 1.0]);
        assert!(stable_leaf_partner(&sl, &v, &dv(&[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn horosphere_distance_examples() {
        let h3 = ManifoldSpec::hyperbolic(3, 1.0).unwrap();
        // chord 2 sinh(d/2) at height 1 gives ambient distance d
        let at = |d: f64| (dv(&[0.0, 0.0, 1.0]), dv(&[2.0 * (d / 2.0).sinh(), 0.0, 1.0]));
        let rep = horosphere_distance_check(&h3, &[at(1.0), at(4.0), (dv(&[0.0, 0.0, 1.0]), dv(&[0.0, 0.0, 1.0]))]).unwrap();
        assert!(rep.all_ok);
        assert!((rep.rows[0].d - 1.0).abs() < 1e-12);
        assert!((rep.rows[0].d_horosphere - 1.0421906).abs() < 1e-7);
        assert!((rep.rows[0].bound - 1.6487213).abs() < 1e-7);
        assert!((rep.rows[1].d_horosphere - 7.2537208).abs() < 1e-7);
        assert!((rep.rows[1].bound - 29.556224).abs() < 1e-6);
        assert_eq!(rep.rows[2].d_horosphere, 0.0);
        assert!(horosphere_distance_check(&h3, &[(dv(&[0.0, 0.0, 1.0]), dv(&[0.0, 0.0, 2.0]))]).is_err());
    }
}
