//! One pipeline per experiment name.

use std::f64::consts::PI;
use std::time::Instant;

use horolab_core::datri::{self, RootKind};
use horolab_core::geodesic::{integrate_geodesic, GEODESIC_TOL};
use horolab_core::horospherical::{self as horo, ProfileOptions};
use horolab_core::jacobi::{
    self, bvp_stable_approx, equilibrated_sigma_min, jacobi_path, jacobi_trajectory, operator_norm, stable_tensor,
    sym_eigenvalues, wronskian, LimitOptions, JACOBI_TOL,
};
use horolab_core::sampling::{self, resolvable_tilt};
use horolab_core::{ChartPoint, DerivativeMode, HoroError, ManifoldSpec, ModelTag, TangentVector};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::{Config, ConfigError, ExperimentConfig, ManifoldConfig};
use crate::error::CliError;
use crate::report::{config_hash, json_float, Cell, ExperimentReport, Summary};

/// `(name, pipeline)` for every experiment, as printed by
/// `list-experiments` and `--help`.
pub const EXPERIMENTS: &[(&str, &str)] = &[
    ("curvature-check", "seeded chart points -> analytic vs finite-difference Christoffel symbols, Riemann symmetries, first Bianchi identity, Jacobi operator symmetry, coordinate sectional curvatures"),
    ("jacobi", "seeded unit vectors -> A_v(t) on the time grid: det A, equilibrated smallest singular value, Wronskian drift against J(0)=Id, J'(0)=0"),
    ("stable-tensor", "seeded unit vectors -> two-point tensors S'_{v,r}(0) for r_values, their monotonicity, and the doubling limit S(v)"),
    ("profile", "seeded unit vectors -> S(v), U(v), D(v), h(v), rank and the bound checks"),
    ("flow-scan", "seeded unit vectors -> profiles along the geodesic flow at the time grid; h, det D, tr D and rank invariance"),
    ("reversibility-scan", "seeded unit vectors -> profiles of v and -v; h(v) - h(-v), identity h(v)+h(-v) = tr D(v), rank under reversal"),
    ("busemann", "one direction, seeded or listed points -> Busemann values; on products the split into factor Busemann functions"),
    ("leaf-probe", "one direction, seeded or listed shifts -> stable-leaf partners, paired geodesic distances and fitted decay rates"),
    ("conjugate-scan", "directions (given, the vertical line on sl2r, the direction grid on heisenberg, else seeded) -> det A_v zeros up to T"),
    ("datri-check", "seeded unit vectors -> det A_v(t) against det A_{-v}(t) and against the mean over v"),
    ("sl2-verify", "sl2r only: closed-form Jacobi coefficients along (t, 0, s) vs the integrated Jacobi field, frame curvature table, conjugate time"),
];

fn bad(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config(ConfigError { line: None, field: field.into(), message: message.into() })
}

fn base_point(cfg: &Config, spec: &ManifoldSpec) -> Result<ChartPoint, CliError> {
    match &cfg.sampling.base {
        None => Ok(spec.anchor()),
        Some(b) if b.len() != spec.dim() => Err(bad("sampling.base", format!("expected {} coordinates", spec.dim()))),
        Some(b) if !spec.in_domain(b) => Err(bad("sampling.base", "point lies outside the chart")),
        Some(b) => Ok(DVector::from_column_slice(b)),
    }
}

fn vector_at(spec: &ManifoldSpec, base: &ChartPoint, c: &[f64], field: &str) -> Result<TangentVector, CliError> {
    if c.len() != spec.dim() {
        return Err(bad(field, format!("expected {} components", spec.dim())));
    }
    Ok(spec.normalize(base, &DVector::from_column_slice(c))?)
}

/// Seeded unit vectors at the base point; limit-based experiments keep
/// only directions whose limits resolve (see `resolvable_tilt`).
fn vectors(cfg: &Config, spec: &ManifoldSpec, for_limits: bool) -> Result<Vec<TangentVector>, CliError> {
    let base = base_point(cfg, spec)?;
    let (seed, count) = (cfg.sampling.seed, cfg.sampling.count);
    Ok(if for_limits {
        sampling::unit_vectors_where(spec, &base, seed, count, |v| resolvable_tilt(spec, v))?
    } else {
        sampling::unit_vectors(spec, &base, seed, count)?
    })
}

/// Seeded chart points `base + ½z`, halved towards `base` until inside.
fn points(cfg: &Config, spec: &ManifoldSpec) -> Result<Vec<ChartPoint>, CliError> {
    let base = base_point(cfg, spec)?;
    let mut rng = sampling::rng(cfg.sampling.seed);
    Ok((0..cfg.sampling.count)
        .map(|_| {
            let z = sampling::normal_vector(&mut rng, spec.dim());
            let mut scale = 0.5;
            loop {
                let p = &base + &z * scale;
                if spec.in_domain(p.as_slice()) {
                    break p;
                }
                scale *= 0.5;
            }
        })
        .collect())
}

fn collect<T>(items: Vec<horolab_core::Result<T>>) -> Result<Vec<T>, CliError> {
    Ok(items.into_iter().collect::<horolab_core::Result<Vec<T>>>()?)
}

fn limit_options(cfg: &Config) -> LimitOptions {
    LimitOptions { tol: cfg.tolerance("limit"), ..LimitOptions::default() }
}

fn profile_options(cfg: &Config) -> ProfileOptions {
    ProfileOptions { limit: limit_options(cfg), eps_rank: cfg.tolerance("rank") }
}

struct Outcome {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
    max_deviation: f64,
    failures: Vec<String>,
    fields: Map<String, Value>,
}

impl Outcome {
    fn new(columns: Vec<&'static str>) -> Self {
        Self { columns, rows: Vec::new(), max_deviation: 0.0, failures: Vec::new(), fields: Map::new() }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn deviation(&mut self, d: f64) {
        self.max_deviation = if d.is_nan() { f64::NAN } else { self.max_deviation.max(d) };
    }
}

/// Runs the configured experiment.
pub fn run(cfg: &Config) -> Result<ExperimentReport, CliError> {
    let start = Instant::now();
    let spec = cfg.manifold.build()?;
    let out = match &cfg.experiment {
        ExperimentConfig::CurvatureCheck {} => curvature_check(cfg, &spec)?,
        ExperimentConfig::Jacobi {} => jacobi_experiment(cfg, &spec)?,
        ExperimentConfig::StableTensor { r_values } => stable(cfg, &spec, r_values.as_deref())?,
        ExperimentConfig::Profile {} => profiles(cfg, &spec)?,
        ExperimentConfig::FlowScan {} => flow_scan(cfg, &spec)?,
        ExperimentConfig::ReversibilityScan {} => reversibility(cfg, &spec)?,
        ExperimentConfig::Busemann { direction, points, t_max } => {
            busemann(cfg, &spec, direction.as_deref(), points.as_deref(), t_max.unwrap_or(256.0))?
        }
        ExperimentConfig::LeafProbe { direction, shifts } => leaf_probe(cfg, &spec, direction.as_deref(), shifts.as_deref())?,
        ExperimentConfig::ConjugateScan { horizon, dt, direction, expected_first_conjugate_time } => conjugate_scan(
            cfg,
            &spec,
            *horizon,
            dt.unwrap_or(0.05),
            direction.as_deref(),
            *expected_first_conjugate_time,
        )?,
        ExperimentConfig::DatriCheck { expect_harmonic } => datri_check(cfg, &spec, *expect_harmonic)?,
        ExperimentConfig::Sl2Verify {} => sl2_verify(cfg, &spec)?,
    };
    Ok(ExperimentReport {
        experiment: cfg.experiment.name().to_string(),
        config_echo: cfg.echo(),
        columns: out.columns,
        rows: out.rows,
        summary: Summary {
            pass: out.failures.is_empty(),
            max_deviation: out.max_deviation,
            runtime_ms: start.elapsed().as_millis(),
            failures: out.failures,
        },
        fields: out.fields,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(cfg),
    })
}

fn curvature_check(cfg: &Config, spec: &ManifoldSpec) -> Result<Outcome, CliError> {
    let mut o = Outcome::new(vec![
        "point_index",
        "christoffel_rel_gap",
        "antisymmetry",
        "bianchi",
        "jacobi_asymmetry",
        "sectional_min",
        "sectional_max",
    ]);
    let (tol_c, tol_s, tol_j) = (cfg.tolerance("christoffel"), cfg.tolerance("symmetry"), cfg.tolerance("jacobi_symmetry"));
    let pts = points(cfg, spec)?;
    let dirs = sampling::unit_vectors(spec, &spec.anchor(), cfg.sampling.seed ^ 0x9e37_79b9_7f4a_7c15, pts.len())?;
    let fd = spec.with_derivative_mode(DerivativeMode::finite_difference());
    let n = spec.dim();
    let rows: Vec<horolab_core::Result<(Option<f64>, f64, f64, f64, f64, f64)>> = pts
        .par_iter()
        .zip(dirs.par_iter())
        .map(|(p, d)| {
            let x = p.as_slice();
            let gap = if spec.is_custom() {
                None
            } else {
                let exact = spec.christoffel(x)?;
                Some(exact.max_abs_diff(&fd.christoffel(x)?) / exact.max_abs().max(1.0))
            };
            let c = spec.curvature_at(x)?;
            let scale = c.riemann.max_abs().max(1.0);
            let v = spec.normalize(p, &d.components)?;
            let r = spec.jacobi_operator_raw(&v, &spec.orthonormal_frame(&v)?)?;
            let mut ks = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    let (mut u, mut w) = (DVector::zeros(n), DVector::zeros(n));
                    u[i] = 1.0;
                    w[j] = 1.0;
                    ks.push(c.sectional(&u, &w)?);
                }
            }
            let (kmin, kmax) = ks.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &k| (a.min(k), b.max(k)));
            Ok((
                gap,
                c.antisymmetry_residual() / scale,
                c.bianchi_residual() / scale,
                (&r - r.transpose()).amax(),
                kmin,
                kmax,
            ))
        })
        .collect();
    for (i, (gap, anti, bianchi, jac, kmin, kmax)) in collect(rows)?.into_iter().enumerate() {
        if let Some(g) = gap {
            o.check(g <= tol_c, || format!("point {i}: Christoffel gap {g:e} > {tol_c:e}"));
            o.deviation(g);
        }
        o.check(anti <= tol_s, || format!("point {i}: antisymmetry residual {anti:e}"));
        o.check(bianchi <= tol_s, || format!("point {i}: Bianchi residual {bianchi:e}"));
        o.check(jac <= tol_j, || format!("point {i}: Jacobi operator asymmetry {jac:e} > {tol_j:e}"));
        o.rows.push(vec![i.into(), gap.into(), anti.into(), bianchi.into(), jac.into(), kmin.into(), kmax.into()]);
    }
    Ok(o)
}

fn jacobi_experiment(cfg: &Config, spec: &ManifoldSpec) -> Result<Outcome, CliError> {
    let mut o = Outcome::new(vec!["v_index", "t", "det_A", "sigma_min", "wronskian_drift"]);
    let tol = cfg.tolerance("wronskian");
    let grid = &cfg.sampling.time_grid;
    let t_max = grid.iter().fold(0.0_f64, |a, &t| a.max(t));
    let vs = vectors(cfg, spec, false)?;
    let m = spec.dim() - 1;
    let per: Vec<horolab_core::Result<Vec<(f64, f64, f64, f64)>>> = vs
        .par_iter()
        .map(|v| {
            let traj = integrate_geodesic(spec, v, None, (0.0, t_max), GEODESIC_TOL)?;
            if !traj.covers(t_max) {
                return Err(HoroError::ChartExit { t: traj.t_span().1 });
            }
            let data = [(DMatrix::zeros(m, m), DMatrix::identity(m, m)), (DMatrix::identity(m, m), DMatrix::zeros(m, m))];
            let path = jacobi_path(&traj, 0.0, &data, t_max, JACOBI_TOL)?;
            grid.iter()
                .map(|&t| {
                    let (a, b) = (path.state(0, t)?, path.state(1, t)?);
                    let drift = operator_norm(&(wronskian(&a, &b)?.omega - DMatrix::identity(m, m)));
                    Ok((t, a.j.determinant(), equilibrated_sigma_min(&a.j, &a.j_prime), drift))
                })
                .collect()
        })
        .collect();
    for (i, rows) in collect(per)?.into_iter().enumerate() {
        for (t, det, sigma, drift) in rows {
            o.check(drift <= tol, || format!("v {i}, t = {t}: Wronskian drift {drift:e} > {tol:e}"));
            o.deviation(drift);
            o.rows.push(vec![i.into(), t.into(), det.into(), sigma.into(), drift.into()]);
        }
    }
    Ok(o)
}

fn stable(cfg: &Config, spec: &ManifoldSpec, r_values: Option<&[f64]>) -> Result<Outcome, CliError> {
    let mut o = Outcome::new(vec!["v_index", "r", "min_eigenvalue", "max_eigenvalue", "gap_to_limit", "monotone_ok"]);
    let rs: Vec<f64> = r_values.map(<[f64]>::to_vec).unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0]);
    let opts = limit_options(cfg);
    let (tol_m, tol_a) = (cfg.tolerance("monotone"), cfg.tolerance("asymmetry"));
    let horizon = opts.r_max.max(rs.iter().fold(0.0_f64, |a, &r| a.max(r)));
    let vs = vectors(cfg, spec, true)?;
    type PerVector = (Vec<DMatrix<f64>>, jacobi::StableTensorResult, f64);
    let per: Vec<horolab_core::Result<PerVector>> = vs
        .par_iter()
        .map(|v| {
            let traj = jacobi_trajectory(spec, v, (0.0, horizon))?;
            let limit = stable_tensor(&traj, &opts)?;
            let mut asym = limit.asymmetry;
            let approx = rs
                .iter()
                .map(|&r| {
                    let s = bvp_stable_approx(&traj, r, opts.jacobi_tol)?;
                    asym = asym.max(s.asymmetry);
                    Ok(s.value)
                })
                .collect::<horolab_core::Result<Vec<_>>>()?;
            Ok((approx, limit, asym))
        })
        .collect();
    let mut limits = Vec::new();
    for (i, (approx, limit, asym)) in collect(per)?.into_iter().enumerate() {
        o.check(asym <= tol_a, || format!("v {i}: asymmetry {asym:e}"));
        for (k, s) in approx.iter().enumerate() {
            let ev = sym_eigenvalues(s);
            let monotone = k == 0 || sym_eigenvalues(&(s - &approx[k - 1]))[0] >= -tol_m;
            o.check(monotone, || format!("v {i}: S'_(v,r)(0) not monotone at r = {}", rs[k]));
            let gap = operator_norm(&(s - &limit.s));
            o.rows.push(vec![i.into(), rs[k].into(), ev[0].into(), ev[ev.len() - 1].into(), gap.into(), monotone.into()]);
        }
        o.deviation(limit.residual);
        limits.push(json!({
            "v_index": i,
            "eigenvalues": sym_eigenvalues(&limit.s).into_iter().map(json_float).collect::<Vec<_>>(),
            "r_used": json_float(limit.r_used),
            "residual": json_float(limit.residual),
        }));
    }
    o.fields.insert("limits".into(), Value::Array(limits));
    Ok(o)
}

fn profiles(cfg: &Config, spec: &ManifoldSpec) -> Result<Outcome, CliError> {
    let mut o = Outcome::new(vec!["v_index", "h", "det_D", "trace_D", "rank", "norm_bound_ok", "det_trace_ok"]);
    let opts = profile_options(cfg);
    let (tol_i, tol_n) = (cfg.tolerance("identity"), cfg.tolerance("nonnegative"));
    let vs = vectors(cfg, spec, true)?;
    let ps = collect(vs.par_iter().map(|v| horo::profile(spec, v, &opts)).collect())?;
    let mut min_eig = f64::INFINITY;
    for (i, p) in ps.iter().enumerate() {
        let b = &p.bound_checks;
        o.check(b.norm_d_le_2sqrt_r0 != Some(false), || format!("v {i}: ‖D‖ = {} above 2√R0", p.norm_d));
        o.check(b.det_trace_inequality, || format!("v {i}: det-trace inequality violated"));
        if b.det_trace_equality {
            let r = b.rigidity_residual.unwrap_or(f64::NAN);
            o.check(r <= 1e-4, || format!("v {i}: equality case with R_v off −(h/(n−1))²·Id by {r:e}"));
        }
        let id = b.h_plus_h_reverse_eq_trace_d;
        o.check(id <= tol_i, || format!("v {i}: |h(v) + h(−v) − tr D| = {id:e}"));
        o.check(p.eigenvalues_d[0] >= -tol_n, || format!("v {i}: D has eigenvalue {}", p.eigenvalues_d[0]));
        o.deviation(id);
        min_eig = min_eig.min(p.eigenvalues_d[0]);
        o.rows.push(vec![
            i.into(),
            p.h.into(),
            p.det_d.into(),
            p.trace_d.into(),
            p.rank.into(),
            b.norm_d_le_2sqrt_r0.into(),
            b.det_trace_inequality.into(),
        ]);
    }
    o.fields.insert("min_eigenvalue_D".into(), json_float(min_eig));
    Ok(o)
}

fn flow_scan(cfg: &Config, spec: &ManifoldSpec) -> Result<Outcome, CliError> {
    let mut o = Outcome::new(vec!["v_index", "t", "h", "det_D", "trace_D", "rank", "deviation"]);
    let opts = profile_options(cfg);
    let tol = cfg.tolerance("h");
    let vs = vectors(cfg, spec, true)?;
    let scans: Vec<horolab_core::Result<horo::ScanReport>> =
        vs.iter().map(|v| horo::flow_invariance_scan(spec, v, &cfg.sampling.time_grid, &opts)).collect();
    let mut truncated = false;
    let mut secondary = Map::new();
    for (i, s) in collect(scans)?.into_iter().enumerate() {
        o.check(s.max_deviation <= tol, || format!("v {i}: h varies by {:e} along the flow", s.max_deviation));
        o.check(s.rank_consistent, || format!("v {i}: rank changes along the flow"));
        o.check(s.rho_floor_ok != Some(false), || format!("v {i}: ρ-floor consequence violated"));
        o.deviation(s.max_deviation);
        truncated |= s.truncated;
        for (k, x) in &s.secondary {
            let prev = secondary.get(*k).and_then(Value::as_f64).unwrap_or(0.0);
            secondary.insert((*k).to_string(), json_float(prev.max(*x)));
        }
        for r in s.rows {
            o.rows.push(vec![i.into(), r.t.into(), r.h.into(), r.det_d.into(), r.trace_d.into(), r.rank.into(), r.deviation.into()]);
        }
    }
    o.fields.insert("truncated".into(), json!(truncated));
    o.fields.insert("secondary_max".into(), Value::Object(secondary));
    Ok(o)
}

fn reversibility(cfg: &Config, spec: &ManifoldSpec) -> Result<Outcome, CliError> {
    let mut o = Outcome::new(vec!["v_index", "h", "det_D", "trace_D", "rank", "h_difference"]);
    let opts = profile_options(cfg);
    let tol = cfg.tolerance("identity");
    let vs = vectors(cfg, spec, true)?;
    let s = horo::reversibility_scan(spec, &vs, &opts)?;
    o.check(s.rank_consistent, || "rank(−v) differs from rank(v)".into());
    for (k, x) in &s.secondary {
        if *k == "identity_residual" {
            o.check(*x <= tol, || format!("identity residual {x:e} > {tol:e}"));
            o.deviation(*x);
        }
        o.fields.insert((*k).to_string(), json_float(*x));
    }
    o.fields.insert("max_h_difference".into(), json_float(s.max_deviation));
    for (i, r) in s.rows.into_iter().enumerate() {
        o.rows.push(vec![i.into(), r.h.into(), r.det_d.into(), r.trace_d.into(), r.rank.into(), r.deviation.into()]);
    }
    Ok(o)
}

/// Components of `v` restricted to each factor, with their `g`-shares.
fn split(spec: &ManifoldSpec, v: &TangentVector) -> Option<[(ManifoldSpec, TangentVector, f64); 2]> {
    let (l, r) = spec.factors()?;
    let k = l.dim();
    let part = |m: &ManifoldSpec, lo: usize, len: usize| {
        let base = v.base.rows(lo, len).into_owned();
        let c = v.components.rows(lo, len).into_owned();
        let w = m.norm(base.as_slice(), &c).ok()?;
        let unit = if w > 1e-12 { TangentVector::new(base.clone(), c / w) } else { TangentVector::new(base, DVector::zeros(len)) };
        Some((m.clone(), unit, w))
    };
    Some([part(l, 0, k)?, part(r, k, spec.dim() - k)?])
}

fn busemann(
    cfg: &Config,
    spec: &ManifoldSpec,
    direction: Option<&[f64]>,
    listed: Option<&[Vec<f64>]>,
    t_max: f64,
) -> Result<Outcome, CliError> {
    let mut o = Outcome::new(vec!["point_index", "b", "b_left", "b_right", "split_residual"]);
    let (tol_b, tol_s) = (cfg.tolerance("busemann"), cfg.tolerance("split"));
    let base = base_point(cfg, spec)?;
    let v = match direction {
        Some(c) => vector_at(spec, &base, c, "experiment.direction")?,
        None => vectors(cfg, spec, true)?.remove(0),
    };
    let pts: Vec<ChartPoint> = match listed {
        Some(ps) => ps
            .iter()
            .map(|p| {
                if p.len() != spec.dim() || !spec.in_domain(p) {
                    Err(bad("experiment.points", format!("{p:?} is not a chart point")))
                } else {
                    Ok(DVector::from_column_slice(p))
                }
            })
            .collect::<Result<_, _>>()?,
        None => points(cfg, spec)?,
    };
    let parts = split(spec, &v);
    let k = spec.factors().map_or(0, |(l, _)| l.dim());
    let rows: Vec<horolab_core::Result<(f64, Option<f64>, Option<f64>)>> = pts
        .par_iter()
        .map(|x| {
            let b = horo::busemann(spec, &v, x, t_max, tol_b)?;
            let Some(parts) = &parts else {
                return Ok((b, None, None));
            };
            let mut sides = [0.0; 2];
            for (s, (m, w, share)) in parts.iter().enumerate() {
                if *share > 1e-12 {
                    let xs = if s == 0 { x.rows(0, k).into_owned() } else { x.rows(k, spec.dim() - k).into_owned() };
                    sides[s] = horo::busemann(m, w, &xs, t_max, tol_b)?;
                }
            }
            Ok((b, Some(sides[0]), Some(sides[1])))
        })
        .collect();
    for (i, (b, l, r)) in collect(rows)?.into_iter().enumerate() {
        let residual = match (&parts, l, r) {
            (Some(p), Some(l), Some(r)) => Some((b - p[0].2 * l - p[1].2 * r).abs()),
            _ => None,
        };
        if let Some(res) = residual {
            o.check(res <= tol_s, || format!("point {i}: split residual {res:e} > {tol_s:e}"));
            o.deviation(res);
        }
        o.rows.push(vec![i.into(), b.into(), l.into(), r.into(), residual.into()]);
    }
    let grad = horo::busemann_gradient_field(spec, &v, &v.base, 1e-4, t_max, tol_b.min(1e-10))?;
    let gap = (&grad - &v.components).amax();
    o.fields.insert("direction".into(), json!(v.components.iter().map(|x| json_float(*x)).collect::<Vec<_>>()));
    o.fields.insert("gradient_residual".into(), json_float(gap));
    if let Some(p) = &parts {
        o.fields.insert("shares".into(), json!([json_float(p[0].2), json_float(p[1].2)]));
    }
    Ok(o)
}

fn leaf_probe(
    cfg: &Config,
    spec: &ManifoldSpec,
    direction: Option<&[f64]>,
    shifts: Option<&[Vec<f64>]>,
) -> Result<Outcome, CliError> {
    let mut o = Outcome::new(vec!["shift_index", "t", "distance"]);
    let tol = cfg.tolerance("monotone");
    let n = spec.dim();
    let base = base_point(cfg, spec)?;
    let v = match direction {
        Some(c) => vector_at(spec, &base, c, "experiment.direction")?,
        None => {
            let mut c = vec![0.0; n];
            c[n - 1] = 1.0;
            vector_at(spec, &base, &c, "experiment.direction")?
        }
    };
    let shifts: Vec<DVector<f64>> = match shifts {
        Some(s) => s
            .iter()
            .map(|x| if x.len() == n { Ok(DVector::from_column_slice(x)) } else { Err(bad("experiment.shifts", format!("expected {n} components"))) })
            .collect::<Result<_, _>>()?,
        None => {
            let mut rng = sampling::rng(cfg.sampling.seed);
            (0..cfg.sampling.count).map(|_| sampling::normal_vector(&mut rng, n) * 0.5).collect()
        }
    };
    let times: Vec<f64> = if cfg.sampling.time_grid.is_empty() {
        (0..=20).map(|k| 0.5 * k as f64).collect()
    } else {
        cfg.sampling.time_grid.clone()
    };
    let series: Vec<horolab_core::Result<horo::DecaySeries>> = shifts
        .par_iter()
        .map(|s| {
            let w = horo::stable_leaf_partner(spec, &v, s)?;
            horo::stable_leaf_probe(spec, &v, &w, &times)
        })
        .collect();
    let mut rates = Vec::new();
    for (i, s) in collect(series)?.into_iter().enumerate() {
        for (k, (&t, &d)) in s.times.iter().zip(&s.distances).enumerate() {
            if k > 0 {
                let prev = s.distances[k - 1];
                o.check(d <= prev * (1.0 + tol) + tol, || format!("shift {i}: distance grows at t = {t}"));
            }
            o.rows.push(vec![i.into(), t.into(), d.into()]);
        }
        rates.push(s.rate.map_or(Value::Null, json_float));
    }
    o.fields.insert("rates".into(), Value::Array(rates));
    Ok(o)
}

fn conjugate_scan(
    cfg: &Config,
    spec: &ManifoldSpec,
    horizon: f64,
    dt: f64,
    direction: Option<&[f64]>,
    expected: Option<f64>,
) -> Result<Outcome, CliError> {
    let mut o = Outcome::new(vec!["v_index", "first_conjugate_time", "roots", "touching_roots", "max_root_residual", "truncated"]);
    let base = base_point(cfg, spec)?;
    let vs = match (direction, spec.tag()) {
        (Some(c), _) => vec![vector_at(spec, &base, c, "experiment.direction")?],
        (None, ModelTag::Sl2r { .. }) => vec![vector_at(spec, &base, &[0.0, 0.0, 1.0], "experiment.direction")?],
        (None, ModelTag::Heisenberg { .. }) => datri::heisenberg_direction_grid(spec, cfg.sampling.count, 0.05)?,
        _ => vectors(cfg, spec, false)?,
    };
    let scans = datri::conjugate_times(spec, &vs, horizon, dt)?;
    let mut first: Option<f64> = None;
    for (i, s) in scans.iter().enumerate() {
        let residual = s.zero_crossings.iter().fold(0.0_f64, |a, r| a.max(r.det_at_root.abs()));
        let touching = s.zero_crossings.iter().filter(|r| r.kind == RootKind::Touch).count();
        o.check(s.det_values.get(1).is_some_and(|&d| d > 0.0), || format!("v {i}: det A_v not positive at the first grid point"));
        o.check(residual <= datri::ROOT_RESIDUAL, || format!("v {i}: |det A| = {residual:e} at a refined root"));
        if let Some(t) = s.first_conjugate_time {
            first = Some(first.map_or(t, |f: f64| f.min(t)));
        }
        o.rows.push(vec![
            i.into(),
            s.first_conjugate_time.into(),
            s.zero_crossings.len().into(),
            touching.into(),
            residual.into(),
            s.truncated.into(),
        ]);
    }
    if let Some(want) = expected {
        let tol = cfg.tolerance("first_conjugate_time");
        match first {
            Some(t) => {
                o.deviation((t - want).abs());
                o.check((t - want).abs() <= tol, || format!("first conjugate time {t} differs from expected {want} by more than {tol}"));
            }
            None => {
                o.deviation(f64::INFINITY);
                o.failures.push(format!("no conjugate point up to T = {horizon}; expected {want}"));
            }
        }
    }
    o.fields.insert("first_conjugate_time".into(), first.map_or(Value::Null, json_float));
    Ok(o)
}

fn datri_check(cfg: &Config, spec: &ManifoldSpec, expect_harmonic: bool) -> Result<Outcome, CliError> {
    let mut o = Outcome::new(vec!["t", "mean_det_A"]);
    let (tol_s, tol_h) = (cfg.tolerance("symmetry"), cfg.tolerance("spread"));
    let vs = vectors(cfg, spec, false)?;
    let rep = datri::datri_check(spec, &vs, &cfg.sampling.time_grid)?;
    o.check(rep.max_asymmetry <= tol_s, || format!("det A_v − det A_(−v) reaches {:e}", rep.max_asymmetry));
    o.deviation(rep.max_asymmetry);
    if expect_harmonic {
        o.check(rep.harmonic_spread <= tol_h, || format!("harmonic spread {:e} > {tol_h:e}", rep.harmonic_spread));
        o.deviation(rep.harmonic_spread);
    }
    o.check(rep.samples > 0, || "every sampled vector hit a conjugate point".into());
    for (t, m) in &rep.means {
        o.rows.push(vec![(*t).into(), (*m).into()]);
    }
    o.fields.insert("max_asymmetry".into(), json_float(rep.max_asymmetry));
    o.fields.insert("harmonic_spread".into(), json_float(rep.harmonic_spread));
    o.fields.insert("samples".into(), json!(rep.samples));
    o.fields.insert("excluded".into(), json!(rep.excluded));
    Ok(o)
}

fn sl2_verify(cfg: &Config, spec: &ManifoldSpec) -> Result<Outcome, CliError> {
    let ManifoldConfig::Sl2r { a, b } = cfg.manifold else {
        return Err(bad("manifold.model", "sl2-verify needs model = \"sl2r\""));
    };
    let mut o = Outcome::new(vec!["s", "u1_closed_form", "u2_closed_form", "u1_jacobi", "u2_jacobi", "gap"]);
    let (tol_f, tol_c) = (cfg.tolerance("closed_form"), cfg.tolerance("curvature"));
    let t0 = base_point(cfg, spec)?[0];
    let period = 2.0 * PI / b.sqrt();
    let s_values: Vec<f64> = if cfg.sampling.time_grid.is_empty() {
        (0..=64).map(|k| period * k as f64 / 64.0).collect()
    } else {
        cfg.sampling.time_grid.clone()
    };
    let field = datri::sl2_jacobi_field(a, b, t0, &s_values)?;
    let mut sup = 0.0_f64;
    for (&s, &(j1, j2)) in s_values.iter().zip(&field) {
        let (u1, u2) = datri::sl2_analytic_jacobi(a, b, t0, s)?;
        let gap = (u1 - j1).abs().max((u2 - j2).abs());
        sup = sup.max(gap);
        o.rows.push(vec![s.into(), u1.into(), u2.into(), j1.into(), j2.into(), gap.into()]);
    }
    o.deviation(sup);
    o.check(sup <= tol_f, || format!("closed form differs from the integrated Jacobi field by {sup:e}"));

    let tab = datri::sl2_curvature_table(a, b, t0)?;
    let reference13 = [b / 2.0, 0.0, 0.0];
    let reference23 = [0.0, -b / 2.0, 0.0];
    let gap13 = tab.r13.iter().zip(&reference13).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let gap23 = tab.r23.iter().zip(&reference23).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    o.check(gap13 <= tol_c, || format!("R(V1,V3)V3 differs from (b/2)V1 by {gap13:e}"));
    o.check(gap23 <= tol_c, || format!("R(V2,V3)V3 differs from −(b/2)V2 by {gap23:e}"));

    let coefficient = datri::sl2_coefficient_system_check(a, b, t0, period, 200)?;
    let v = vector_at(spec, &base_point(cfg, spec)?, &[0.0, 0.0, 1.0], "sampling.base")?;
    let scan = datri::conjugate_scan(spec, &v, 1.5 * period, 0.05)?;
    let fl = |x: &[f64]| x.iter().map(|y| json_float(*y)).collect::<Vec<_>>();
    o.fields.insert("closed_form_vs_jacobi".into(), json_float(sup));
    o.fields.insert("coefficient_system_residual".into(), json_float(coefficient));
    o.fields.insert("r13".into(), json!(fl(&tab.r13)));
    o.fields.insert("r23".into(), json!(fl(&tab.r23)));
    o.fields.insert("curvature_gap_v1".into(), json_float(gap13));
    o.fields.insert("curvature_gap_v2".into(), json_float(gap23));
    o.fields.insert("first_conjugate_time".into(), scan.first_conjugate_time.map_or(Value::Null, json_float));
    o.fields.insert("closed_form_conjugate_time".into(), json_float(period));
    Ok(o)
}
