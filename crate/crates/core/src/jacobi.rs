//! Jacobi tensors along a geodesic, in its parallel frame of `ċ^⊥`.
//!
//! A Jacobi tensor is an `(n−1)×(n−1)` matrix solution of
//! `J'' + R_v(t) J = 0`. From the fundamental pair `A` (`A(0)=0, A'(0)=Id`)
//! and `J₁` (`J₁(0)=Id, J₁'(0)=0`) every two-point boundary problem has a
//! closed form, which gives `S'_{v,r}(0)` and `U'_{v,r}(0)`; their limits in
//! `r` are the stable and unstable tensors `S(v)`, `U(v)`.

use std::cell::RefCell;
use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{HoroError, Result};
use crate::geodesic::{integrate_geodesic, GeodesicTrajectory, GEODESIC_TOL};
use crate::manifold::{ManifoldSpec, TangentVector};
use crate::ode::{self, DenseOutput, OdeOptions, OdeSystem, StepControl, Termination};

/// Default relative tolerance for Jacobi integrations.
pub const JACOBI_TOL: f64 = 1e-11;
/// Equilibrated condition number of `A_v(r)` above which a conjugate point
/// is assumed.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Largest asymmetry a symmetrized result may discard.
pub const ASYMMETRY_LIMIT: f64 = 1e-6;
/// Riccati solutions above this norm count as blown up.
pub const BLOW_UP_NORM: f64 = 1e8;

/// A Jacobi tensor and its derivative at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiTensorState {
    pub j: DMatrix<f64>,
    pub j_prime: DMatrix<f64>,
    pub t: f64,
    pub trajectory_id: u64,
}

/// A symmetric matrix together with the antisymmetric part that was
/// dropped (operator norm).
#[derive(Debug, Clone, PartialEq)]
pub struct Symmetrized {
    pub value: DMatrix<f64>,
    pub asymmetry: f64,
}

pub fn symmetrize(m: &DMatrix<f64>) -> Symmetrized {
    let mt = m.transpose();
    Symmetrized {
        value: (m + &mt) * 0.5,
        asymmetry: operator_norm(&((m - &mt) * 0.5)),
    }
}

fn guarded(m: &DMatrix<f64>) -> Result<Symmetrized> {
    let s = symmetrize(m);
    if s.asymmetry > ASYMMETRY_LIMIT {
        return Err(HoroError::Asymmetric { asymmetry: s.asymmetry });
    }
    Ok(s)
}

/// Spectral norm.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// An orthonormal frame of `v^⊥` diagonalizing `R_v`, eigenvalues
/// ascending. On locally symmetric spaces the transported frame keeps
/// diagonalizing `R_v(t)`, which keeps every column of a Jacobi tensor on a
/// single growth scale.
pub fn adapted_frame(spec: &ManifoldSpec, v: &TangentVector) -> Result<Vec<DVector<f64>>> {
    let base = spec.orthonormal_frame(v)?;
    let r = spec.jacobi_operator(v, &base)?;
    let eig = SymmetricEigen::new(r);
    let vals = &eig.eigenvalues;
    let spread = vals.max() - vals.min();
    let scale = vals.amax().max(1.0);
    if spread <= 1e-9 * scale {
        return Ok(base);
    }
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .map(|c| {
            let mut q = eig.eigenvectors.column(c).into_owned();
            let lead = q.iamax();
            if q[lead] < 0.0 {
                q = -q;
            }
            base.iter().zip(q.iter()).fold(DVector::zeros(v.base.len()), |acc, (e, w)| acc + e * *w)
        })
        .collect())
}

/// Geodesic through `v` over `span`, carrying [`adapted_frame`].
pub fn jacobi_trajectory(spec: &ManifoldSpec, v: &TangentVector, span: (f64, f64)) -> Result<GeodesicTrajectory> {
    let frame = adapted_frame(spec, v)?;
    integrate_geodesic(spec, v, Some(&frame), span, GEODESIC_TOL)
}

/// `count` Jacobi tensors integrated jointly. State layout: tensor `k`,
/// column `c` occupies `[J[:,c], J'[:,c]]`, and each such pair is one error
/// block.
struct JacobiSystem<'a> {
    traj: &'a GeodesicTrajectory,
    m: usize,
    count: usize,
    scratch: RefCell<(Vec<f64>, Vec<f64>)>,
}

impl<'a> JacobiSystem<'a> {
    fn new(traj: &'a GeodesicTrajectory, count: usize) -> Self {
        let n = traj.spec().dim();
        let m = n - 1;
        Self {
            traj,
            m,
            count,
            scratch: RefCell::new((vec![0.0; n * (n + 1)], vec![0.0; m * m])),
        }
    }

    fn pack(&self, tensors: &[(DMatrix<f64>, DMatrix<f64>)]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; self.dim()];
        for (k, (j, jp)) in tensors.iter().enumerate() {
            for c in 0..m {
                let base = (k * m + c) * 2 * m;
                for i in 0..m {
                    y[base + i] = j[(i, c)];
                    y[base + m + i] = jp[(i, c)];
                }
            }
        }
        y
    }

    fn unpack(m: usize, y: &[f64], k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut j = DMatrix::zeros(m, m);
        let mut jp = DMatrix::zeros(m, m);
        for c in 0..m {
            let base = (k * m + c) * 2 * m;
            for i in 0..m {
                j[(i, c)] = y[base + i];
                jp[(i, c)] = y[base + m + i];
            }
        }
        (j, jp)
    }
}

impl OdeSystem for JacobiSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.count * self.m * self.m
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> bool {
        let mut guard = self.scratch.borrow_mut();
        let (buf, r) = &mut *guard;
        if self.traj.jacobi_operator_into(t, buf, r).is_err() {
            return false;
        }
        let m = self.m;
        for col in 0..self.count * m {
            let base = col * 2 * m;
            for i in 0..m {
                dy[base + i] = y[base + m + i];
                let mut acc = 0.0;
                for l in 0..m {
                    acc += r[i * m + l] * y[base + l];
                }
                dy[base + m + i] = -acc;
            }
        }
        true
    }

    fn blocks(&self) -> Vec<Range<usize>> {
        let w = 2 * self.m;
        (0..self.count * self.m).map(|c| c * w..(c + 1) * w).collect()
    }
}

fn check_reach(traj: &GeodesicTrajectory, t: f64) -> Result<()> {
    if traj.covers(t) {
        return Ok(());
    }
    let (lo, hi) = traj.t_span();
    let (rlo, rhi) = traj.requested_span();
    if traj.is_truncated() && t >= rlo && t <= rhi {
        return Err(HoroError::ChartExit { t: if t > 0.0 { hi } else { lo } });
    }
    Err(HoroError::OutsideSpan { t, t_min: lo, t_max: hi })
}

fn validate(traj: &GeodesicTrajectory, tensors: &[(DMatrix<f64>, DMatrix<f64>)]) -> Result<usize> {
    let m = traj.spec().dim() - 1;
    for (j, jp) in tensors {
        if j.shape() != (m, m) || jp.shape() != (m, m) {
            return Err(HoroError::InvalidParams(format!(
                "Jacobi data must be {m}x{m}, got {:?} and {:?}",
                j.shape(),
                jp.shape()
            )));
        }
    }
    Ok(m)
}

fn solve(
    traj: &GeodesicTrajectory,
    t0: f64,
    tensors: &[(DMatrix<f64>, DMatrix<f64>)],
    t1: f64,
    tol: f64,
    dense: bool,
    observer: &mut dyn FnMut(f64, &[f64]) -> StepControl,
) -> Result<ode::OdeSolution> {
    validate(traj, tensors)?;
    check_reach(traj, t0)?;
    check_reach(traj, t1)?;
    let sys = JacobiSystem::new(traj, tensors.len());
    let y0 = sys.pack(tensors);
    let opts = OdeOptions {
        dense,
        ..OdeOptions::with_tol(tol)
    };
    let sol = ode::integrate(&sys, t0, &y0, t1, &opts, observer)?;
    if sol.termination == Termination::DomainExit {
        return Err(HoroError::ChartExit { t: sol.t_end });
    }
    Ok(sol)
}

/// Solves the Jacobi equation from data `(J0, J0')` at `t = 0` to `t_target`.
pub fn integrate_jacobi(
    traj: &GeodesicTrajectory,
    j0: &DMatrix<f64>,
    j0_prime: &DMatrix<f64>,
    t_target: f64,
    tol: f64,
) -> Result<JacobiTensorState> {
    integrate_jacobi_from(traj, 0.0, j0, j0_prime, t_target, tol)
}

/// As [`integrate_jacobi`] with the data given at `t0`.
pub fn integrate_jacobi_from(
    traj: &GeodesicTrajectory,
    t0: f64,
    j0: &DMatrix<f64>,
    j0_prime: &DMatrix<f64>,
    t_target: f64,
    tol: f64,
) -> Result<JacobiTensorState> {
    let data = [(j0.clone(), j0_prime.clone())];
    let sol = solve(traj, t0, &data, t_target, tol, false, &mut |_, _| StepControl::Continue)?;
    let m = traj.spec().dim() - 1;
    let (j, j_prime) = JacobiSystem::unpack(m, &sol.y_end, 0);
    Ok(JacobiTensorState { j, j_prime, t: t_target, trajectory_id: traj.id() })
}

/// Jacobi tensors with continuous output over `[t0, t_end]`.
#[derive(Debug, Clone)]
pub struct JacobiPath {
    trajectory_id: u64,
    m: usize,
    count: usize,
    t0: f64,
    t_end: f64,
    dense: Option<DenseOutput>,
    y0: Vec<f64>,
}

impl JacobiPath {
    pub fn span(&self) -> (f64, f64) {
        (self.t0.min(self.t_end), self.t0.max(self.t_end))
    }

    pub fn tensor_count(&self) -> usize {
        self.count
    }

    /// Accepted step nodes in integration order.
    pub fn nodes(&self) -> Vec<f64> {
        self.dense.as_ref().map(|d| d.nodes()).unwrap_or_else(|| vec![self.t0])
    }

    /// State of tensor `k` at `t`.
    pub fn state(&self, k: usize, t: f64) -> Result<JacobiTensorState> {
        let (lo, hi) = self.span();
        if t < lo || t > hi {
            return Err(HoroError::OutsideSpan { t, t_min: lo, t_max: hi });
        }
        if k >= self.count {
            return Err(HoroError::InvalidParams(format!("tensor index {k} out of {}", self.count)));
        }
        let y = match &self.dense {
            Some(d) => d.eval(t),
            None => self.y0.clone(),
        };
        let (j, j_prime) = JacobiSystem::unpack(self.m, &y, k);
        Ok(JacobiTensorState { j, j_prime, t, trajectory_id: self.trajectory_id })
    }
}

/// Integrates several Jacobi tensors from `t0` to `t_end` keeping dense
/// output.
pub fn jacobi_path(
    traj: &GeodesicTrajectory,
    t0: f64,
    tensors: &[(DMatrix<f64>, DMatrix<f64>)],
    t_end: f64,
    tol: f64,
) -> Result<JacobiPath> {
    let sol = solve(traj, t0, tensors, t_end, tol, true, &mut |_, _| StepControl::Continue)?;
    let sys = JacobiSystem::new(traj, tensors.len());
    Ok(JacobiPath {
        trajectory_id: traj.id(),
        m: sys.m,
        count: tensors.len(),
        t0,
        t_end,
        dense: if sol.dense.is_empty() { None } else { Some(sol.dense) },
        y0: sys.pack(tensors),
    })
}

/// `A_v` at time `t`: the Jacobi tensor with `A(0) = 0`, `A'(0) = Id`.
pub fn a_tensor(traj: &GeodesicTrajectory, t: f64, tol: f64) -> Result<JacobiTensorState> {
    let m = traj.spec().dim() - 1;
    integrate_jacobi(traj, &DMatrix::zeros(m, m), &DMatrix::identity(m, m), t, tol)
}

/// Smallest singular value of `A` after scaling each column `c` by
/// `1/|(A[:,c], A'[:,c])|`. The pair never loses rank, so only a genuine
/// kernel of `A` makes this small; mixed growth rates across columns do not.
pub fn equilibrated_sigma_min(a: &DMatrix<f64>, a_prime: &DMatrix<f64>) -> f64 {
    let mut scaled = a.clone();
    for c in 0..a.ncols() {
        let w = (a.column(c).norm_squared() + a_prime.column(c).norm_squared()).sqrt();
        if w > 0.0 {
            scaled.column_mut(c).unscale_mut(w);
        }
    }
    scaled.svd(false, false).singular_values.min()
}

/// `1 / equilibrated_sigma_min`. Scaled columns have norm at most one, so
/// this bounds the condition number of the scaled matrix up to `√(n−1)`,
/// and unlike the plain ratio it also catches a kernel of full dimension.
pub fn equilibrated_condition(a: &DMatrix<f64>, a_prime: &DMatrix<f64>) -> f64 {
    let lo = equilibrated_sigma_min(a, a_prime);
    if lo > 0.0 {
        1.0 / lo
    } else {
        f64::INFINITY
    }
}

/// Golden-section search for a minimum of `f` on `[a, b]`.
pub(crate) fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Equilibrated `σ_min(A)` below which a refined local minimum counts as a
/// conjugate point.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Interior local minima of `σ(t)` over `nodes`, refined by golden
/// section; returns `(t, σ)` pairs.
pub(crate) fn sigma_minima(nodes: &[f64], sigma: &dyn Fn(f64) -> f64, tol: f64) -> Vec<(f64, f64)> {
    let vals: Vec<f64> = nodes.iter().map(|&t| sigma(t)).collect();
    let mut out = Vec::new();
    for k in 1..nodes.len().saturating_sub(1) {
        if vals[k] < vals[k - 1] && vals[k] <= vals[k + 1] {
            let (lo, hi) = (nodes[k - 1].min(nodes[k + 1]), nodes[k - 1].max(nodes[k + 1]));
            out.push(golden_min(sigma, lo, hi, tol));
        }
    }
    out
}

/// `Y'(0)` for the Jacobi tensor with `Y(0) = Id`, `Y(r) = 0`, from the
/// fundamental pair evaluated at `r`: `Y = J₁ + A W` with `W = −A(r)⁻¹J₁(r)`.
pub fn bvp_from_pair(a: &JacobiTensorState, j1: &JacobiTensorState) -> Result<Symmetrized> {
    let condition = equilibrated_condition(&a.j, &a.j_prime);
    if !(condition <= CONDITION_LIMIT) {
        return Err(HoroError::ConjugateObstruction { r: a.t, condition });
    }
    let w = a
        .j
        .clone()
        .lu()
        .solve(&j1.j)
        .ok_or(HoroError::ConjugateObstruction { r: a.t, condition: f64::INFINITY })?;
    guarded(&(-w))
}

fn det_sign_ok(a: &DMatrix<f64>, t: f64) -> bool {
    let m = a.nrows();
    let d = a.determinant();
    let s = if t < 0.0 && m % 2 == 1 { -1.0 } else { 1.0 };
    d * s > 0.0
}

/// Fundamental pair `(A, J₁)` advanced from the states at `t0` to `t1`,
/// rejecting conjugate points on the way: sign changes of `det A`, and
/// touching zeros found as near-vanishing local minima of the equilibrated
/// `σ_min(A)`.
fn advance_pair(
    traj: &GeodesicTrajectory,
    start: &[(DMatrix<f64>, DMatrix<f64>)],
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<(JacobiTensorState, JacobiTensorState)> {
    let m = traj.spec().dim() - 1;
    let mut bad = None;
    let sol = solve(traj, t0, start, t1, tol, true, &mut |t, y| {
        let (a, _) = JacobiSystem::unpack(m, y, 0);
        if t != 0.0 && !det_sign_ok(&a, t) {
            bad = Some(t);
            return StepControl::Stop;
        }
        StepControl::Continue
    })?;
    if let Some(t) = bad {
        return Err(HoroError::ConjugateBeforeHorizon { t });
    }
    if !sol.dense.is_empty() {
        let sigma = |t: f64| {
            let (a, ap) = JacobiSystem::unpack(m, &sol.dense.eval(t), 0);
            equilibrated_sigma_min(&a, &ap)
        };
        let nodes = sol.dense.nodes();
        if let Some(&(t, _)) = sigma_minima(&nodes, &sigma, 1e-9).iter().find(|(_, s)| *s < SIGMA_FLOOR) {
            return Err(HoroError::ConjugateBeforeHorizon { t });
        }
    }
    let (a, ap) = JacobiSystem::unpack(m, &sol.y_end, 0);
    let (j, jp) = JacobiSystem::unpack(m, &sol.y_end, 1);
    let id = traj.id();
    Ok((
        JacobiTensorState { j: a, j_prime: ap, t: t1, trajectory_id: id },
        JacobiTensorState { j, j_prime: jp, t: t1, trajectory_id: id },
    ))
}

fn pair_start(m: usize) -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
    vec![
        (DMatrix::zeros(m, m), DMatrix::identity(m, m)),
        (DMatrix::identity(m, m), DMatrix::zeros(m, m)),
    ]
}

/// Two-point problem `Y(0) = Id`, `Y(r) = 0` for signed `r ≠ 0`; returns
/// `Y'(0)`. For `r > 0` this is `S'_{v,r}(0)`, for `r < 0` it is
/// `U'_{v,|r|}(0)`.
pub fn bvp_two_point(traj: &GeodesicTrajectory, r: f64, tol: f64) -> Result<Symmetrized> {
    if r == 0.0 || !r.is_finite() {
        return Err(HoroError::InvalidParams(format!("boundary time must be finite and non-zero, got {r}")));
    }
    let m = traj.spec().dim() - 1;
    let (a, j1) = advance_pair(traj, &pair_start(m), 0.0, r, tol)?;
    bvp_from_pair(&a, &j1)
}

/// `S'_{v,r}(0)` for `S_{v,r}(0) = Id`, `S_{v,r}(r) = 0`.
pub fn bvp_stable_approx(traj: &GeodesicTrajectory, r: f64, tol: f64) -> Result<Symmetrized> {
    if !(r > 0.0) {
        return Err(HoroError::InvalidParams(format!("r must be positive, got {r}")));
    }
    bvp_two_point(traj, r, tol)
}

/// `U'_{v,r}(0) = −S'_{−v,r}(0)`, with `traj_reverse` the geodesic of `−v`
/// carrying the same frame vectors at `t = 0`.
pub fn bvp_unstable_approx(traj_reverse: &GeodesicTrajectory, r: f64, tol: f64) -> Result<Symmetrized> {
    let s = bvp_stable_approx(traj_reverse, r, tol)?;
    Ok(Symmetrized { value: -s.value, asymmetry: s.asymmetry })
}

/// Settings for the `r`-doubling limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOptions {
    pub r0: f64,
    pub r_max: f64,
    pub tol: f64,
    pub jacobi_tol: f64,
    /// Smallest admissible eigenvalue of successive differences.
    pub monotone_tol: f64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self { r0: 2.0, r_max: 64.0, tol: 1e-6, jacobi_tol: JACOBI_TOL, monotone_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StableTensorResult {
    pub s: DMatrix<f64>,
    pub r_used: f64,
    /// Operator-norm gap between the last two extrapolated iterates.
    pub residual: f64,
    pub converged: bool,
    /// Largest asymmetry discarded along the way.
    pub asymmetry: f64,
    /// Raw `(r, S'_{v,r}(0))` iterates (`r` signed for the unstable branch).
    pub iterates: Vec<(f64, DMatrix<f64>)>,
}

/// Limit of `Y'(0)` over `r = dir·r₀·2^k`. Iterates converge like `O(1/r)`
/// in flat directions and exponentially in curved ones, so the sequence is
/// Richardson-extrapolated (`2X_r − X_{r/2}`, exact for the `1/r` term)
/// before the Cauchy test.
fn limit(traj: &GeodesicTrajectory, dir: f64, opts: &LimitOptions) -> Result<StableTensorResult> {
    if !(opts.r0 > 0.0 && opts.r_max >= opts.r0 && opts.tol > 0.0) {
        return Err(HoroError::InvalidParams(format!("invalid limit options {opts:?}")));
    }
    let m = traj.spec().dim() - 1;
    let horizon = if dir > 0.0 { traj.t_span().1 } else { -traj.t_span().0 };
    let mut state = pair_start(m);
    let mut t_prev = 0.0;
    let mut iterates: Vec<(f64, DMatrix<f64>)> = Vec::new();
    let mut extrapolated: Vec<DMatrix<f64>> = Vec::new();
    let mut asymmetry = 0.0_f64;
    let mut residual = f64::INFINITY;
    let mut r = opts.r0;
    while r <= opts.r_max * (1.0 + 1e-12) {
        if r > horizon * (1.0 + 1e-12) {
            break;
        }
        let (a, j1) = advance_pair(traj, &state, t_prev, dir * r, opts.jacobi_tol)?;
        let y = bvp_from_pair(&a, &j1)?;
        asymmetry = asymmetry.max(y.asymmetry);
        if let Some((r_prev, prev)) = iterates.last() {
            let diff = (&y.value - prev) * dir;
            let lo = sym_eigenvalues(&diff)[0];
            if lo < -opts.monotone_tol {
                return Err(HoroError::NonMonotone { r_lo: r_prev.abs(), r_hi: r, min_eigenvalue: lo });
            }
            let e = &y.value * 2.0 - prev;
            if let Some(e_prev) = extrapolated.last() {
                residual = operator_norm(&(&e - e_prev));
                if residual <= opts.tol {
                    return Ok(StableTensorResult {
                        s: e,
                        r_used: r,
                        residual,
                        converged: true,
                        asymmetry,
                        iterates: {
                            iterates.push((dir * r, y.value));
                            iterates
                        },
                    });
                }
            }
            extrapolated.push(e);
        }
        iterates.push((dir * r, y.value));
        state = vec![(a.j, a.j_prime), (j1.j, j1.j_prime)];
        t_prev = dir * r;
        r *= 2.0;
    }
    let (r_last, last) = iterates
        .last()
        .map(|(r, x)| (r.abs(), x.transpose().as_slice().to_vec()))
        .unwrap_or((0.0, Vec::new()));
    Err(HoroError::LimitNotConverged { r: r_last, residual, last })
}

/// `S(v) = lim_{r→∞} S'_{v,r}(0)` along the forward half of `traj`.
pub fn stable_tensor(traj: &GeodesicTrajectory, opts: &LimitOptions) -> Result<StableTensorResult> {
    limit(traj, 1.0, opts)
}

/// `U(v) = −S(−v)`, computed along the backward half of `traj` (which is
/// the forward geodesic of `−v` with the same frame at `t = 0`).
pub fn unstable_tensor(traj: &GeodesicTrajectory, opts: &LimitOptions) -> Result<StableTensorResult> {
    limit(traj, -1.0, opts)
}

struct RiccatiSystem<'a> {
    traj: &'a GeodesicTrajectory,
    m: usize,
    scratch: RefCell<(Vec<f64>, Vec<f64>)>,
}

impl OdeSystem for RiccatiSystem<'_> {
    fn dim(&self) -> usize {
        self.m * self.m
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> bool {
        let mut guard = self.scratch.borrow_mut();
        let (buf, r) = &mut *guard;
        if self.traj.jacobi_operator_into(t, buf, r).is_err() {
            return false;
        }
        let m = self.m;
        for i in 0..m {
            for j in 0..m {
                let mut sq = 0.0;
                for l in 0..m {
                    sq += y[i * m + l] * y[l * m + j];
                }
                dy[i * m + j] = -sq - r[i * m + j];
            }
        }
        true
    }

    fn blocks(&self) -> Vec<Range<usize>> {
        vec![0..self.dim()]
    }
}

/// Integrates `S' + S² + R_v(t) = 0` from `S(0) = s0` to `t_target`.
pub fn riccati_propagate(traj: &GeodesicTrajectory, s0: &DMatrix<f64>, t_target: f64, tol: f64) -> Result<DMatrix<f64>> {
    let n = traj.spec().dim();
    let m = n - 1;
    if s0.shape() != (m, m) {
        return Err(HoroError::InvalidParams(format!("S0 must be {m}x{m}")));
    }
    let asym = symmetrize(s0).asymmetry;
    if asym > ASYMMETRY_LIMIT {
        return Err(HoroError::Asymmetric { asymmetry: asym });
    }
    check_reach(traj, t_target)?;
    let sys = RiccatiSystem {
        traj,
        m,
        scratch: RefCell::new((vec![0.0; n * (n + 1)], vec![0.0; m * m])),
    };
    let y0: Vec<f64> = s0.transpose().as_slice().to_vec();
    let opts = OdeOptions { dense: false, ..OdeOptions::with_tol(tol) };
    let mut blown = None;
    let result = ode::integrate(&sys, 0.0, &y0, t_target, &opts, &mut |t, y| {
        if y.iter().any(|x| !(x.abs() <= BLOW_UP_NORM)) {
            blown = Some(t);
            return StepControl::Stop;
        }
        StepControl::Continue
    });
    if let Some(t) = blown {
        return Err(HoroError::RiccatiBlowUp { t });
    }
    let sol = match result {
        Ok(sol) => sol,
        Err(HoroError::StepUnderflow { t }) => return Err(HoroError::RiccatiBlowUp { t }),
        Err(e) => return Err(e),
    };
    if sol.termination == Termination::DomainExit {
        return Err(HoroError::ChartExit { t: sol.t_end });
    }
    let s = DMatrix::from_row_slice(m, m, &sol.y_end);
    if operator_norm(&s) > BLOW_UP_NORM {
        return Err(HoroError::RiccatiBlowUp { t: sol.t_end });
    }
    Ok(symmetrize(&s).value)
}

/// `Ω(A, B)(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WronskianSample {
    pub omega: DMatrix<f64>,
    pub t: f64,
}

/// `Ω(A, B) = B*A' − (B')*A`; constant in `t` for Jacobi tensors.
pub fn wronskian(a: &JacobiTensorState, b: &JacobiTensorState) -> Result<WronskianSample> {
    if a.trajectory_id != b.trajectory_id {
        return Err(HoroError::Mismatch(format!(
            "trajectories {} and {} differ",
            a.trajectory_id, b.trajectory_id
        )));
    }
    if a.t != b.t {
        return Err(HoroError::Mismatch(format!("times {} and {} differ", a.t, b.t)));
    }
    if a.j.shape() != b.j.shape() {
        return Err(HoroError::Mismatch("tensor shapes differ".into()));
    }
    Ok(WronskianSample {
        omega: b.j.transpose() * &a.j_prime - b.j_prime.transpose() * &a.j,
        t: a.t,
    })
}
