//! Riemannian metrics in a single global chart.
//!
//! A [`ManifoldSpec`] evaluates the metric, its Christoffel symbols and the
//! curvature tensor at chart points, either from hand-coded metric
//! derivatives (model spaces) or from central finite differences of the
//! metric. Products are structural: block metric, block Christoffel symbols
//! and block curvature.
//!
//! Conventions: `R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z`, stored as
//! `R(∂_i,∂_j)∂_k = R^l_{ijk} ∂_l`. Hyperbolic models use the upper
//! half-space with the last coordinate positive and metric
//! `|dx|² / (k² y²)`, so sectional curvature is `−k²`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{HoroError, Result};

pub type ChartPoint = DVector<f64>;
pub type MetricFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type DomainFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Default central-difference steps for the metric (first derivatives) and
/// the Christoffel symbols (nested second derivatives).
pub const FD_STEP: f64 = 1e-5;
pub const FD_SECOND_STEP: f64 = 1e-4;

const COORD_LIMIT: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference { step: f64, second_step: f64 },
}

impl DerivativeMode {
    pub fn finite_difference() -> Self {
        DerivativeMode::FiniteDifference {
            step: FD_STEP,
            second_step: FD_SECOND_STEP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelTag {
    Euclidean,
    Hyperbolic { k: f64 },
    Product(Box<ModelTag>, Box<ModelTag>),
    Sl2r { a: f64, b: f64 },
    Heisenberg { b: f64 },
    Custom(String),
}

/// Bounds `‖R‖ ≤ R0` and `‖∇R‖ ≤ R0'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureBounds {
    pub r0: f64,
    pub r0_prime: f64,
}

/// Constructor parameters for the built-in models.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Euclidean { n: usize },
    Hyperbolic { n: usize, k: f64 },
    Product(Box<ModelParams>, Box<ModelParams>),
    Sl2r { a: f64, b: f64 },
    Heisenberg { b: f64 },
}

#[derive(Clone)]
enum Geometry {
    Euclidean { n: usize },
    Hyperbolic { n: usize, k: f64 },
    Sl2r { a: f64, b: f64 },
    Heisenberg { b: f64 },
    Product { left: ManifoldSpec, right: ManifoldSpec },
    Custom { name: String, n: usize, metric: MetricFn, domain: Option<DomainFn> },
}

struct Inner {
    geometry: Geometry,
    mode: DerivativeMode,
    bounds: Option<CurvatureBounds>,
}

/// An immutable, cheaply clonable Riemannian metric on one chart.
#[derive(Clone)]
pub struct ManifoldSpec {
    inner: Arc<Inner>,
}

impl fmt::Debug for ManifoldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManifoldSpec")
            .field("tag", &self.tag())
            .field("dimension", &self.dim())
            .field("mode", &self.inner.mode)
            .finish()
    }
}

/// Builds one of the model spaces.
pub fn make_model(params: &ModelParams) -> Result<ManifoldSpec> {
    match params {
        ModelParams::Euclidean { n } => ManifoldSpec::euclidean(*n),
        ModelParams::Hyperbolic { n, k } => ManifoldSpec::hyperbolic(*n, *k),
        ModelParams::Product(l, r) => ManifoldSpec::product(make_model(l)?, make_model(r)?),
        ModelParams::Sl2r { a, b } => ManifoldSpec::sl2r(*a, *b),
        ModelParams::Heisenberg { b } => ManifoldSpec::heisenberg(*b),
    }
}

impl ManifoldSpec {
    fn build(geometry: Geometry, mode: DerivativeMode, bounds: Option<CurvatureBounds>) -> Self {
        Self {
            inner: Arc::new(Inner { geometry, mode, bounds }),
        }
    }

    pub fn euclidean(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(HoroError::InvalidParams("euclidean: dimension must be >= 1".into()));
        }
        Ok(Self::build(
            Geometry::Euclidean { n },
            DerivativeMode::Analytic,
            Some(CurvatureBounds { r0: 0.0, r0_prime: 0.0 }),
        ))
    }

    /// Half-space model of constant curvature `−k²`.
    pub fn hyperbolic(n: usize, k: f64) -> Result<Self> {
        if n < 2 {
            return Err(HoroError::InvalidParams("hyperbolic: dimension must be >= 2".into()));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(HoroError::InvalidParams(format!("hyperbolic: k must be > 0 (got {k})")));
        }
        Ok(Self::build(
            Geometry::Hyperbolic { n, k },
            DerivativeMode::Analytic,
            Some(CurvatureBounds { r0: k * k, r0_prime: 0.0 }),
        ))
    }

    pub fn product(left: ManifoldSpec, right: ManifoldSpec) -> Result<Self> {
        let bounds = match (left.curvature_bounds(), right.curvature_bounds()) {
            (Some(a), Some(b)) => Some(CurvatureBounds {
                r0: a.r0.max(b.r0),
                r0_prime: a.r0_prime.max(b.r0_prime),
            }),
            _ => None,
        };
        Ok(Self::build(
            Geometry::Product { left, right },
            DerivativeMode::Analytic,
            bounds,
        ))
    }

    /// Left-invariant metric on the universal cover of SL(2,R) in the
    /// global chart `(t, x, y)`:
    /// `dt²/|a+b| + |a+b| e^{-2t} dx² + (dy + √(2b) e^{-t} dx)²`.
    pub fn sl2r(a: f64, b: f64) -> Result<Self> {
        if !(b > 0.0) {
            return Err(HoroError::InvalidParams(format!("sl2r: requires b > 0 (got b = {b})")));
        }
        if !(a + b < 0.0) {
            return Err(HoroError::InvalidParams(format!(
                "sl2r: requires a + b < 0 (got a + b = {})",
                a + b
            )));
        }
        Ok(Self::build(Geometry::Sl2r { a, b }, DerivativeMode::Analytic, None))
    }

    /// Left-invariant metric on the Heisenberg group in the chart
    /// `(x, y, z)`: `dx²/b + dz² + (dy − x dz)²`.
    pub fn heisenberg(b: f64) -> Result<Self> {
        if !(b > 0.0) {
            return Err(HoroError::InvalidParams(format!(
                "heisenberg: requires b > 0 (got b = {b})"
            )));
        }
        Ok(Self::build(Geometry::Heisenberg { b }, DerivativeMode::Analytic, None))
    }

    /// A user-supplied metric; derivatives are always finite differences.
    pub fn custom(name: &str, n: usize, metric: MetricFn, domain: Option<DomainFn>) -> Result<Self> {
        if n < 2 {
            return Err(HoroError::InvalidParams("custom: dimension must be >= 2".into()));
        }
        Ok(Self::build(
            Geometry::Custom { name: name.to_string(), n, metric, domain },
            DerivativeMode::finite_difference(),
            None,
        ))
    }

    /// Euclidean metric scaled by `1 + amplitude·exp(−|x − center|²/width²)`.
    pub fn perturbed_euclidean(n: usize, amplitude: f64, width: f64, center: Vec<f64>) -> Result<Self> {
        if center.len() != n {
            return Err(HoroError::InvalidParams(format!(
                "perturbed-euclidean: center has {} entries, expected {n}",
                center.len()
            )));
        }
        if !(width > 0.0) || !(amplitude > -1.0) {
            return Err(HoroError::InvalidParams(
                "perturbed-euclidean: requires width > 0 and amplitude > -1".into(),
            ));
        }
        let metric: MetricFn = Arc::new(move |p: &[f64]| {
            let r2: f64 = p.iter().zip(&center).map(|(a, c)| (a - c) * (a - c)).sum();
            let f = 1.0 + amplitude * (-r2 / (width * width)).exp();
            DMatrix::identity(n, n) * f
        });
        Self::custom("perturbed-euclidean", n, metric, None)
    }

    /// Same metric, different derivative evaluation. Products propagate the
    /// mode into both factors; custom metrics stay finite-difference.
    pub fn with_derivative_mode(&self, mode: DerivativeMode) -> Self {
        let geometry = match &self.inner.geometry {
            Geometry::Product { left, right } => Geometry::Product {
                left: left.with_derivative_mode(mode),
                right: right.with_derivative_mode(mode),
            },
            other => other.clone(),
        };
        let mode = match geometry {
            Geometry::Custom { .. } if mode == DerivativeMode::Analytic => self.inner.mode,
            _ => mode,
        };
        Self::build(geometry, mode, self.inner.bounds)
    }

    pub fn derivative_mode(&self) -> DerivativeMode {
        self.inner.mode
    }

    pub fn dim(&self) -> usize {
        match &self.inner.geometry {
            Geometry::Euclidean { n } | Geometry::Hyperbolic { n, .. } | Geometry::Custom { n, .. } => *n,
            Geometry::Sl2r { .. } | Geometry::Heisenberg { .. } => 3,
            Geometry::Product { left, right } => left.dim() + right.dim(),
        }
    }

    pub fn tag(&self) -> ModelTag {
        match &self.inner.geometry {
            Geometry::Euclidean { .. } => ModelTag::Euclidean,
            Geometry::Hyperbolic { k, .. } => ModelTag::Hyperbolic { k: *k },
            Geometry::Sl2r { a, b } => ModelTag::Sl2r { a: *a, b: *b },
            Geometry::Heisenberg { b } => ModelTag::Heisenberg { b: *b },
            Geometry::Product { left, right } => {
                ModelTag::Product(Box::new(left.tag()), Box::new(right.tag()))
            }
            Geometry::Custom { name, .. } => ModelTag::Custom(name.clone()),
        }
    }

    pub fn curvature_bounds(&self) -> Option<CurvatureBounds> {
        self.inner.bounds
    }

    /// Factors of a product model.
    pub fn factors(&self) -> Option<(&ManifoldSpec, &ManifoldSpec)> {
        match &self.inner.geometry {
            Geometry::Product { left, right } => Some((left, right)),
            _ => None,
        }
    }

    /// Coordinate ranges of the irreducible factors, in chart order.
    pub fn factor_ranges(&self) -> Vec<std::ops::Range<usize>> {
        match self.factors() {
            Some((l, r)) => {
                let k = l.dim();
                let mut out = l.factor_ranges();
                out.extend(r.factor_ranges().into_iter().map(|q| q.start + k..q.end + k));
                out
            }
            None => vec![0..self.dim()],
        }
    }

    pub fn is_custom(&self) -> bool {
        match &self.inner.geometry {
            Geometry::Custom { .. } => true,
            Geometry::Product { left, right } => left.is_custom() || right.is_custom(),
            _ => false,
        }
    }

    /// A convenient interior point: the origin, with the half-space
    /// coordinate set to 1 for hyperbolic factors.
    pub fn anchor(&self) -> ChartPoint {
        match &self.inner.geometry {
            Geometry::Hyperbolic { n, .. } => {
                let mut p = DVector::zeros(*n);
                p[n - 1] = 1.0;
                p
            }
            Geometry::Product { left, right } => concat(&left.anchor(), &right.anchor()),
            _ => DVector::zeros(self.dim()),
        }
    }

    pub fn in_domain(&self, p: &[f64]) -> bool {
        if p.len() != self.dim() || p.iter().any(|x| !x.is_finite() || x.abs() > COORD_LIMIT) {
            return false;
        }
        match &self.inner.geometry {
            Geometry::Hyperbolic { n, .. } => p[n - 1] > 1.0 / COORD_LIMIT,
            Geometry::Sl2r { .. } => p[0].abs() < 300.0,
            Geometry::Product { left, right } => {
                let m = left.dim();
                left.in_domain(&p[..m]) && right.in_domain(&p[m..])
            }
            Geometry::Custom { domain: Some(d), .. } => d(p),
            _ => true,
        }
    }

    fn check_domain(&self, p: &[f64]) -> Result<()> {
        if self.in_domain(p) {
            Ok(())
        } else {
            Err(HoroError::OutsideChart { point: p.to_vec() })
        }
    }

    /// Metric matrix `g_ij(p)`.
    pub fn metric(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        self.check_domain(p)?;
        let g = self.metric_unchecked(p);
        if g.iter().any(|x| !x.is_finite()) || g.clone().cholesky().is_none() {
            return Err(HoroError::SingularMetric { point: p.to_vec() });
        }
        Ok(g)
    }

    fn metric_unchecked(&self, p: &[f64]) -> DMatrix<f64> {
        match &self.inner.geometry {
            Geometry::Euclidean { n } => DMatrix::identity(*n, *n),
            Geometry::Hyperbolic { n, k } => {
                let y = p[n - 1];
                DMatrix::identity(*n, *n) / (k * k * y * y)
            }
            Geometry::Sl2r { .. } | Geometry::Heisenberg { .. } => self.analytic_jet(p, false).g,
            Geometry::Product { left, right } => {
                let m = left.dim();
                block_diag(&left.metric_unchecked(&p[..m]), &right.metric_unchecked(&p[m..]))
            }
            Geometry::Custom { metric, .. } => {
                let g = metric(p);
                (&g + g.transpose()) * 0.5
            }
        }
    }

    pub fn inner_product(&self, p: &[f64], u: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
        let g = self.metric(p)?;
        Ok(u.dot(&(&g * w)))
    }

    pub fn norm(&self, p: &[f64], u: &DVector<f64>) -> Result<f64> {
        Ok(self.inner_product(p, u, u)?.max(0.0).sqrt())
    }

    /// Metric and its coordinate derivatives from hand-coded formulas.
    fn analytic_jet(&self, p: &[f64], second: bool) -> MetricJet {
        let n = self.dim();
        let mut jet = MetricJet::zeros(n, second);
        match &self.inner.geometry {
            Geometry::Euclidean { .. } => {
                jet.g = DMatrix::identity(n, n);
            }
            Geometry::Hyperbolic { k, .. } => {
                let y = p[n - 1];
                let c = 1.0 / (k * k);
                jet.g = DMatrix::identity(n, n) * (c / (y * y));
                jet.dg[n - 1] = DMatrix::identity(n, n) * (-2.0 * c / (y * y * y));
                if let Some(ddg) = jet.ddg.as_mut() {
                    ddg[n - 1][n - 1] = DMatrix::identity(n, n) * (6.0 * c / (y * y * y * y));
                }
            }
            Geometry::Sl2r { a, b } => {
                let abs_ab = (a + b).abs();
                let c = (2.0 * b).sqrt();
                let e1 = (-p[0]).exp();
                let e2 = e1 * e1;
                let gxx = (abs_ab + 2.0 * b) * e2;
                jet.g = DMatrix::from_row_slice(
                    3,
                    3,
                    &[1.0 / abs_ab, 0.0, 0.0, 0.0, gxx, c * e1, 0.0, c * e1, 1.0],
                );
                jet.dg[0] = DMatrix::from_row_slice(
                    3,
                    3,
                    &[0.0, 0.0, 0.0, 0.0, -2.0 * gxx, -c * e1, 0.0, -c * e1, 0.0],
                );
                if let Some(ddg) = jet.ddg.as_mut() {
                    ddg[0][0] = DMatrix::from_row_slice(
                        3,
                        3,
                        &[0.0, 0.0, 0.0, 0.0, 4.0 * gxx, c * e1, 0.0, c * e1, 0.0],
                    );
                }
            }
            Geometry::Heisenberg { b } => {
                let x = p[0];
                jet.g = DMatrix::from_row_slice(
                    3,
                    3,
                    &[1.0 / b, 0.0, 0.0, 0.0, 1.0, -x, 0.0, -x, 1.0 + x * x],
                );
                jet.dg[0] = DMatrix::from_row_slice(
                    3,
                    3,
                    &[0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, -1.0, 2.0 * x],
                );
                if let Some(ddg) = jet.ddg.as_mut() {
                    ddg[0][0][(2, 2)] = 2.0;
                }
            }
            Geometry::Product { .. } | Geometry::Custom { .. } => {
                unreachable!("analytic jet requested for a structural or custom metric")
            }
        }
        jet
    }

    fn fd_metric_derivatives(&self, p: &[f64], h: f64) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let n = self.dim();
        let g = self.metric(p)?;
        let mut dg = Vec::with_capacity(n);
        let mut q = p.to_vec();
        for m in 0..n {
            q[m] = p[m] + h;
            if !self.in_domain(&q) {
                return Err(HoroError::StencilOutsideChart { point: p.to_vec(), step: h });
            }
            let gp = self.metric_unchecked(&q);
            q[m] = p[m] - h;
            if !self.in_domain(&q) {
                return Err(HoroError::StencilOutsideChart { point: p.to_vec(), step: h });
            }
            let gm = self.metric_unchecked(&q);
            q[m] = p[m];
            dg.push((gp - gm) / (2.0 * h));
        }
        Ok((g, dg))
    }

    /// Christoffel symbols `Γ^k_{ij}` at `p`.
    pub fn christoffel(&self, p: &[f64]) -> Result<Christoffel> {
        self.check_domain(p)?;
        if let Geometry::Product { left, right } = &self.inner.geometry {
            let m = left.dim();
            return Ok(Christoffel::block(&left.christoffel(&p[..m])?, &right.christoffel(&p[m..])?));
        }
        match self.inner.mode {
            DerivativeMode::Analytic => {
                let jet = self.analytic_jet(p, false);
                let ginv = invert(&jet.g, p)?;
                Ok(christoffel_from(&ginv, &jet.dg))
            }
            DerivativeMode::FiniteDifference { step, .. } => {
                let (g, dg) = self.fd_metric_derivatives(p, step)?;
                let ginv = invert(&g, p)?;
                Ok(christoffel_from(&ginv, &dg))
            }
        }
    }

    /// Christoffel symbols and Riemann tensor at `p`.
    pub fn curvature_at(&self, p: &[f64]) -> Result<CurvatureData> {
        self.check_domain(p)?;
        let n = self.dim();
        if let Geometry::Product { left, right } = &self.inner.geometry {
            let m = left.dim();
            let a = left.curvature_at(&p[..m])?;
            let b = right.curvature_at(&p[m..])?;
            return Ok(CurvatureData {
                christoffel: Christoffel::block(&a.christoffel, &b.christoffel),
                riemann: Riemann::block(&a.riemann, &b.riemann),
                metric: block_diag(&a.metric, &b.metric),
                at: DVector::from_column_slice(p),
            });
        }
        let (metric, gamma, dgamma) = match self.inner.mode {
            DerivativeMode::Analytic => {
                let jet = self.analytic_jet(p, true);
                let ginv = invert(&jet.g, p)?;
                let gamma = christoffel_from(&ginv, &jet.dg);
                let dgamma = christoffel_derivative(&ginv, &jet);
                (jet.g, gamma, dgamma)
            }
            DerivativeMode::FiniteDifference { step, second_step } => {
                let (g, dg) = self.fd_metric_derivatives(p, step)?;
                let ginv = invert(&g, p)?;
                let gamma = christoffel_from(&ginv, &dg);
                let mut dgamma = Vec::with_capacity(n);
                let mut q = p.to_vec();
                for m in 0..n {
                    q[m] = p[m] + second_step;
                    let plus = self.fd_christoffel_checked(&q, step, p, second_step)?;
                    q[m] = p[m] - second_step;
                    let minus = self.fd_christoffel_checked(&q, step, p, second_step)?;
                    q[m] = p[m];
                    let d: Vec<f64> = plus
                        .data
                        .iter()
                        .zip(&minus.data)
                        .map(|(a, b)| (a - b) / (2.0 * second_step))
                        .collect();
                    dgamma.push(Christoffel { n, data: d });
                }
                (g, gamma, dgamma)
            }
        };
        let riemann = riemann_from(&gamma, &dgamma);
        Ok(CurvatureData {
            christoffel: gamma,
            riemann,
            metric,
            at: DVector::from_column_slice(p),
        })
    }

    fn fd_christoffel_checked(&self, q: &[f64], step: f64, origin: &[f64], outer: f64) -> Result<Christoffel> {
        if !self.in_domain(q) {
            return Err(HoroError::StencilOutsideChart { point: origin.to_vec(), step: outer });
        }
        let (g, dg) = self.fd_metric_derivatives(q, step).map_err(|e| match e {
            HoroError::StencilOutsideChart { .. } => {
                HoroError::StencilOutsideChart { point: origin.to_vec(), step: outer }
            }
            other => other,
        })?;
        let ginv = invert(&g, q)?;
        Ok(christoffel_from(&ginv, &dg))
    }

    /// `|g(v,v) − 1|` for a tangent vector.
    pub fn unit_deviation(&self, v: &TangentVector) -> Result<f64> {
        Ok((self.inner_product(v.base.as_slice(), &v.components, &v.components)? - 1.0).abs())
    }

    /// Rescales chart components to unit g-length.
    pub fn normalize(&self, base: &ChartPoint, components: &DVector<f64>) -> Result<TangentVector> {
        let nrm = self.norm(base.as_slice(), components)?;
        if !(nrm > 0.0) {
            return Err(HoroError::InvalidParams("cannot normalize a zero vector".into()));
        }
        Ok(TangentVector {
            base: base.clone(),
            components: components / nrm,
        })
    }

    /// A g-orthonormal basis of `v^⊥` built by greedy Gram–Schmidt on the
    /// coordinate vectors (largest remaining component first; ties by index).
    pub fn orthonormal_frame(&self, v: &TangentVector) -> Result<Vec<DVector<f64>>> {
        let n = self.dim();
        let p = v.base.as_slice();
        let g = self.metric(p)?;
        let ip = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(&g * b));
        let vn = &v.components / ip(&v.components, &v.components).sqrt();
        let mut basis = vec![vn];
        let mut remaining: Vec<usize> = (0..n).collect();
        while basis.len() < n {
            let mut best: Option<(usize, f64, DVector<f64>)> = None;
            for (slot, &i) in remaining.iter().enumerate() {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                let e = &e / ip(&e, &e).sqrt();
                let mut r = e.clone();
                for b in &basis {
                    r -= b * ip(b, &r);
                }
                let res = ip(&r, &r).sqrt();
                if best.as_ref().is_none_or(|(_, bres, _)| res > *bres * (1.0 + 1e-12)) {
                    best = Some((slot, res, r));
                }
            }
            let (slot, res, mut r) = best.expect("non-empty candidate list");
            remaining.remove(slot);
            // second pass for orthogonality
            for b in &basis {
                r -= b * ip(b, &r);
            }
            let nr = ip(&r, &r).sqrt();
            if !(res > 1e-8) || !(nr > 0.0) {
                return Err(HoroError::SingularMetric { point: p.to_vec() });
            }
            basis.push(r / nr);
        }
        Ok(basis.into_iter().skip(1).collect())
    }

    /// Raw matrix `⟨R(e_i, v)v, e_j⟩`, before symmetrization.
    pub fn jacobi_operator_raw(&self, v: &TangentVector, frame: &[DVector<f64>]) -> Result<DMatrix<f64>> {
        let dev = self.unit_deviation(v)?;
        if dev > 1e-6 {
            return Err(HoroError::NotUnit { deviation: dev });
        }
        let curv = self.curvature_at(v.base.as_slice())?;
        Ok(curv.jacobi_matrix(&v.components, frame))
    }

    /// Jacobi operator `R_v = R(·, v)v` in the orthonormal frame of `v^⊥`,
    /// symmetrized.
    pub fn jacobi_operator(&self, v: &TangentVector, frame: &[DVector<f64>]) -> Result<DMatrix<f64>> {
        let m = self.jacobi_operator_raw(v, frame)?;
        Ok((&m + m.transpose()) * 0.5)
    }

    /// Sectional curvature of `span(u, w)` at `p`.
    pub fn sectional_curvature(&self, p: &[f64], u: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
        let curv = self.curvature_at(p)?;
        curv.sectional(u, w)
    }
}

/// A tangent vector in chart components.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: ChartPoint,
    pub components: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: ChartPoint, components: DVector<f64>) -> Self {
        Self { base, components }
    }

    pub fn reversed(&self) -> Self {
        Self {
            base: self.base.clone(),
            components: -&self.components,
        }
    }
}

struct MetricJet {
    g: DMatrix<f64>,
    dg: Vec<DMatrix<f64>>,
    ddg: Option<Vec<Vec<DMatrix<f64>>>>,
}

impl MetricJet {
    fn zeros(n: usize, second: bool) -> Self {
        Self {
            g: DMatrix::zeros(n, n),
            dg: vec![DMatrix::zeros(n, n); n],
            ddg: second.then(|| vec![vec![DMatrix::zeros(n, n); n]; n]),
        }
    }
}

/// `Γ^k_{ij}`, stored `[k][i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    #[inline]
    fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.data[(k * self.n + i) * self.n + j] = v;
    }

    /// `Γ^k_{ij} u^i w^j`.
    pub fn contract(&self, u: &[f64], w: &[f64], out: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                if u[i] == 0.0 {
                    continue;
                }
                let row = &self.data[(k * n + i) * n..(k * n + i + 1) * n];
                let mut s = 0.0;
                for j in 0..n {
                    s += row[j] * w[j];
                }
                acc += u[i] * s;
            }
            out[k] = acc;
        }
    }

    pub fn max_abs_diff(&self, other: &Christoffel) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn block(a: &Christoffel, b: &Christoffel) -> Self {
        let (m, r) = (a.n, b.n);
        let mut out = Christoffel::zeros(m + r);
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    out.set(k, i, j, a.get(k, i, j));
                }
            }
        }
        for k in 0..r {
            for i in 0..r {
                for j in 0..r {
                    out.set(m + k, m + i, m + j, b.get(k, i, j));
                }
            }
        }
        out
    }
}

/// `R^l_{ijk}`, stored `[l][i][j][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Riemann {
    n: usize,
    data: Vec<f64>,
}

impl Riemann {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n * n * n] }
    }

    #[inline]
    pub fn get(&self, l: usize, i: usize, j: usize, k: usize) -> f64 {
        let n = self.n;
        self.data[((l * n + i) * n + j) * n + k]
    }

    #[inline]
    fn set(&mut self, l: usize, i: usize, j: usize, k: usize, v: f64) {
        let n = self.n;
        self.data[((l * n + i) * n + j) * n + k] = v;
    }

    /// `R(X, Y)Z` in chart components.
    pub fn apply(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut out = DVector::zeros(n);
        for l in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                if x[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    if y[j] == 0.0 {
                        continue;
                    }
                    let base = ((l * n + i) * n + j) * n;
                    let mut s = 0.0;
                    for k in 0..n {
                        s += self.data[base + k] * z[k];
                    }
                    acc += x[i] * y[j] * s;
                }
            }
            out[l] = acc;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn block(a: &Riemann, b: &Riemann) -> Self {
        let (m, r) = (a.n, b.n);
        let mut out = Riemann::zeros(m + r);
        for l in 0..m {
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        out.set(l, i, j, k, a.get(l, i, j, k));
                    }
                }
            }
        }
        for l in 0..r {
            for i in 0..r {
                for j in 0..r {
                    for k in 0..r {
                        out.set(m + l, m + i, m + j, m + k, b.get(l, i, j, k));
                    }
                }
            }
        }
        out
    }
}

/// Connection and curvature at one chart point.
#[derive(Debug, Clone)]
pub struct CurvatureData {
    pub christoffel: Christoffel,
    pub riemann: Riemann,
    pub metric: DMatrix<f64>,
    pub at: ChartPoint,
}

impl CurvatureData {
    pub fn inner(&self, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        u.dot(&(&self.metric * w))
    }

    pub fn sectional(&self, u: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
        let gram = self.inner(u, u) * self.inner(w, w) - self.inner(u, w).powi(2);
        if gram < 1e-14 {
            return Err(HoroError::DegeneratePlane { gram });
        }
        let ruw = self.riemann.apply(u, w, w);
        Ok(self.inner(&ruw, u) / gram)
    }

    /// `⟨R(e_i, v)v, e_j⟩` for a frame `e`.
    pub fn jacobi_matrix(&self, v: &DVector<f64>, frame: &[DVector<f64>]) -> DMatrix<f64> {
        let m = frame.len();
        let images: Vec<DVector<f64>> = frame.iter().map(|e| self.riemann.apply(e, v, v)).collect();
        let lowered: Vec<DVector<f64>> = frame.iter().map(|e| &self.metric * e).collect();
        DMatrix::from_fn(m, m, |i, j| images[i].dot(&lowered[j]))
    }

    /// Max of `|R^l_{ijk} + R^l_{jik}|`, relative to the tensor's scale.
    pub fn antisymmetry_residual(&self) -> f64 {
        let n = self.christoffel.dim();
        let mut worst = 0.0_f64;
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        worst = worst.max((self.riemann.get(l, i, j, k) + self.riemann.get(l, j, i, k)).abs());
                    }
                }
            }
        }
        worst / self.riemann.max_abs().max(1.0)
    }

    /// Max of the cyclic sum `|R^l_{ijk} + R^l_{jki} + R^l_{kij}|`.
    pub fn bianchi_residual(&self) -> f64 {
        let n = self.christoffel.dim();
        let mut worst = 0.0_f64;
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let s = self.riemann.get(l, i, j, k)
                            + self.riemann.get(l, j, k, i)
                            + self.riemann.get(l, k, i, j);
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst / self.riemann.max_abs().max(1.0)
    }

    /// Max of `|R_{ijkl} − R_{klij}|` with the first index lowered.
    pub fn pair_symmetry_residual(&self) -> f64 {
        let n = self.christoffel.dim();
        let lower = |i: usize, j: usize, k: usize, l: usize| -> f64 {
            // R_{ijkl} = ⟨R(∂_i,∂_j)∂_k, ∂_l⟩
            (0..n).map(|m| self.riemann.get(m, i, j, k) * self.metric[(m, l)]).sum()
        };
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        worst = worst.max((lower(i, j, k, l) - lower(k, l, i, j)).abs());
                    }
                }
            }
        }
        worst / self.riemann.max_abs().max(1.0)
    }
}

fn invert(g: &DMatrix<f64>, p: &[f64]) -> Result<DMatrix<f64>> {
    g.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| HoroError::SingularMetric { point: p.to_vec() })
}

/// Lowered symbols `Γ_{l,ij} = ½(∂_i g_{lj} + ∂_j g_{li} − ∂_l g_{ij})`.
fn lowered(dg: &[DMatrix<f64>], l: usize, i: usize, j: usize) -> f64 {
    0.5 * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)])
}

fn christoffel_from(ginv: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> Christoffel {
    let n = ginv.nrows();
    let mut out = Christoffel::zeros(n);
    for i in 0..n {
        for j in i..n {
            let low: Vec<f64> = (0..n).map(|l| lowered(dg, l, i, j)).collect();
            for k in 0..n {
                let v: f64 = (0..n).map(|l| ginv[(k, l)] * low[l]).sum();
                out.set(k, i, j, v);
                out.set(k, j, i, v);
            }
        }
    }
    out
}

/// `∂_m Γ^k_{ij}` for each m, from analytic first and second metric
/// derivatives.
fn christoffel_derivative(ginv: &DMatrix<f64>, jet: &MetricJet) -> Vec<Christoffel> {
    let n = ginv.nrows();
    let ddg = jet.ddg.as_ref().expect("second derivatives requested");
    (0..n)
        .map(|m| {
            let dginv = -(ginv * &jet.dg[m] * ginv);
            let mut out = Christoffel::zeros(n);
            for i in 0..n {
                for j in i..n {
                    for k in 0..n {
                        let mut v = 0.0;
                        for l in 0..n {
                            let low = lowered(&jet.dg, l, i, j);
                            let dlow = 0.5 * (ddg[m][i][(l, j)] + ddg[m][j][(l, i)] - ddg[m][l][(i, j)]);
                            v += dginv[(k, l)] * low + ginv[(k, l)] * dlow;
                        }
                        out.set(k, i, j, v);
                        out.set(k, j, i, v);
                    }
                }
            }
            out
        })
        .collect()
}

fn riemann_from(gamma: &Christoffel, dgamma: &[Christoffel]) -> Riemann {
    let n = gamma.dim();
    let mut out = Riemann::zeros(n);
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut v = dgamma[i].get(l, j, k) - dgamma[j].get(l, i, k);
                    for m in 0..n {
                        v += gamma.get(l, i, m) * gamma.get(m, j, k) - gamma.get(l, j, m) * gamma.get(m, i, k);
                    }
                    out.set(l, i, j, k, v);
                }
            }
        }
    }
    out
}

fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, r) = (a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(m + r, m + r);
    out.view_mut((0, 0), (m, m)).copy_from(a);
    out.view_mut((m, m), (r, r)).copy_from(b);
    out
}

pub(crate) fn concat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn factor_ranges_follow_chart_order() {
        let h2 = ManifoldSpec::hyperbolic(2, 1.0).unwrap();
        let inner = ManifoldSpec::product(ManifoldSpec::euclidean(1).unwrap(), h2.clone()).unwrap();
        let spec = ManifoldSpec::product(h2, inner).unwrap();
        assert_eq!(spec.factor_ranges(), vec![0..2, 2..3, 3..5]);
        assert_eq!(ManifoldSpec::heisenberg(1.0).unwrap().factor_ranges(), vec![0..3]);
    }

    #[test]
    fn rejects_invalid_params() {
        let err = ManifoldSpec::sl2r(-1.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("a + b < 0"), "{err}");
        assert!(ManifoldSpec::sl2r(-2.0, 0.0).unwrap_err().to_string().contains("b > 0"));
        assert!(ManifoldSpec::hyperbolic(3, -1.0).is_err());
        assert!(ManifoldSpec::heisenberg(0.0).is_err());
    }

    #[test]
    fn sl2r_metric_at_origin() {
        let m = ManifoldSpec::sl2r(-2.0, 1.0).unwrap();
        let g = m.metric(&[0.0, 0.0, 0.0]).unwrap();
        assert!((g[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((g[(1, 1)] - 3.0).abs() < 1e-15);
        assert!((g[(1, 2)] - 2f64.sqrt()).abs() < 1e-15);
        assert!((g[(2, 2)] - 1.0).abs() < 1e-15);
        assert_eq!(g[(0, 1)], 0.0);
    }

    #[test]
    fn product_metric_is_block_diagonal() {
        let m = make_model(&ModelParams::Product(
            Box::new(ModelParams::Hyperbolic { n: 2, k: 1.0 }),
            Box::new(ModelParams::Euclidean { n: 1 }),
        ))
        .unwrap();
        let g = m.metric(&[0.3, 2.0, -1.0]).unwrap();
        assert!((g[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((g[(1, 1)] - 0.25).abs() < 1e-15);
        assert_eq!(g[(2, 2)], 1.0);
        assert_eq!(g[(0, 2)], 0.0);
        assert_eq!(g[(1, 2)], 0.0);
        assert_eq!(m.curvature_bounds().unwrap().r0, 1.0);
    }

    #[test]
    fn euclidean_is_flat() {
        let m = ManifoldSpec::euclidean(3).unwrap();
        let c = m.curvature_at(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(c.christoffel.max_abs(), 0.0);
        assert_eq!(c.riemann.max_abs(), 0.0);
    }

    #[test]
    fn scaled_half_plane_curvature() {
        let m = ManifoldSpec::hyperbolic(2, 1.5).unwrap();
        for mode in [DerivativeMode::Analytic, DerivativeMode::finite_difference()] {
            let m = m.with_derivative_mode(mode);
            let k = m
                .sectional_curvature(&[0.4, 1.3], &dv(&[1.0, 0.0]), &dv(&[0.0, 1.0]))
                .unwrap();
            // the nested stencil has O(h^2) ~ 1e-8 truncation error
            let tol = if mode == DerivativeMode::Analytic { 1e-8 } else { 1e-6 };
            assert!((k + 2.25).abs() < tol, "{mode:?}: {k}");
        }
    }

    #[test]
    fn hyperbolic_three_space_planes() {
        let m = ManifoldSpec::hyperbolic(3, 1.0).unwrap();
        let p = [0.2, -0.7, 0.8];
        let pairs = [([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]), ([1.0, 2.0, 0.0], [0.3, 0.0, 1.0])];
        for (u, w) in pairs {
            let k = m.sectional_curvature(&p, &dv(&u), &dv(&w)).unwrap();
            assert!((k + 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn degenerate_plane_rejected() {
        let m = ManifoldSpec::hyperbolic(3, 1.0).unwrap();
        let e = m
            .sectional_curvature(&[0.0, 0.0, 1.0], &dv(&[1.0, 0.0, 0.0]), &dv(&[2.0, 0.0, 0.0]))
            .unwrap_err();
        assert!(matches!(e, HoroError::DegeneratePlane { .. }));
    }

    #[test]
    fn product_mixed_plane_is_flat() {
        let m = ManifoldSpec::product(ManifoldSpec::hyperbolic(2, 1.0).unwrap(), ManifoldSpec::euclidean(1).unwrap())
            .unwrap();
        let p = [0.0, 1.0, 0.0];
        let k = m.sectional_curvature(&p, &dv(&[0.0, 1.0, 0.0]), &dv(&[0.0, 0.0, 1.0])).unwrap();
        assert!(k.abs() < 1e-8);
        let k = m.sectional_curvature(&p, &dv(&[0.0, 1.0, 0.0]), &dv(&[1.0, 0.0, 0.0])).unwrap();
        assert!((k + 1.0).abs() < 1e-8);
    }

    #[test]
    fn heisenberg_sectional_analytic_matches_fd() {
        let m = ManifoldSpec::heisenberg(1.0).unwrap();
        let fd = m.with_derivative_mode(DerivativeMode::finite_difference());
        let p = [0.0, 0.0, 0.0];
        let u = dv(&[1.0, 0.0, 0.0]);
        let w = dv(&[0.0, 0.0, 1.0]);
        let ka = m.sectional_curvature(&p, &u, &w).unwrap();
        let kf = fd.sectional_curvature(&p, &u, &w).unwrap();
        assert!(ka < 0.0, "{ka}");
        assert!((ka - kf).abs() < 1e-6, "{ka} vs {kf}");
        // standard Heisenberg value for b = 1: −3/4
        assert!((ka + 0.75).abs() < 1e-12, "{ka}");
    }

    #[test]
    fn sl2r_curvature_component() {
        let m = ManifoldSpec::sl2r(-2.0, 1.0).unwrap();
        let c = m.curvature_at(&[0.0, 0.0, 0.0]).unwrap();
        let r = c.riemann.apply(&dv(&[1.0, 0.0, 0.0]), &dv(&[0.0, 0.0, 1.0]), &dv(&[0.0, 0.0, 1.0]));
        assert!((r[0] - 0.5).abs() < 1e-12 && r[1].abs() < 1e-12 && r[2].abs() < 1e-12, "{r}");
    }

    #[test]
    fn stencil_leaving_chart_is_rejected() {
        let m = ManifoldSpec::hyperbolic(2, 1.0)
            .unwrap()
            .with_derivative_mode(DerivativeMode::FiniteDifference { step: 1e-3, second_step: 1e-2 });
        let e = m.curvature_at(&[0.0, 5e-3]).unwrap_err();
        assert!(matches!(e, HoroError::StencilOutsideChart { .. }), "{e:?}");
        assert!(matches!(m.curvature_at(&[0.0, -1.0]).unwrap_err(), HoroError::OutsideChart { .. }));
    }

    #[test]
    fn singular_custom_metric_rejected() {
        let metric: MetricFn = Arc::new(|_p: &[f64]| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let m = ManifoldSpec::custom("degenerate", 2, metric, None).unwrap();
        assert!(matches!(m.metric(&[0.0, 0.0]).unwrap_err(), HoroError::SingularMetric { .. }));
    }

    #[test]
    fn jacobi_operator_examples() {
        let h3 = ManifoldSpec::hyperbolic(3, 1.0).unwrap();
        let v = h3.normalize(&dv(&[0.1, 0.2, 0.9]), &dv(&[0.3, -0.5, 0.2])).unwrap();
        let frame = h3.orthonormal_frame(&v).unwrap();
        let r = h3.jacobi_operator(&v, &frame).unwrap();
        assert!((r + DMatrix::identity(2, 2)).amax() < 1e-8);

        let prod = ManifoldSpec::product(h3_factor(), ManifoldSpec::euclidean(1).unwrap()).unwrap();
        let v = prod.normalize(&dv(&[0.0, 1.0, 0.0]), &dv(&[0.0, 1.0, 0.0])).unwrap();
        let frame = prod.orthonormal_frame(&v).unwrap();
        // frame: H² perpendicular first, then the line
        assert!(frame[0][2].abs() < 1e-15 && frame[1][2] == 1.0);
        let r = prod.jacobi_operator(&v, &frame).unwrap();
        assert!((r - DMatrix::from_diagonal(&dv(&[-1.0, 0.0]))).amax() < 1e-12);

        let e3 = ManifoldSpec::euclidean(3).unwrap();
        let v = e3.normalize(&dv(&[0.0, 0.0, 0.0]), &dv(&[1.0, 1.0, 0.0])).unwrap();
        let frame = e3.orthonormal_frame(&v).unwrap();
        assert_eq!(e3.jacobi_operator(&v, &frame).unwrap().amax(), 0.0);
    }

    #[test]
    fn jacobi_operator_rejects_non_unit() {
        let h3 = ManifoldSpec::hyperbolic(3, 1.0).unwrap();
        let v = TangentVector::new(dv(&[0.0, 0.0, 1.0]), dv(&[2.0, 0.0, 0.0]));
        let frame = vec![dv(&[0.0, 1.0, 0.0]), dv(&[0.0, 0.0, 1.0])];
        assert!(matches!(h3.jacobi_operator(&v, &frame).unwrap_err(), HoroError::NotUnit { .. }));
    }

    fn h3_factor() -> ManifoldSpec {
        ManifoldSpec::hyperbolic(2, 1.0).unwrap()
    }
}
