use thiserror::Error;

/// Errors raised by the geometric and numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HoroError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("point {point:?} lies outside the chart domain")]
    OutsideChart { point: Vec<f64> },

    #[error("metric is singular or not positive definite at {point:?}")]
    SingularMetric { point: Vec<f64> },

    #[error("finite-difference stencil of width {step} leaves the chart at {point:?}")]
    StencilOutsideChart { point: Vec<f64>, step: f64 },

    #[error("vector is not unit length: |g(v,v) - 1| = {deviation:e}")]
    NotUnit { deviation: f64 },

    #[error("degenerate plane: Gram determinant {gram:e}")]
    DegeneratePlane { gram: f64 },

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("maximum number of integrator steps exceeded at t = {t}")]
    TooManySteps { t: f64 },

    #[error("time {t} outside trajectory span [{t_min}, {t_max}]")]
    OutsideSpan { t: f64, t_min: f64, t_max: f64 },

    #[error("trajectory left the chart at t = {t} before reaching the requested time")]
    ChartExit { t: f64 },

    #[error("shooting did not converge after {iterations} iterations (residual {residual:e})")]
    ShootingFailed { iterations: usize, residual: f64 },

    #[error("shooting Jacobian nearly singular (condition {condition:e}); conjugate point suspected")]
    NearConjugate { condition: f64 },

    #[error("A_v(r) nearly singular at r = {r} (condition {condition:e}); conjugate point obstruction")]
    ConjugateObstruction { r: f64, condition: f64 },

    #[error("det A_v changes sign at t = {t}; conjugate point before the requested horizon")]
    ConjugateBeforeHorizon { t: f64 },

    /// `last` is the final iterate, row-major.
    #[error("stable limit did not converge by r = {r} (residual {residual:e})")]
    LimitNotConverged { r: f64, residual: f64, last: Vec<f64> },

    #[error("monotonicity of S'_(v,r)(0) violated between r = {r_lo} and r = {r_hi} (min eigenvalue {min_eigenvalue:e})")]
    NonMonotone {
        r_lo: f64,
        r_hi: f64,
        min_eigenvalue: f64,
    },

    #[error("symmetrized result discarded asymmetry {asymmetry:e} above the 1e-6 guard")]
    Asymmetric { asymmetry: f64 },

    #[error("Riccati solution blew up at t = {t}")]
    RiccatiBlowUp { t: f64 },

    #[error("Busemann estimate did not converge by T = {t_max} (last iterates {last:?})")]
    BusemannNotConverged { t_max: f64, last: [f64; 2] },

    #[error("mismatched Jacobi states: {0}")]
    Mismatch(String),

    #[error("operation not available for this model: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, HoroError>;
