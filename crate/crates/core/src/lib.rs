//! Numerical laboratory for Riemannian manifolds without conjugate points:
//! stable and unstable Jacobi tensors, horospherical mean curvature, rank,
//! and D'Atri/harmonic diagnostics on model spaces.

pub mod datri;
pub mod error;
pub mod geodesic;
pub mod horospherical;
pub mod jacobi;
pub mod manifold;
pub mod ode;
pub mod sampling;

pub use error::{HoroError, Result};
pub use manifold::{make_model, ChartPoint, DerivativeMode, ManifoldSpec, ModelParams, ModelTag, TangentVector};
