//! Seeded unit-vector sampling.
//!
//! Components are standard-normal draws at a fixed chart point, rescaled to
//! unit `g`-length. The stream is ChaCha8 seeded from a `u64`, so a seed
//! fixes the whole sample on every platform.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{HoroError, Result};
use crate::manifold::{ChartPoint, ManifoldSpec, ModelTag, TangentVector};

/// Cap on draws per accepted vector for filtered sampling.
const MAX_DRAWS_PER_SAMPLE: usize = 10_000;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// `count` unit vectors at `base`.
pub fn unit_vectors(spec: &ManifoldSpec, base: &ChartPoint, seed: u64, count: usize) -> Result<Vec<TangentVector>> {
    unit_vectors_where(spec, base, seed, count, |_| true)
}

/// Like [`unit_vectors`], keeping only draws accepted by `keep`.
pub fn unit_vectors_where(
    spec: &ManifoldSpec,
    base: &ChartPoint,
    seed: u64,
    count: usize,
    keep: impl Fn(&TangentVector) -> bool,
) -> Result<Vec<TangentVector>> {
    if !spec.in_domain(base.as_slice()) {
        return Err(HoroError::OutsideChart { point: base.as_slice().to_vec() });
    }
    let mut rng = rng(seed);
    let mut out = Vec::with_capacity(count);
    let mut draws = 0usize;
    while out.len() < count {
        draws += 1;
        if draws > MAX_DRAWS_PER_SAMPLE * count.max(1) {
            return Err(HoroError::InvalidParams(format!(
                "sampling filter accepted {} of {count} vectors after {draws} draws",
                out.len()
            )));
        }
        let c = normal_vector(&mut rng, spec.dim());
        if c.norm() < 1e-12 {
            continue;
        }
        let v = spec.normalize(base, &c)?;
        if keep(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

/// Smallest share of a curved factor on a curved × flat product, and of
/// each factor on a curved × curved product, for which stable limits
/// converge within the default horizon.
pub const MIN_CURVED_SHARE: f64 = 0.6;
pub const MIN_MIXED_SHARE: f64 = 0.45;

/// Whether limit extraction along `v` is expected to resolve: false on
/// products when `v` is too close to one factor (the curved block then
/// decays like `e^{−2a r}` for a small share `a`).
pub fn resolvable_tilt(spec: &ManifoldSpec, v: &TangentVector) -> bool {
    let Some((l, r)) = spec.factors() else {
        return true;
    };
    let Some(a) = left_weight(spec, v) else {
        return true;
    };
    let b = (1.0 - a * a).max(0.0).sqrt();
    let curved = |m: &ManifoldSpec| !matches!(m.tag(), ModelTag::Euclidean);
    match (curved(l), curved(r)) {
        (true, true) => a >= MIN_MIXED_SHARE && b >= MIN_MIXED_SHARE,
        (true, false) => a >= MIN_CURVED_SHARE,
        (false, true) => b >= MIN_CURVED_SHARE,
        (false, false) => true,
    }
}

/// `g`-norm of the left factor's part of `v` on a product model.
pub fn left_weight(spec: &ManifoldSpec, v: &TangentVector) -> Option<f64> {
    let (left, _) = spec.factors()?;
    let k = left.dim();
    let p = v.base.rows(0, k).into_owned();
    let c = v.components.rows(0, k).into_owned();
    left.norm(p.as_slice(), &c).ok()
}
