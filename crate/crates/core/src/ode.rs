//! Dormand–Prince 5(4) integrator with PI step control and continuous
//! (dense) output.
//!
//! Local error is measured per block of state components: each block is
//! scaled by `atol + rtol * max|y|` over the block, before and after the
//! step, and the error ratio is the max over blocks. Geodesic states put
//! every chart coordinate in its own block and split each tangent vector
//! into one block per product factor, so coordinates and velocities near a
//! half-space boundary keep relative accuracy.

use std::ops::Range;

use crate::error::{HoroError, Result};

/// A first-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    /// Evaluates the right-hand side. Returns `false` when `y` lies outside
    /// the system's domain; the integrator then rejects the step.
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> bool;

    /// Groups of components sharing one error scale.
    fn blocks(&self) -> Vec<Range<usize>> {
        (0..self.dim()).map(|i| i..i + 1).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: usize,
    pub dense: bool,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol * 1e-12,
            ..Self::default()
        }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-22,
            h_init: None,
            h_max: None,
            max_steps: 2_000_000,
            dense: true,
        }
    }
}

/// Observer verdict after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepControl {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    /// The observer asked to stop.
    Stopped,
    /// Repeated step rejections caused by the right-hand side reporting an
    /// out-of-domain state.
    DomainExit,
}

#[derive(Debug, Clone)]
struct DenseSegment {
    t0: f64,
    h: f64,
    rcont: [Vec<f64>; 5],
}

/// Piecewise quartic interpolant over accepted steps.
#[derive(Debug, Clone, Default)]
pub struct DenseOutput {
    segments: Vec<DenseSegment>,
}

impl DenseOutput {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Covered interval, ordered `(lo, hi)`.
    pub fn span(&self) -> Option<(f64, f64)> {
        let first = self.segments.first()?;
        let last = self.segments.last()?;
        let a = first.t0;
        let b = last.t0 + last.h;
        Some((a.min(b), a.max(b)))
    }

    /// Accepted step nodes, in integration order, including the start.
    pub fn nodes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        if let Some(first) = self.segments.first() {
            out.push(first.t0);
        }
        out.extend(self.segments.iter().map(|s| s.t0 + s.h));
        out
    }

    fn locate(&self, t: f64) -> &DenseSegment {
        let forward = self.segments[0].h > 0.0;
        // segments are monotone in integration direction
        let idx = self.segments.partition_point(|s| {
            let end = s.t0 + s.h;
            if forward {
                end < t
            } else {
                end > t
            }
        });
        &self.segments[idx.min(self.segments.len() - 1)]
    }

    /// Evaluates the interpolant at `t` into `out`. Panics on an empty
    /// output; callers check the span first.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let seg = self.locate(t);
        let s = (t - seg.t0) / seg.h;
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &seg.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + s * (r2[i] + s1 * (r3[i] + s * (r4[i] + s1 * r5[i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.segments[0].rcont[0].len()];
        self.eval_into(t, &mut out);
        out
    }
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub t_end: f64,
    pub y_end: Vec<f64>,
    pub dense: DenseOutput,
    pub termination: Termination,
    pub accepted: usize,
    pub rejected: usize,
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn error_ratio(blocks: &[Range<usize>], y0: &[f64], y1: &[f64], err: &[f64], opts: &OdeOptions) -> f64 {
    let mut worst = 0.0_f64;
    for b in blocks {
        let mut mag = 0.0_f64;
        let mut e = 0.0_f64;
        for i in b.clone() {
            mag = mag.max(y0[i].abs()).max(y1[i].abs());
            e = e.max(err[i].abs());
        }
        let sc = opts.atol + opts.rtol * mag;
        let ratio = if sc > 0.0 { e / sc } else if e == 0.0 { 0.0 } else { f64::INFINITY };
        worst = worst.max(ratio);
    }
    if worst.is_nan() {
        f64::INFINITY
    } else {
        worst
    }
}

fn initial_step<S: OdeSystem + ?Sized>(
    sys: &S,
    blocks: &[Range<usize>],
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    dir: f64,
    opts: &OdeOptions,
    h_max: f64,
) -> f64 {
    // Components starting at zero would otherwise be measured against a
    // vanishing absolute floor.
    let opts = &OdeOptions { atol: opts.atol.max(opts.rtol * 1e-12), ..*opts };
    let zeros = vec![0.0; y0.len()];
    let d0 = error_ratio(blocks, y0, y0, y0, opts) * opts.rtol;
    let d1 = error_ratio(blocks, y0, y0, f0, opts) * opts.rtol;
    let mut h = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(h_max);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + dir * h * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    if !sys.rhs(t0 + dir * h, &y1, &mut f1) {
        return h * 1e-3;
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = error_ratio(blocks, y0, &zeros, &diff, opts) * opts.rtol / h;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h).min(h1).min(h_max)
}

/// Integrates `sys` from `(t0, y0)` to `t1` (either direction).
///
/// `observer` is called after every accepted step and may stop the run.
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t1: f64,
    opts: &OdeOptions,
    observer: &mut dyn FnMut(f64, &[f64]) -> StepControl,
) -> Result<OdeSolution> {
    let n = sys.dim();
    assert_eq!(y0.len(), n, "state dimension mismatch");
    let blocks = sys.blocks();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut dense = DenseOutput::default();

    if t1 == t0 {
        return Ok(OdeSolution {
            t_end: t0,
            y_end: y,
            dense,
            termination: Termination::Completed,
            accepted: 0,
            rejected: 0,
        });
    }
    let dir = if t1 > t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let h_max = opts.h_max.unwrap_or(span).min(span);

    let mut k1 = vec![0.0; n];
    if !sys.rhs(t, &y, &mut k1) {
        return Err(HoroError::OutsideChart { point: y });
    }
    let mut h = opts
        .h_init
        .unwrap_or_else(|| initial_step(sys, &blocks, t, &y, &k1, dir, opts, h_max))
        .min(h_max);

    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];

    let beta = 0.04;
    let expo1 = 0.2 - beta * 0.75;
    let safe = 0.9;
    let (facc1, facc2): (f64, f64) = (1.0 / 0.2, 1.0 / 10.0);
    let mut facold = 1e-4_f64;
    let mut last_rejected = false;
    let mut domain_rejections = 0usize;
    let mut accepted = 0usize;
    let mut rejected = 0usize;

    loop {
        if accepted + rejected >= opts.max_steps {
            return Err(HoroError::TooManySteps { t });
        }
        let remaining = (t1 - t).abs();
        let mut last = false;
        if h >= remaining * (1.0 - 1e-12) {
            h = remaining;
            last = true;
        }
        let hs = dir * h;
        if h < 1e-14 * t.abs().max(1.0) {
            if domain_rejections > 0 {
                return Ok(OdeSolution {
                    t_end: t,
                    y_end: y,
                    dense,
                    termination: Termination::DomainExit,
                    accepted,
                    rejected,
                });
            }
            return Err(HoroError::StepUnderflow { t });
        }

        let stage = |ytmp: &mut Vec<f64>, coeffs: &[(f64, &Vec<f64>)]| {
            for i in 0..n {
                let mut acc = 0.0;
                for (c, k) in coeffs {
                    acc += c * k[i];
                }
                ytmp[i] = y[i] + hs * acc;
            }
        };

        let mut ok = true;
        stage(&mut ytmp, &[(A21, &k1)]);
        ok &= sys.rhs(t + C2 * hs, &ytmp, &mut k2);
        if ok {
            stage(&mut ytmp, &[(A31, &k1), (A32, &k2)]);
            ok &= sys.rhs(t + C3 * hs, &ytmp, &mut k3);
        }
        if ok {
            stage(&mut ytmp, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            ok &= sys.rhs(t + C4 * hs, &ytmp, &mut k4);
        }
        if ok {
            stage(&mut ytmp, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
            ok &= sys.rhs(t + C5 * hs, &ytmp, &mut k5);
        }
        if ok {
            stage(
                &mut ytmp,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            );
            ok &= sys.rhs(t + hs, &ytmp, &mut k6);
        }
        if ok {
            for i in 0..n {
                ynew[i] = y[i]
                    + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            ok &= sys.rhs(t + hs, &ynew, &mut k7);
        }
        if !ok {
            domain_rejections += 1;
            rejected += 1;
            h *= 0.5;
            last_rejected = true;
            continue;
        }

        for i in 0..n {
            err[i] = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = error_ratio(&blocks, &y, &ynew, &err, opts);
        let fac11 = e.powf(expo1);

        if e <= 1.0 {
            domain_rejections = 0;
            let mut fac = fac11 / facold.powf(beta);
            fac = facc2.max(facc1.min(fac / safe));
            facold = e.max(1e-4);
            let mut hnew = h / fac;

            if opts.dense {
                let mut rcont: [Vec<f64>; 5] = Default::default();
                rcont[0] = y.clone();
                let ydiff: Vec<f64> = ynew.iter().zip(&y).map(|(a, b)| a - b).collect();
                let bspl: Vec<f64> = (0..n).map(|i| hs * k1[i] - ydiff[i]).collect();
                rcont[3] = (0..n).map(|i| ydiff[i] - hs * k7[i] - bspl[i]).collect();
                rcont[4] = (0..n)
                    .map(|i| {
                        hs * (D1 * k1[i]
                            + D3 * k3[i]
                            + D4 * k4[i]
                            + D5 * k5[i]
                            + D6 * k6[i]
                            + D7 * k7[i])
                    })
                    .collect();
                rcont[1] = ydiff;
                rcont[2] = bspl;
                dense.segments.push(DenseSegment { t0: t, h: hs, rcont });
            }

            t = if last { t1 } else { t + hs };
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            accepted += 1;

            if observer(t, &y) == StepControl::Stop {
                return Ok(OdeSolution {
                    t_end: t,
                    y_end: y,
                    dense,
                    termination: Termination::Stopped,
                    accepted,
                    rejected,
                });
            }
            if last {
                return Ok(OdeSolution {
                    t_end: t,
                    y_end: y,
                    dense,
                    termination: Termination::Completed,
                    accepted,
                    rejected,
                });
            }
            if last_rejected {
                hnew = hnew.min(h);
            }
            last_rejected = false;
            h = hnew.min(h_max);
        } else {
            rejected += 1;
            h /= facc1.min(fac11 / safe);
            last_rejected = true;
        }
    }
}
