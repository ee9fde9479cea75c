//! Scalar root finding used by the Legendre transform and the QSD tilt.

use crate::error::{Error, Result};

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 200;

/// Newton's method safeguarded by bisection on a bracket `[lo, hi]` with
/// `f(lo) <= 0 <= f(hi)` for an increasing `f`.
///
/// `f` returns `(value, derivative)`. A Newton step that leaves the current
/// bracket (or does not halve it fast enough) is replaced by a bisection step.
pub fn safeguarded_newton<F>(mut f: F, mut lo: f64, mut hi: f64, x0: f64) -> Result<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    let mut x = if x0 > lo && x0 < hi {
        x0
    } else {
        0.5 * (lo + hi)
    };
    let mut prev_step = hi - lo;
    for _ in 0..NEWTON_MAX_ITER {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        // bisect when Newton leaves the bracket or is not contracting
        let next = if dfx > 0.0
            && newton >= lo
            && newton <= hi
            && (2.0 * fx).abs() <= (prev_step * dfx).abs()
        {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - x).abs();
        prev_step = step;
        x = next;
        if step <= NEWTON_TOL * (1.0 + x.abs()) || hi - lo <= NEWTON_TOL * (1.0 + x.abs()) {
            return Ok(x);
        }
    }
    Err(Error::Convergence {
        what: "safeguarded Newton",
        iterations: NEWTON_MAX_ITER,
    })
}

/// Plain bisection for an increasing function; stops when the bracket is
/// narrower than `tol`.
pub fn bisect_increasing<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol {
            return Ok(mid);
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if hi - lo <= tol {
        Ok(0.5 * (lo + hi))
    } else {
        Err(Error::Convergence {
            what: "bisection",
            iterations: max_iter,
        })
    }
}
