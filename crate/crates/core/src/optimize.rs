//! One-dimensional maximization and root finding.

use crate::error::{MrsError, Result};

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Maximizes `f` on `[lo, hi]`: a uniform scan over `grid` points locates the
/// best cell, then Brent's method (golden section with parabolic steps)
/// refines it to `tol` in the argument. Non-finite values are an error.
pub fn maximize_scalar<F>(mut f: F, lo: f64, hi: f64, grid: usize, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    assert!(grid >= 3 && lo < hi);
    let h = (hi - lo) / (grid - 1) as f64;
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..grid {
        let x = if i == grid - 1 { hi } else { lo + h * i as f64 };
        let v = f(x);
        if !v.is_finite() {
            return Err(MrsError::SearchFailed(format!("objective is {v} at {x}")));
        }
        if v > best.1 {
            best = (i, v);
        }
    }
    let a = lo + h * best.0.saturating_sub(1) as f64;
    let b = (lo + h * (best.0 + 1) as f64).min(hi);
    let (x, v) = brent_max(&mut f, a, b, tol, 200)?;
    let x0 = lo + h * best.0 as f64;
    // Brent works on a bracket; never return worse than the best grid point.
    if v >= best.1 {
        Ok((x, v))
    } else {
        Ok((x0.min(hi), best.1))
    }
}

/// Brent's derivative-free maximization on `[a, b]`.
pub fn brent_max<F>(f: &mut F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let mut g = |x: f64| -f(x);
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = g(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = tol * 0.5 + 1e-15 * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            if !fx.is_finite() {
                return Err(MrsError::SearchFailed(format!("objective is {} at {x}", -fx)));
            }
            return Ok((x, -fx));
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = g(u);
        if fu.is_nan() {
            return Err(MrsError::SearchFailed(format!("objective is NaN at {u}")));
        }
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, fv) = (w, fw);
            (w, fw) = (x, fx);
            (x, fx) = (u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv) = (w, fw);
                (w, fw) = (u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    Err(MrsError::SearchFailed(format!(
        "no convergence after {max_iter} iterations, bracket [{a}, {b}]"
    )))
}

/// Bisection for a root of a decreasing-or-increasing `f` on `[lo, hi]` with
/// a sign change. Returns the midpoint once the bracket is below `tol`.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(MrsError::SearchFailed(format!(
            "no sign change on [{lo}, {hi}]: f = {flo}, {fhi}"
        )));
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Err(MrsError::SearchFailed(format!(
        "bisection did not converge in {max_iter} iterations, bracket [{lo}, {hi}]"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_maximum() {
        let (x, v) = maximize_scalar(|x| -(x - 0.3).powi(2) + 2.0, -1.0, 1.0, 64, 1e-10).unwrap();
        assert!((x - 0.3).abs() < 1e-8);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn finds_global_of_bimodal() {
        let f = |x: f64| (-(x + 0.6).powi(2) * 50.0).exp() + 1.2 * (-(x - 0.7).powi(2) * 50.0).exp();
        let (x, _) = maximize_scalar(f, -1.0, 1.0, 64, 1e-10).unwrap();
        assert!((x - 0.7).abs() < 1e-4);
    }

    #[test]
    fn boundary_maximum() {
        let (x, _) = maximize_scalar(|x| x, -1.0, 1.0, 64, 1e-10).unwrap();
        assert!(x > 1.0 - 1e-8);
    }

    #[test]
    fn non_finite_is_error() {
        assert!(maximize_scalar(|x| if x > 0.5 { f64::NAN } else { x }, 0.0, 1.0, 64, 1e-10).is_err());
    }

    #[test]
    fn bisection_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        assert!(bisect(|x| x * x + 1.0, 0.0, 2.0, 1e-14, 200).is_err());
    }
}
