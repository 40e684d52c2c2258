use super::interval::Interval;
use crate::error::{Error, Result};

pub const DEFAULT_ROOT_TOL: f64 = 1e-10;

const MAX_ITER: usize = 200;

/// Brent's method on a finite bracket with a sign change.
///
/// Returns `x` with the final bracket no wider than `tol`. An exact zero at
/// either endpoint is returned directly.
pub fn find_root<F: Fn(f64) -> f64>(f: F, bracket: Interval, tol: f64) -> Result<f64> {
    if !bracket.is_finite() {
        return Err(Error::invalid("root bracket must be finite"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let (mut a, mut b) = (bracket.lo(), bracket.hi());
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.is_nan() || fb.is_nan() {
        return Err(Error::invalid("function is NaN at a bracket endpoint"));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::InvalidBracket {
            lo: a,
            hi: b,
            f_lo: fa,
            f_hi: fb,
        });
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(m) };
        fb = f(b);
    }
    Err(Error::NonConvergence {
        routine: "find_root",
        detail: format!("no convergence within {MAX_ITER} iterations near {b}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statmath::normal::norm_cdf;

    #[test]
    fn linear() {
        let x = find_root(|x| x - 1.0, Interval::finite(0.0, 2.0).unwrap(), 1e-12).unwrap();
        assert!((x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_quantile_by_root() {
        let x = find_root(|x| norm_cdf(x) - 0.975, Interval::finite(0.0, 4.0).unwrap(), 1e-12)
            .unwrap();
        assert!((x - 1.959_963_984_540_054).abs() < 1e-11);
    }

    #[test]
    fn sqrt_two() {
        let x = find_root(|x| x * x - 2.0, Interval::finite(1.0, 2.0).unwrap(), 1e-12).unwrap();
        assert!((x - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn same_sign_is_rejected() {
        let err = find_root(|x| x * x + 1.0, Interval::finite(-1.0, 1.0).unwrap(), 1e-10)
            .unwrap_err();
        assert!(matches!(err, Error::InvalidBracket { .. }));
    }

    #[test]
    fn step_function_converges_to_jump() {
        let x = find_root(
            |x| if x > 0.3 { 1.0 } else { -1.0 },
            Interval::finite(0.0, 1.0).unwrap(),
            1e-12,
        )
        .unwrap();
        assert!((x - 0.3).abs() < 1e-11);
    }
}
