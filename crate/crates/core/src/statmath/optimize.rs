use super::interval::Interval;
use crate::error::{Error, Result};

/// Minimum number of points in the coarse scan of [`maximize_1d`].
pub const MIN_GRID_POINTS: usize = 401;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub argmax: f64,
    pub max: f64,
}

/// Global maximisation of `f` over a finite interval.
///
/// A 401-point scan locates the best cell, golden-section search refines
/// inside the neighbouring cells. When the maximum is a plateau the
/// smallest maximiser is reported.
pub fn maximize_1d<F: Fn(f64) -> f64>(f: F, domain: Interval, tol: f64) -> Result<Maximum> {
    maximize_on_grid(f, domain, tol, MIN_GRID_POINTS)
}

/// [`maximize_1d`] with a caller-chosen scan density (at least 401 points).
pub fn maximize_on_grid<F: Fn(f64) -> f64>(
    f: F,
    domain: Interval,
    tol: f64,
    grid_points: usize,
) -> Result<Maximum> {
    if !domain.is_finite() {
        return Err(Error::invalid("maximisation domain must be finite"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let n = grid_points.max(MIN_GRID_POINTS);
    let (lo, hi) = (domain.lo(), domain.hi());
    let step = (hi - lo) / (n - 1) as f64;
    let at = |i: usize| if i == n - 1 { hi } else { lo + step * i as f64 };

    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        let v = f(at(i));
        if v > best {
            best = v;
            best_i = i;
        }
    }
    if best == f64::NEG_INFINITY || best.is_nan() {
        return Err(Error::NonConvergence {
            routine: "maximize_1d",
            detail: "objective is -inf or NaN on the whole grid".into(),
        });
    }

    let left = at(best_i.saturating_sub(1));
    let right = at((best_i + 1).min(n - 1));
    let mut result = Maximum {
        argmax: at(best_i),
        max: best,
    };
    if right > left {
        let (x, v) = golden_section(&f, left, right, tol);
        if v > result.max {
            result = Maximum { argmax: x, max: v };
        }
    }

    // Slide to the left edge of a plateau.
    if best_i > 0 && result.argmax == at(best_i) {
        let (mut a, mut b) = (at(best_i - 1), at(best_i));
        while b - a > tol {
            let mid = 0.5 * (a + b);
            if f(mid) >= result.max {
                b = mid;
            } else {
                a = mid;
            }
        }
        if b < result.argmax {
            result.argmax = b;
        }
    }
    Ok(result)
}

fn golden_section<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        // `>=` keeps the left point on ties.
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}
