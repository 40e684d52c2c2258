//! Globally adaptive Gauss–Legendre quadrature.
//!
//! Each panel is integrated with a 10-point and a 21-point Gauss–Legendre
//! rule; their difference is the panel's error estimate. The panel with the
//! largest estimate is bisected until the summed estimate drops below the
//! requested absolute tolerance.

use std::collections::BinaryHeap;
use std::sync::OnceLock;

use super::interval::Interval;
use super::normal::norm_pdf;
use crate::error::{Error, Result};

pub const DEFAULT_QUAD_TOL: f64 = 1e-9;

/// Half-width, in standard deviations, of the window kept when an infinite
/// domain is truncated around a Gaussian weight. The discarded mass is
/// below 2e-17.
pub const GAUSSIAN_TRUNCATION: f64 = 8.5;

const MAX_PANELS: usize = 4000;

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
fn legendre_rule(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn rules() -> &'static (Rule, Rule) {
    static RULES: OnceLock<(Rule, Rule)> = OnceLock::new();
    RULES.get_or_init(|| (legendre_rule(10), legendre_rule(21)))
}

struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error).is_eq()
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Ties broken by position so the refinement order is deterministic.
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.lo.total_cmp(&self.lo))
    }
}

fn panel<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Panel {
    let (coarse, fine) = rules();
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let apply = |rule: &Rule| -> f64 {
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    };
    let value = apply(fine);
    let error = (value - apply(coarse)).abs();
    Panel {
        lo,
        hi,
        value,
        error,
    }
}

/// Integrate `f` over the finite pieces delimited by `points` (sorted,
/// at least two). Interior points are places where `f` has a kink or jump.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, points: &[f64], abs_tol: f64) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("quadrature needs at least two break points"));
    }
    if !(abs_tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {abs_tol}")));
    }
    if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("break points must be finite and ascending"));
    }

    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(panel(&f, w[0], w[1]));
        }
    }
    loop {
        let total_error: f64 = heap.iter().map(|p| p.error).sum();
        if total_error <= abs_tol || heap.is_empty() {
            break;
        }
        if heap.len() >= MAX_PANELS {
            return Err(Error::NonConvergence {
                routine: "integrate",
                detail: format!(
                    "error estimate {total_error:.3e} above tolerance {abs_tol:.1e} after {MAX_PANELS} panels"
                ),
            });
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(worst.lo < mid && mid < worst.hi) {
            // Panel at floating-point resolution; accept it as is.
            heap.push(Panel { error: 0.0, ..worst });
            continue;
        }
        heap.push(panel(&f, worst.lo, mid));
        heap.push(panel(&f, mid, worst.hi));
    }

    let mut panels = heap.into_vec();
    panels.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    Ok(super::neumaier_sum(panels.iter().map(|p| p.value)))
}

/// Integrate `f` over `domain` to absolute accuracy `abs_tol`.
///
/// Infinite endpoints are mapped to a finite range with `x = t / (1 - t^2)`
/// (both ends infinite) or `x = a ± t / (1 - t)` (one end infinite).
pub fn integrate<F: Fn(f64) -> f64>(f: F, domain: Interval, abs_tol: f64) -> Result<f64> {
    let (lo, hi) = (domain.lo(), domain.hi());
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => integrate_pieces(f, &[lo, hi], abs_tol),
        (false, false) => integrate_pieces(
            |t: f64| {
                let s = 1.0 - t * t;
                if s <= 0.0 {
                    return 0.0;
                }
                let x = t / s;
                let jac = (1.0 + t * t) / (s * s);
                let v = f(x) * jac;
                if v.is_finite() { v } else { 0.0 }
            },
            &[-1.0, 0.0, 1.0],
            abs_tol,
        ),
        (true, false) => integrate_pieces(
            |t: f64| {
                let s = 1.0 - t;
                if s <= 0.0 {
                    return 0.0;
                }
                let v = f(lo + t / s) / (s * s);
                if v.is_finite() { v } else { 0.0 }
            },
            &[0.0, 1.0],
            abs_tol,
        ),
        (false, true) => integrate_pieces(
            |t: f64| {
                let s = 1.0 - t;
                if s <= 0.0 {
                    return 0.0;
                }
                let v = f(hi - t / s) / (s * s);
                if v.is_finite() { v } else { 0.0 }
            },
            &[0.0, 1.0],
            abs_tol,
        ),
    }
}

/// `E[g(X)]` restricted to `domain`, with `X ~ N(mean, sd^2)`.
///
/// The domain is truncated to `mean ± 8.5 sd`. `breaks` lists points where
/// `g` is not smooth; those inside the window become panel boundaries.
pub fn gaussian_expectation<G: Fn(f64) -> f64>(
    g: G,
    mean: f64,
    sd: f64,
    domain: Interval,
    breaks: &[f64],
    abs_tol: f64,
) -> Result<f64> {
    if !(sd > 0.0) || !sd.is_finite() || !mean.is_finite() {
        return Err(Error::invalid(format!(
            "gaussian weight needs finite mean and positive sd, got ({mean}, {sd})"
        )));
    }
    let window = Interval::finite(
        mean - GAUSSIAN_TRUNCATION * sd,
        mean + GAUSSIAN_TRUNCATION * sd,
    )?;
    let Some(range) = domain.intersect(&window) else {
        return Ok(0.0);
    };
    let mut points = vec![range.lo()];
    let mut inner: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|b| range.contains(*b))
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    points.extend(inner);
    points.push(range.hi());

    // Work in standard units so the tolerance is independent of `sd`.
    let z_points: Vec<f64> = points.iter().map(|x| (x - mean) / sd).collect();
    integrate_pieces(|z| g(mean + sd * z) * norm_pdf(z), &z_points, abs_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statmath::normal::{norm_cdf, norm_sf, normal_density};

    #[test]
    fn legendre_rules_integrate_polynomials_exactly() {
        let (g10, g21) = rules();
        let w10: f64 = g10.weights.iter().sum();
        let w21: f64 = g21.weights.iter().sum();
        assert!((w10 - 2.0).abs() < 1e-14);
        assert!((w21 - 2.0).abs() < 1e-14);
        // x^18 on [-1, 1] is 2/19; exact for the 10-point rule.
        let i: f64 = g10
            .nodes
            .iter()
            .zip(&g10.weights)
            .map(|(x, w)| w * x.powi(18))
            .sum();
        assert!((i - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn standard_normal_density_over_real_line() {
        let v = integrate(
            |x| normal_density(x, 0.0, 1.0),
            Interval::real_line(),
            1e-10,
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn half_line() {
        let v = integrate(
            |x| normal_density(x, 0.0, 1.0),
            Interval::upper(0.0).unwrap(),
            1e-10,
        )
        .unwrap();
        assert!((v - 0.5).abs() < 1e-10, "{v}");
        let lower = Interval::new(f64::NEG_INFINITY, 0.0).unwrap();
        let v = integrate(|x| normal_density(x, 0.0, 1.0), lower, 1e-10).unwrap();
        assert!((v - 0.5).abs() < 1e-10, "{v}");
    }

    #[test]
    fn indicator_jump_without_break_hint() {
        let cut = 1.959_964;
        let v = integrate(
            |x| if x > cut { normal_density(x, 0.0, 1.0) } else { 0.0 },
            Interval::real_line(),
            1e-10,
        )
        .unwrap();
        assert!((v - norm_sf(cut)).abs() < 1e-9, "{v}");
        assert!((v - 0.025).abs() < 1e-8);
    }

    #[test]
    fn gaussian_expectation_of_indicator_with_break() {
        let cut = 0.3;
        let v = gaussian_expectation(
            |x| if x > cut { 1.0 } else { 0.0 },
            0.1,
            0.2,
            Interval::real_line(),
            &[cut],
            1e-12,
        )
        .unwrap();
        assert!((v - norm_sf(1.0)).abs() < 1e-12);
    }

    #[test]
    fn normal_densities_normalise() {
        for &(m, s) in &[(0.0, 1.0), (3.0, 0.05), (-20.0, 7.0), (0.5, 1e-3), (1e4, 1e-6)] {
            let v = gaussian_expectation(|_| 1.0, m, s, Interval::real_line(), &[], 1e-10).unwrap();
            assert!((v - 1.0).abs() < 1e-10, "N({m},{s}^2): {v}");
        }
        // Without a declared window the substitution needs the mass near
        // unit scale.
        for &(m, s) in &[(0.0, 1.0), (2.0, 0.3), (-3.0, 4.0)] {
            let w = integrate(|x| normal_density(x, m, s), Interval::real_line(), 1e-10).unwrap();
            assert!((w - 1.0).abs() < 1e-10, "N({m},{s}^2) by substitution: {w}");
        }
    }

    proptest::proptest! {
        #[test]
        fn any_normal_density_integrates_to_one(m in -50.0f64..50.0, log_s in -6.0f64..3.0) {
            let s = 10f64.powf(log_s);
            let v = gaussian_expectation(|_| 1.0, m, s, Interval::real_line(), &[], 1e-10).unwrap();
            proptest::prop_assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn expectation_of_cdf_matches_closed_form() {
        // E[Φ(a + bX)] = Φ(a / sqrt(1 + b^2)) for X ~ N(0, 1).
        let (a, b) = (0.4_f64, 1.7_f64);
        let v = gaussian_expectation(|x| norm_cdf(a + b * x), 0.0, 1.0, Interval::real_line(), &[], 1e-12)
            .unwrap();
        assert!((v - norm_cdf(a / (1.0 + b * b).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let err = integrate_pieces(|x: f64| (1.0 / x).sin(), &[1e-12, 1.0], 1e-15).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn deterministic() {
        let f = |x: f64| (3.0 * x).sin().abs() * (-x * x).exp();
        let a = integrate(f, Interval::finite(-3.0, 4.0).unwrap(), 1e-11).unwrap();
        let b = integrate(f, Interval::finite(-3.0, 4.0).unwrap(), 1e-11).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
