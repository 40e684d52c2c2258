//! Operating characteristics of the one-sided two-arm hybrid-control trial.
//!
//! External data enter the prior of the control arm only; the treatment arm
//! has a flat prior. Conditional on the control mean the test is an upper
//! threshold on the treatment mean, so rejection probabilities are one
//! integral over the control mean, and a single normal tail when the
//! power-prior weight is fixed.
//!
//! Profiles are indexed by the standardised offset `x = (theta_c - d_E) / sigma`
//! of the control mean from the external mean (or from `theta_E` when the
//! external data are random).

use std::cell::RefCell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::borrow::{draw_external_mean, posterior, ArmSummary, BorrowingMethod, ExternalDraw};
use crate::error::{Error, Result};
use crate::statmath::{
    gaussian_expectation, maximize_on_grid, neumaier_sum, norm_quantile, norm_sf, upper_quantile,
    Interval, RngStream,
};

/// Offsets first searched for the supremum over the null boundary.
pub const NULL_SEARCH_RANGE: (f64, f64) = (-6.0, 6.0);
/// A null rejection probability above `1 - SATURATION_TOL` is treated as
/// having reached its supremum of 1.
pub const SATURATION_TOL: f64 = 1e-9;
/// Inner quadrature tolerance.
pub const TWO_ARM_QUAD_TOL: f64 = 1e-10;

const MAX_EXTENT: f64 = 96.0;
const SLOPE_STEP: f64 = 0.05;
const SLOPE_TOL: f64 = 1e-9;
const SEARCH_SPACING: f64 = 0.03;
const ARGMAX_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTwoArm {
    pub nc: u32,
    pub nt: u32,
    #[serde(rename = "nE")]
    pub n_e: u32,
    pub sigma: f64,
    #[serde(rename = "sigmaE")]
    pub sigma_e: f64,
    /// Treatment effect theta_t - theta_c at which power is evaluated.
    pub theta1: f64,
    pub alpha: f64,
    pub c: f64,
}

impl ScenarioTwoArm {
    /// Scenario with `c = 1 - alpha` and `sigma_E = sigma`.
    pub fn new(nc: u32, nt: u32, n_e: u32, sigma: f64, theta1: f64, alpha: f64) -> Result<Self> {
        let s = Self {
            nc,
            nt,
            n_e,
            sigma,
            sigma_e: sigma,
            theta1,
            alpha,
            c: 1.0 - alpha,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_c(self, c: f64) -> Result<Self> {
        let s = Self { c, ..self };
        s.validate()?;
        Ok(s)
    }

    pub fn with_sigma_e(self, sigma_e: f64) -> Result<Self> {
        let s = Self { sigma_e, ..self };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nc == 0 || self.nt == 0 || self.n_e == 0 {
            return Err(Error::invalid("sample sizes nc, nt and nE must be at least 1"));
        }
        for (name, v) in [("sigma", self.sigma), ("sigmaE", self.sigma_e)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.theta1 > 0.0) || !self.theta1.is_finite() {
            return Err(Error::invalid(format!("theta1 must be positive, got {}", self.theta1)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.c) {
            return Err(Error::invalid(format!("c must lie in [0, 1), got {}", self.c)));
        }
        Ok(())
    }

    fn control(&self, mean: f64) -> ArmSummary {
        ArmSummary {
            mean,
            n: self.nc,
            sigma: self.sigma,
        }
    }

    fn external(&self, mean: f64) -> ArmSummary {
        ArmSummary {
            mean,
            n: self.n_e,
            sigma: self.sigma_e,
        }
    }

    fn var_t(&self) -> f64 {
        self.sigma * self.sigma / self.nt as f64
    }

    fn var_c(&self) -> f64 {
        self.sigma * self.sigma / self.nc as f64
    }

    fn var_e(&self) -> f64 {
        self.sigma_e * self.sigma_e / self.n_e as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OCProfile {
    pub grid: Vec<f64>,
    pub t1e: Vec<f64>,
    pub power_borrow: Vec<f64>,
    pub alpha_b_max: f64,
    pub argmax_offset: f64,
    /// The supremum is approached only in the limit of large offsets.
    pub saturated: bool,
    pub power_calibrated: f64,
    pub power_diff: Vec<f64>,
}

/// Linear decomposition of the fixed-weight test: reject iff
/// `d_t - w d_c > (1 - w) d_E + crit`.
struct FixedRule {
    w: f64,
    crit: f64,
}

fn fixed_rule(scen: &ScenarioTwoArm, delta: f64) -> Result<FixedRule> {
    let prec_c = 1.0 / scen.var_c();
    let prec = prec_c + delta / scen.var_e();
    let z = norm_quantile(scen.c)?;
    Ok(FixedRule {
        w: prec_c / prec,
        crit: z * (scen.var_t() + 1.0 / prec).sqrt(),
    })
}

/// P(reject) for control and treatment means `theta_c`, `theta_t` and
/// external mean `external_mean`.
pub fn reject_prob_two_arm(
    scen: &ScenarioTwoArm,
    theta_c: f64,
    theta_t: f64,
    external_mean: f64,
    method: BorrowingMethod,
) -> Result<f64> {
    match method {
        BorrowingMethod::NoBorrowing => reject_prob_fixed(scen, theta_c, theta_t, external_mean, 0.0),
        BorrowingMethod::FixedPowerPrior { delta } => {
            reject_prob_fixed(scen, theta_c, theta_t, external_mean, delta)
        }
        BorrowingMethod::EmpiricalBayes => reject_prob_two_arm_quadrature(
            scen,
            theta_c,
            theta_t,
            external_mean,
            method,
            TWO_ARM_QUAD_TOL,
        ),
    }
}

fn reject_prob_fixed(
    scen: &ScenarioTwoArm,
    theta_c: f64,
    theta_t: f64,
    external_mean: f64,
    delta: f64,
) -> Result<f64> {
    scen.validate()?;
    let rule = fixed_rule(scen, delta)?;
    let sd = (scen.var_t() + rule.w * rule.w * scen.var_c()).sqrt();
    let shift = (1.0 - rule.w) * external_mean + rule.crit;
    Ok(norm_sf((shift - theta_t + rule.w * theta_c) / sd))
}

/// Rejection threshold on the treatment mean given the control mean.
fn treatment_threshold(
    scen: &ScenarioTwoArm,
    control_mean: f64,
    external: &ArmSummary,
    method: BorrowingMethod,
    z_c: f64,
) -> f64 {
    let post = posterior(&scen.control(control_mean), external, method);
    post.mean + z_c * (scen.var_t() + post.sd * post.sd).sqrt()
}

/// [`reject_prob_two_arm`] by adaptive quadrature over the control mean,
/// for any borrowing method.
pub fn reject_prob_two_arm_quadrature(
    scen: &ScenarioTwoArm,
    theta_c: f64,
    theta_t: f64,
    external_mean: f64,
    method: BorrowingMethod,
    tol: f64,
) -> Result<f64> {
    scen.validate()?;
    let z_c = norm_quantile(scen.c)?;
    let external = scen.external(external_mean);
    let sd_t = scen.var_t().sqrt();
    // The Empirical Bayes weight has kinks where it reaches 1.
    let reach = (scen.var_c() + scen.var_e()).sqrt();
    let breaks = [external_mean - reach, external_mean + reach];
    let p = gaussian_expectation(
        |x| norm_sf((treatment_threshold(scen, x, &external, method, z_c) - theta_t) / sd_t),
        theta_c,
        scen.var_c().sqrt(),
        Interval::real_line(),
        &breaks,
        tol,
    )?;
    Ok(p.clamp(0.0, 1.0))
}

/// Power of the two-sample z-test without borrowing at level `alpha_b`.
pub fn power_calibrated_two_arm(alpha_b: f64, scen: &ScenarioTwoArm) -> f64 {
    if alpha_b >= 1.0 {
        return 1.0;
    }
    if !(alpha_b > 0.0) {
        return 0.0;
    }
    let z = upper_quantile(alpha_b).expect("level lies in (0, 1)");
    norm_sf(z - scen.theta1 / (scen.var_t() + scen.var_c()).sqrt())
}

/// Supremum of a null-boundary rejection curve over all offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullSupremum {
    pub value: f64,
    pub argmax_offset: f64,
    pub saturated: bool,
}

/// Maximise `f` over offsets. The search starts on [-6, 6] and each end is
/// pushed outwards by doubling while `f` still increases towards it. A value
/// above `1 - 1e-9` counts as saturation at 1.
pub fn null_supremum<F: Fn(f64) -> Result<f64>>(f: F) -> Result<NullSupremum> {
    let failure = RefCell::new(None);
    let g = |x: f64| match f(x) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let check = |v: f64| match failure.borrow_mut().take() {
        Some(e) => Err(e),
        None => Ok(v),
    };

    let (mut lo, mut hi) = NULL_SEARCH_RANGE;
    let mut saturated_at = None;
    loop {
        let end = check(g(hi))?;
        if end > 1.0 - SATURATION_TOL {
            saturated_at = Some(hi);
            break;
        }
        if hi >= MAX_EXTENT || end - check(g(hi - SLOPE_STEP))? <= SLOPE_TOL {
            break;
        }
        hi *= 2.0;
    }
    while lo > -MAX_EXTENT {
        let end = check(g(lo))?;
        if end > 1.0 - SATURATION_TOL {
            saturated_at.get_or_insert(lo);
            break;
        }
        if end - check(g(lo + SLOPE_STEP))? <= SLOPE_TOL {
            break;
        }
        lo *= 2.0;
    }
    if let Some(x) = saturated_at {
        return Ok(NullSupremum {
            value: 1.0,
            argmax_offset: x,
            saturated: true,
        });
    }
    let points = ((hi - lo) / SEARCH_SPACING).ceil() as usize + 1;
    let best = maximize_on_grid(g, Interval::finite(lo, hi)?, ARGMAX_TOL, points);
    check(0.0)?;
    let best = best?;
    Ok(NullSupremum {
        value: best.max,
        argmax_offset: best.argmax,
        saturated: false,
    })
}

fn evaluate_grid<F: Fn(f64) -> Result<f64> + Sync>(offsets: &[f64], f: &F) -> Result<Vec<f64>> {
    if let Some(bad) = offsets.iter().find(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("profile offsets must be finite, got {bad}")));
    }
    offsets.par_iter().map(|&x| f(x)).collect()
}

/// Assemble a profile from a null curve and (optionally) a power curve.
fn build_profile<N, P>(
    scen: &ScenarioTwoArm,
    offsets: &[f64],
    null_curve: N,
    power_curve: Option<P>,
) -> Result<OCProfile>
where
    N: Fn(f64) -> Result<f64> + Sync,
    P: Fn(f64) -> Result<f64> + Sync,
{
    scen.validate()?;
    let t1e = evaluate_grid(offsets, &null_curve)?;
    let mut sup = null_supremum(&null_curve)?;
    // The refined supremum must dominate every reported grid value.
    for (&x, &v) in offsets.iter().zip(&t1e) {
        if v > sup.value {
            sup = NullSupremum {
                value: v,
                argmax_offset: x,
                saturated: false,
            };
        }
    }
    let power_calibrated = power_calibrated_two_arm(sup.value, scen);
    let power_borrow = match power_curve {
        Some(p) => evaluate_grid(offsets, &p)?,
        None => Vec::new(),
    };
    let power_diff = power_borrow.iter().map(|p| p - power_calibrated).collect();
    Ok(OCProfile {
        grid: offsets.to_vec(),
        t1e,
        power_borrow,
        alpha_b_max: sup.value,
        argmax_offset: sup.argmax_offset,
        saturated: sup.saturated,
        power_calibrated,
        power_diff,
    })
}

/// Null-boundary rejection probabilities `theta_t = theta_c` over offsets
/// and their supremum. Power fields are left empty.
pub fn t1e_profile(
    scen: &ScenarioTwoArm,
    external_mean: f64,
    method: BorrowingMethod,
    offsets: &[f64],
) -> Result<OCProfile> {
    let null = |x: f64| {
        let theta_c = external_mean + x * scen.sigma;
        reject_prob_two_arm(scen, theta_c, theta_c, external_mean, method)
    };
    build_profile(scen, offsets, null, None::<fn(f64) -> Result<f64>>)
}

/// [`t1e_profile`] plus power on the line `theta_t - theta_c = theta1` and
/// the power difference to the test calibrated to the supremum.
pub fn power_profile(
    scen: &ScenarioTwoArm,
    external_mean: f64,
    method: BorrowingMethod,
    offsets: &[f64],
) -> Result<OCProfile> {
    let at = |x: f64, effect: f64| {
        let theta_c = external_mean + x * scen.sigma;
        reject_prob_two_arm(scen, theta_c, theta_c + effect, external_mean, method)
    };
    build_profile(scen, offsets, |x| at(x, 0.0), Some(|x| at(x, scen.theta1)))
}

/// Profile when the external mean is random, N(theta_E, sigma_E^2 / n_E).
/// Offsets are `(theta_c - theta_E) / sigma`; each conditional probability
/// is averaged over the external mean by quadrature with tolerance `tol`.
pub fn oc_random_external_two_arm(
    scen: &ScenarioTwoArm,
    theta_e: f64,
    method: BorrowingMethod,
    offsets: &[f64],
    tol: f64,
) -> Result<OCProfile> {
    scen.validate()?;
    let at = |x: f64, effect: f64| {
        let theta_c = theta_e + x * scen.sigma;
        reject_prob_two_arm_random(scen, theta_e, theta_c, theta_c + effect, method, tol)
    };
    build_profile(scen, offsets, |x| at(x, 0.0), Some(|x| at(x, scen.theta1)))
}

/// Rejection probability averaged over a random external mean
/// `d_E ~ N(theta_e, sigma_E^2 / n_E)`, by adaptive quadrature to `tol`.
pub fn reject_prob_two_arm_random(
    scen: &ScenarioTwoArm,
    theta_e: f64,
    theta_c: f64,
    theta_t: f64,
    method: BorrowingMethod,
    tol: f64,
) -> Result<f64> {
    scen.validate()?;
    let inner_tol = (tol * 0.1).min(TWO_ARM_QUAD_TOL);
    let failure = RefCell::new(None);
    let v = gaussian_expectation(
        |de| {
            let r = match method {
                BorrowingMethod::EmpiricalBayes => {
                    reject_prob_two_arm_quadrature(scen, theta_c, theta_t, de, method, inner_tol)
                }
                _ => reject_prob_two_arm(scen, theta_c, theta_t, de, method),
            };
            r.unwrap_or_else(|e| {
                failure.borrow_mut().get_or_insert(e);
                0.0
            })
        },
        theta_e,
        scen.var_e().sqrt(),
        Interval::real_line(),
        &[],
        tol,
    )?;
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(v.clamp(0.0, 1.0)),
    }
}

/// Monte Carlo variant of [`oc_random_external_two_arm`]: the outer
/// expectation is an average over `nsim` simulated external means, drawn
/// from the streams `(seed, i)`. The same draws are used at every offset.
pub fn oc_random_external_two_arm_mc(
    scen: &ScenarioTwoArm,
    theta_e: f64,
    method: BorrowingMethod,
    offsets: &[f64],
    nsim: usize,
    seed: u64,
) -> Result<OCProfile> {
    let draws = external_draws(scen, theta_e, nsim, seed, ExternalDraw::Mean)?;
    let at = |x: f64, effect: f64| -> Result<f64> {
        let theta_c = theta_e + x * scen.sigma;
        let values = draws
            .iter()
            .map(|&de| reject_prob_two_arm(scen, theta_c, theta_c + effect, de, method))
            .collect::<Result<Vec<f64>>>()?;
        Ok(neumaier_sum(values) / nsim as f64)
    };
    build_profile(scen, offsets, |x| at(x, 0.0), Some(|x| at(x, scen.theta1)))
}

/// External means for `nsim` replicates; replicate `i` uses stream `(seed, i)`.
pub fn external_draws(
    scen: &ScenarioTwoArm,
    theta_e: f64,
    nsim: usize,
    seed: u64,
    draw: ExternalDraw,
) -> Result<Vec<f64>> {
    scen.validate()?;
    if nsim == 0 {
        return Err(Error::invalid("nsim must be at least 1"));
    }
    Ok((0..nsim)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i as u64);
            draw_external_mean(&mut rng, theta_e, scen.n_e, scen.sigma_e, draw)
        })
        .collect())
}
