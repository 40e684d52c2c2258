//! Replicate studies over external data: Algorithm 1 (external data fixed
//! per replicate, one exact characteristic per draw), Algorithm 2 (external
//! data random, characteristics averaged before calibration) and the
//! deterministic grid over external means or profile offsets.
//!
//! Replicate `i` always draws from the random stream `(seed, i)` and results
//! are collected in replicate order, so reports are identical for any number
//! of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::borrow::{draw_external_mean, posterior, BorrowingMethod, ExternalDraw};
use crate::error::{Error, Result};
use crate::oc_onearm::{
    oc_fixed_external, power_calibrated, simulate_random_external, InnerEngine, OCPoint,
    ScenarioOneArm,
};
use crate::oc_twoarm::{
    null_supremum, oc_random_external_two_arm, power_calibrated_two_arm, power_profile,
    reject_prob_two_arm, ScenarioTwoArm, TWO_ARM_QUAD_TOL,
};
use crate::statmath::{neumaier_sum, norm_quantile, RngStream};

/// Default replicate counts.
pub const DEFAULT_NSIM_ALGORITHM1: usize = 100;
pub const DEFAULT_NSIM_ALGORITHM2: usize = 100_000;

/// Current-data simulations per replicate in literal Algorithm 1 runs.
pub const DEFAULT_INNER_NSIM: usize = 1000;

/// Offsets of the null search in literal two-arm runs.
const LITERAL_OFFSETS: (f64, f64, usize) = (-6.0, 6.0, 121);

/// A two-arm trial together with the control mean used as the reference
/// point for power, and the external mean used by grid runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoArmDesign {
    pub scenario: ScenarioTwoArm,
    pub theta_c: f64,
    pub external_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "kebab-case")]
pub enum Design {
    OneArm(ScenarioOneArm),
    TwoArm(TwoArmDesign),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    Algorithm1,
    Algorithm2,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub engine: InnerEngine,
    pub draw: ExternalDraw,
    /// Current-data simulations per replicate for literal Algorithm 1.
    pub inner_nsim: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            engine: InnerEngine::Exact,
            draw: ExternalDraw::Mean,
            inner_nsim: DEFAULT_INNER_NSIM,
        }
    }
}

impl RunOptions {
    /// Literal Monte Carlo for every inner step, external data drawn as
    /// individual observations.
    pub fn audit() -> Self {
        Self {
            engine: InnerEngine::Literal,
            draw: ExternalDraw::Observations,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    #[serde(rename = "dE_mean")]
    pub de_mean: f64,
    /// Profile offset, for two-arm grid runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    pub t1e_borrow: f64,
    pub power_borrow: f64,
    pub power_calibrated: f64,
    pub power_diff: f64,
}

impl ReplicateRecord {
    pub fn new(replicate: usize, de_mean: f64, point: OCPoint) -> Self {
        Self {
            replicate,
            de_mean,
            offset: None,
            t1e_borrow: point.t1e_borrow,
            power_borrow: point.power_borrow,
            power_calibrated: point.power_calibrated,
            power_diff: point.power_diff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyRecords);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[m]
        } else {
            0.5 * (sorted[m - 1] + sorted[m])
        };
        Ok(Self {
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            median,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean_t1e: f64,
    pub mean_power_borrow: f64,
    pub mean_power_diff: f64,
    pub t1e: Spread,
    pub power_diff: Spread,
}

impl Summary {
    /// Summary statistics of a record set; an empty set is an error.
    pub fn from_records(records: &[ReplicateRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyRecords);
        }
        let n = records.len() as f64;
        let t1e: Vec<f64> = records.iter().map(|r| r.t1e_borrow).collect();
        let diff: Vec<f64> = records.iter().map(|r| r.power_diff).collect();
        Ok(Self {
            mean_t1e: neumaier_sum(t1e.iter().copied()) / n,
            mean_power_borrow: neumaier_sum(records.iter().map(|r| r.power_borrow)) / n,
            mean_power_diff: neumaier_sum(diff.iter().copied()) / n,
            t1e: Spread::of(&t1e)?,
            power_diff: Spread::of(&diff)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub kind: RunKind,
    pub design: Design,
    pub method: BorrowingMethod,
    #[serde(rename = "thetaE", default, skip_serializing_if = "Option::is_none")]
    pub theta_e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub nsim: usize,
    pub options: RunOptions,
    /// Level of the calibrated test when it is shared by all records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_level: Option<f64>,
    /// Offset of the two-arm null supremum when it is shared by all records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argmax_offset: Option<f64>,
    pub summary: Summary,
    pub records: Vec<ReplicateRecord>,
}

fn check_nsim(nsim: usize) -> Result<()> {
    if nsim == 0 {
        return Err(Error::invalid("nsim must be at least 1"));
    }
    Ok(())
}

fn tag(index: usize) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        already @ Error::Replicate { .. } => already,
        other => Error::Replicate {
            index,
            source: Box::new(other),
        },
    }
}

/// Run replicate closures in parallel, in replicate order.
fn replicates<F>(nsim: usize, f: F) -> Result<Vec<ReplicateRecord>>
where
    F: Fn(usize) -> Result<ReplicateRecord> + Sync,
{
    (0..nsim).into_par_iter().map(|i| f(i).map_err(tag(i))).collect()
}

fn external_sd(design: &Design) -> (u32, f64) {
    match design {
        Design::OneArm(s) => (s.n_e, s.sigma_e),
        Design::TwoArm(d) => (d.scenario.n_e, d.scenario.sigma_e),
    }
}

/// Algorithm 1: each replicate draws an external mean from
/// N(theta_E, sigma_E^2 / n_E) and records the characteristics of the test
/// conditional on it, calibrated to that replicate's own size.
pub fn run_algorithm1(
    design: &Design,
    theta_e: f64,
    method: BorrowingMethod,
    nsim: usize,
    seed: u64,
    options: RunOptions,
) -> Result<RunReport> {
    check_nsim(nsim)?;
    let (n_e, sigma_e) = external_sd(design);
    let records = replicates(nsim, |i| {
        let mut rng = RngStream::new(seed, i as u64);
        let de = draw_external_mean(&mut rng, theta_e, n_e, sigma_e, options.draw);
        let point = match (design, options.engine) {
            (Design::OneArm(s), InnerEngine::Exact) => oc_fixed_external(s, de, method)?,
            (Design::OneArm(s), InnerEngine::Literal) => {
                literal_one_arm(s, de, method, options.inner_nsim, &mut rng)?
            }
            (Design::TwoArm(d), InnerEngine::Exact) => {
                let x = (d.theta_c - de) / d.scenario.sigma;
                let p = power_profile(&d.scenario, de, method, &[x])?;
                OCPoint::new(p.alpha_b_max, p.power_borrow[0], p.power_calibrated)
            }
            (Design::TwoArm(d), InnerEngine::Literal) => {
                literal_two_arm(d, de, method, options.inner_nsim, &mut rng)?
            }
        };
        Ok(ReplicateRecord::new(i, de, point))
    })?;
    finish(RunKind::Algorithm1, design, method, Some(theta_e), Some(seed), options, None, None, records)
}

/// Literal Algorithm 1 step for one arm: the size and power given the
/// external data are estimated from simulated current data sets.
fn literal_one_arm(
    s: &ScenarioOneArm,
    de: f64,
    method: BorrowingMethod,
    inner: usize,
    rng: &mut RngStream,
) -> Result<OCPoint> {
    check_nsim(inner)?;
    let ext = s.external(de)?;
    let mut rate = |theta: f64| -> Result<f64> {
        let mut hits = 0usize;
        for _ in 0..inner {
            let cur = s.current(rng.normal(theta, s.sigma_n()))?;
            if crate::borrow::decide_borrow(&cur, &ext, method, s.theta0, s.c) {
                hits += 1;
            }
        }
        Ok(hits as f64 / inner as f64)
    };
    let t1e = rate(s.theta0)?;
    let power = rate(s.theta1)?;
    Ok(OCPoint::new(t1e, power, power_calibrated(t1e, s)))
}

/// Literal Algorithm 1 step for two arms: rejection rates on a grid of null
/// points from common simulated standard normal pairs, maximised over the
/// grid.
fn literal_two_arm(
    d: &TwoArmDesign,
    de: f64,
    method: BorrowingMethod,
    inner: usize,
    rng: &mut RngStream,
) -> Result<OCPoint> {
    check_nsim(inner)?;
    let s = &d.scenario;
    let z_c = norm_quantile(s.c)?;
    let ext = crate::borrow::ArmSummary::new(de, s.n_e, s.sigma_e)?;
    let sd_c = s.sigma / (s.nc as f64).sqrt();
    let sd_t = s.sigma / (s.nt as f64).sqrt();
    let pairs: Vec<(f64, f64)> = (0..inner)
        .map(|_| (rng.standard_normal(), rng.standard_normal()))
        .collect();
    let rate = |theta_c: f64, theta_t: f64| -> Result<f64> {
        let mut hits = 0usize;
        for &(zc, zt) in &pairs {
            let control = crate::borrow::ArmSummary::new(theta_c + sd_c * zc, s.nc, s.sigma)?;
            let post = posterior(&control, &ext, method);
            let tau = post.mean + z_c * (sd_t * sd_t + post.sd * post.sd).sqrt();
            if theta_t + sd_t * zt > tau {
                hits += 1;
            }
        }
        Ok(hits as f64 / inner as f64)
    };
    let (lo, hi, points) = LITERAL_OFFSETS;
    let mut t1e = 0.0_f64;
    for k in 0..points {
        let theta_c = de + s.sigma * (lo + (hi - lo) * k as f64 / (points - 1) as f64);
        t1e = t1e.max(rate(theta_c, theta_c)?);
    }
    let power = rate(d.theta_c, d.theta_c + s.theta1)?;
    Ok(OCPoint::new(t1e, power, power_calibrated_two_arm(t1e, s)))
}

/// Algorithm 2: the borrowing test's size and power are averaged over
/// random external data before the no-borrowing test is calibrated to the
/// averaged size. Records hold the per-replicate contributions; all share
/// the calibrated power.
pub fn run_algorithm2(
    design: &Design,
    theta_e: f64,
    method: BorrowingMethod,
    nsim: usize,
    seed: u64,
    options: RunOptions,
) -> Result<RunReport> {
    check_nsim(nsim)?;
    let (contributions, argmax_offset) = match design {
        Design::OneArm(s) => {
            let draws =
                simulate_random_external(s, theta_e, method, nsim, seed, options.engine, options.draw)?;
            let rows = draws.iter().map(|d| (d.external_mean, d.t1e, d.power)).collect();
            (rows, None)
        }
        Design::TwoArm(d) => {
            let rows = two_arm_contributions(d, theta_e, method, nsim, seed, options)?;
            (rows.0, Some(rows.1))
        }
    };
    let mean_t1e = neumaier_sum(contributions.iter().map(|c: &(f64, f64, f64)| c.1)) / nsim as f64;
    let calibrated = match design {
        Design::OneArm(s) => power_calibrated(mean_t1e, s),
        Design::TwoArm(d) => power_calibrated_two_arm(mean_t1e, &d.scenario),
    };
    let records = contributions
        .iter()
        .enumerate()
        .map(|(i, &(de, t1e, power))| ReplicateRecord::new(i, de, OCPoint::new(t1e, power, calibrated)))
        .collect();
    finish(
        RunKind::Algorithm2,
        design,
        method,
        Some(theta_e),
        Some(seed),
        options,
        Some(mean_t1e),
        argmax_offset,
        records,
    )
}

/// Two-arm Algorithm 2 contributions. The null point is the supremum of
/// the external-data-averaged rejection curve, located by quadrature; each
/// replicate then contributes its conditional rejection probabilities
/// there and at the power reference point.
/// External mean, null and alternative rejection probabilities of one replicate.
type TwoArmRow = (f64, f64, f64);

fn two_arm_contributions(
    d: &TwoArmDesign,
    theta_e: f64,
    method: BorrowingMethod,
    nsim: usize,
    seed: u64,
    options: RunOptions,
) -> Result<(Vec<TwoArmRow>, f64)> {
    let s = &d.scenario;
    let profile = oc_random_external_two_arm(s, theta_e, method, &[], TWO_ARM_QUAD_TOL * 10.0)?;
    let x = profile.argmax_offset;
    let theta_null = theta_e + x * s.sigma;
    let rows = (0..nsim)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i as u64);
            let de = draw_external_mean(&mut rng, theta_e, s.n_e, s.sigma_e, options.draw);
            let row = match options.engine {
                InnerEngine::Exact => (
                    de,
                    reject_prob_two_arm(s, theta_null, theta_null, de, method)?,
                    reject_prob_two_arm(s, d.theta_c, d.theta_c + s.theta1, de, method)?,
                ),
                InnerEngine::Literal => {
                    let mut decide = |theta_c: f64, theta_t: f64| -> Result<f64> {
                        let control = rng.normal(theta_c, s.sigma / (s.nc as f64).sqrt());
                        let treat = rng.normal(theta_t, s.sigma / (s.nt as f64).sqrt());
                        let ext = crate::borrow::ArmSummary::new(de, s.n_e, s.sigma_e)?;
                        let post =
                            posterior(&crate::borrow::ArmSummary::new(control, s.nc, s.sigma)?, &ext, method);
                        let z = norm_quantile(s.c)?;
                        let var_t = s.sigma * s.sigma / s.nt as f64;
                        let tau = post.mean + z * (var_t + post.sd * post.sd).sqrt();
                        Ok(if treat > tau { 1.0 } else { 0.0 })
                    };
                    let t1e = decide(theta_null, theta_null)?;
                    (de, t1e, decide(d.theta_c, d.theta_c + s.theta1)?)
                }
            };
            Ok(row)
        })
        .enumerate()
        .map(|(i, r): (usize, Result<_>)| r.map_err(tag(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, x))
}

/// Deterministic grid. One-arm grids run over external means; two-arm
/// grids run over profile offsets at the design's external mean.
pub fn run_grid(design: &Design, grid: &[f64], method: BorrowingMethod) -> Result<RunReport> {
    if grid.is_empty() {
        return Err(Error::invalid("grid must contain at least one point"));
    }
    let (records, calibration, argmax) = match design {
        Design::OneArm(s) => {
            let records = replicates(grid.len(), |i| {
                Ok(ReplicateRecord::new(i, grid[i], oc_fixed_external(s, grid[i], method)?))
            })?;
            (records, None, None)
        }
        Design::TwoArm(d) => {
            let p = power_profile(&d.scenario, d.external_mean, method, grid)?;
            let records = (0..grid.len())
                .map(|i| ReplicateRecord {
                    offset: Some(grid[i]),
                    ..ReplicateRecord::new(
                        i,
                        d.external_mean,
                        OCPoint::new(p.t1e[i], p.power_borrow[i], p.power_calibrated),
                    )
                })
                .collect();
            (records, Some(p.alpha_b_max), Some(p.argmax_offset))
        }
    };
    finish(RunKind::Grid, design, method, None, None, RunOptions::default(), calibration, argmax, records)
}

/// Null supremum for the two-arm grid reports; exposed for callers that
/// need the search on its own.
pub fn two_arm_null_supremum(
    d: &TwoArmDesign,
    method: BorrowingMethod,
) -> Result<crate::oc_twoarm::NullSupremum> {
    let s = &d.scenario;
    null_supremum(|x| {
        let theta_c = d.external_mean + x * s.sigma;
        reject_prob_two_arm(s, theta_c, theta_c, d.external_mean, method)
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    kind: RunKind,
    design: &Design,
    method: BorrowingMethod,
    theta_e: Option<f64>,
    seed: Option<u64>,
    options: RunOptions,
    calibration_level: Option<f64>,
    argmax_offset: Option<f64>,
    records: Vec<ReplicateRecord>,
) -> Result<RunReport> {
    Ok(RunReport {
        kind,
        design: *design,
        method,
        theta_e,
        seed,
        nsim: records.len(),
        options,
        calibration_level,
        argmax_offset,
        summary: Summary::from_records(&records)?,
        records,
    })
}
