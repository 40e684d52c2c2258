//! Rejection regions of the one-arm borrowing test in sample-mean space.
//!
//! For a fixed external mean the borrowing test is a deterministic function
//! of the current sample mean, so its rejection set is a union of intervals.
//! With a fixed power prior the posterior tail is monotone in the current
//! mean and the set is a single upper interval; the Empirical Bayes weight
//! makes the tail non-monotone and the set can split into two pieces.
//! Once the intervals are known every rejection probability is a sum of
//! normal cdf differences, with no quadrature or simulation error.

use serde::{Deserialize, Serialize};

use crate::borrow::{posterior, posterior_z, z_threshold, BorrowingMethod};
use crate::error::{Error, Result};
use crate::oc_onearm::ScenarioOneArm;
use crate::statmath::{find_root, norm_cdf, norm_sf, Interval, DEFAULT_ROOT_TOL};

/// Points in the first scan of the current-mean axis.
pub const SCAN_POINTS: usize = 4001;

/// Scan half-width in standard errors of the respective mean.
const SCAN_HALF_WIDTH: f64 = 10.0;

const MAX_HALVINGS: usize = 3;
const MAX_WIDENINGS: usize = 12;

/// Why a region could not be resolved from sign changes in the scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageFlag {
    /// The test never rejected anywhere in the (widened) scan range.
    NoRejection,
    /// The test rejected everywhere in the (widened) scan range.
    RejectEverywhere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRegion {
    intervals: Vec<Interval>,
    scan_bounds: Interval,
    refinement_tol: f64,
    flag: Option<CoverageFlag>,
}

impl RejectionRegion {
    /// Region from already-known intervals; they must be sorted and
    /// pairwise disjoint.
    pub fn from_intervals(intervals: Vec<Interval>, scan_bounds: Interval) -> Result<Self> {
        if intervals.windows(2).any(|w| w[0].hi() >= w[1].lo()) {
            return Err(Error::invalid("region intervals must be sorted and disjoint"));
        }
        Ok(Self {
            intervals,
            scan_bounds,
            refinement_tol: 0.0,
            flag: None,
        })
    }

    pub fn empty(scan_bounds: Interval) -> Self {
        Self {
            intervals: Vec::new(),
            scan_bounds,
            refinement_tol: 0.0,
            flag: None,
        }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn scan_bounds(&self) -> Interval {
        self.scan_bounds
    }

    pub fn refinement_tol(&self) -> f64 {
        self.refinement_tol
    }

    /// Set when the scan saw no boundary and the region is trivial.
    pub fn flag(&self) -> Option<CoverageFlag> {
        self.flag
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// True when the region is exactly one interval unbounded above.
    pub fn is_upper_tail(&self) -> bool {
        matches!(self.intervals.as_slice(), [only] if only.hi() == f64::INFINITY)
    }

    pub fn contains(&self, mean: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(mean))
    }
}

/// Number of disjoint intervals in the region.
pub fn interval_count(region: &RejectionRegion) -> usize {
    region.intervals.len()
}

/// P(current mean falls in the region) when the mean is N(theta, sigma^2/n).
pub fn rejection_prob(region: &RejectionRegion, theta: f64, n: u32, sigma: f64) -> f64 {
    let se = sigma / (n as f64).sqrt();
    let p: f64 = region
        .intervals
        .iter()
        .map(|iv| {
            let a = (iv.lo() - theta) / se;
            let b = (iv.hi() - theta) / se;
            // Difference taken on the side with the smaller tail masses.
            if a >= 0.0 {
                norm_sf(a) - norm_sf(b)
            } else {
                norm_cdf(b) - norm_cdf(a)
            }
        })
        .sum();
    p.clamp(0.0, 1.0)
}

/// Rejection region of the one-arm borrowing test for external mean
/// `external_mean` and posterior threshold `c`.
///
/// Without Empirical Bayes weighting the decision margin is affine in the
/// current mean and the single boundary is solved for directly. Otherwise
/// the current-mean axis is scanned over `theta0 ± 10 sigma/sqrt(n)`,
/// widened to include `external_mean ± 10 sigma_E/sqrt(n_E)`. Sign changes of
/// the decision are refined with Brent's method. The scan is repeated at
/// half the spacing until two successive densities agree on the number of
/// intervals. If no boundary is found the range is widened before the
/// region is declared trivial and flagged.
pub fn rejection_region(
    scen: &ScenarioOneArm,
    external_mean: f64,
    method: BorrowingMethod,
    c: f64,
) -> Result<RejectionRegion> {
    scen.validate()?;
    if !external_mean.is_finite() {
        return Err(Error::invalid(format!("external mean must be finite, got {external_mean}")));
    }
    let z_c = z_threshold(c)?;
    let external = scen.external(external_mean)?;
    let template = scen.current(scen.theta0)?;
    // Positive where the test rejects.
    let margin = |mean: f64| {
        let post = posterior(&template.with_mean(mean), &external, method);
        posterior_z(&post, scen.theta0) - z_c
    };

    let se = scen.sigma_n();
    let se_ext = scen.sigma_e / (scen.n_e as f64).sqrt();
    let mut lo = (scen.theta0 - SCAN_HALF_WIDTH * se).min(external_mean - SCAN_HALF_WIDTH * se_ext);
    let mut hi = (scen.theta0 + SCAN_HALF_WIDTH * se).max(external_mean + SCAN_HALF_WIDTH * se_ext);

    if !matches!(method, BorrowingMethod::EmpiricalBayes) {
        // The margin is affine and increasing in the current mean.
        let at0 = margin(scen.theta0);
        let slope = margin(scen.theta0 + se) - at0;
        if slope > 0.0 && slope.is_finite() {
            let boundary = scen.theta0 - at0 * se / slope;
            return Ok(RejectionRegion {
                intervals: vec![Interval::upper(boundary)?],
                scan_bounds: Interval::finite(lo, hi)?,
                refinement_tol: DEFAULT_ROOT_TOL,
                flag: None,
            });
        }
    }

    let mut widenings = 0;
    loop {
        let cells = scan_with_halving(&margin, lo, hi)?;
        let bounds = Interval::finite(lo, hi)?;
        let bottom_rejects = margin(lo) > 0.0;
        if !cells.is_empty() {
            let mut boundaries = Vec::with_capacity(cells.len());
            for (a, b) in cells {
                boundaries.push(find_root(margin, Interval::finite(a, b)?, DEFAULT_ROOT_TOL)?);
            }
            return Ok(RejectionRegion {
                intervals: assemble(bottom_rejects, &boundaries)?,
                scan_bounds: bounds,
                refinement_tol: DEFAULT_ROOT_TOL,
                flag: None,
            });
        }
        if widenings == MAX_WIDENINGS {
            let (intervals, flag) = if bottom_rejects {
                (vec![Interval::real_line()], CoverageFlag::RejectEverywhere)
            } else {
                (Vec::new(), CoverageFlag::NoRejection)
            };
            return Ok(RejectionRegion {
                intervals,
                scan_bounds: bounds,
                refinement_tol: DEFAULT_ROOT_TOL,
                flag: Some(flag),
            });
        }
        let mid = 0.5 * (lo + hi);
        let half = hi - lo;
        lo = mid - half;
        hi = mid + half;
        widenings += 1;
    }
}

/// Cells `(x_i, x_{i+1})` of the scan grid across which the sign of
/// `margin` flips.
fn scan_with_halving<F: Fn(f64) -> f64>(margin: &F, lo: f64, hi: f64) -> Result<Vec<(f64, f64)>> {
    let grid = |points: usize| {
        let step = (hi - lo) / (points - 1) as f64;
        move |i: usize| if i == points - 1 { hi } else { lo + step * i as f64 }
    };
    let mut points = SCAN_POINTS;
    let at = grid(points);
    let mut rejects: Vec<bool> = (0..points).map(|i| margin(at(i)) > 0.0).collect();
    let mut cells = sign_change_cells(&rejects, at);
    for _ in 0..MAX_HALVINGS {
        // Even points of the finer grid coincide with the current grid.
        let finer_points = 2 * points - 1;
        let at = grid(finer_points);
        let finer: Vec<bool> = (0..finer_points)
            .map(|i| if i % 2 == 0 { rejects[i / 2] } else { margin(at(i)) > 0.0 })
            .collect();
        let finer_cells = sign_change_cells(&finer, at);
        let agreed = finer_cells.len() == cells.len();
        cells = finer_cells;
        rejects = finer;
        points = finer_points;
        if agreed {
            break;
        }
    }
    Ok(cells)
}

fn sign_change_cells(rejects: &[bool], at: impl Fn(usize) -> f64) -> Vec<(f64, f64)> {
    rejects
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(i, _)| (at(i), at(i + 1)))
        .collect()
}

/// Turn sorted boundary points into intervals, given whether the region
/// starts out rejecting below the first boundary.
fn assemble(bottom_rejects: bool, boundaries: &[f64]) -> Result<Vec<Interval>> {
    let mut intervals = Vec::new();
    let mut open_at = bottom_rejects.then_some(f64::NEG_INFINITY);
    for &b in boundaries {
        match open_at.take() {
            Some(start) => intervals.push(Interval::new(start, b)?),
            None => open_at = Some(b),
        }
    }
    if let Some(start) = open_at {
        intervals.push(Interval::upper(start)?);
    }
    Ok(intervals)
}
