//! Operating characteristics of the one-sided one-arm normal test.
//!
//! For a fixed external mean the borrowing test's size, its power and the
//! power of the test calibrated to borrowing all follow exactly from the
//! rejection region. Random external data are handled either through
//! closed forms (fixed power prior) or by averaging the exact conditional
//! characteristics over simulated external means.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::borrow::{
    decide_borrow, draw_external_mean, ArmSummary, BorrowingMethod, ExternalDraw,
};
use crate::error::{Error, Result};
use crate::region::{interval_count, rejection_prob, rejection_region, RejectionRegion};
use crate::statmath::{maximize_1d, neumaier_sum, norm_sf, upper_quantile, Interval, RngStream};

/// Width, in standard errors, of the null range searched for the size of a
/// multi-interval region.
const NULL_SEARCH_WIDTH: f64 = 10.0;
const NULL_SEARCH_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOneArm {
    pub n: u32,
    pub sigma: f64,
    pub theta0: f64,
    pub alpha: f64,
    /// Posterior probability threshold of the borrowing test.
    pub c: f64,
    #[serde(rename = "nE")]
    pub n_e: u32,
    #[serde(rename = "sigmaE")]
    pub sigma_e: f64,
    /// Alternative at which power is evaluated.
    pub theta1: f64,
}

impl ScenarioOneArm {
    /// Scenario with `c = 1 - alpha` and `sigma_E = sigma`.
    pub fn new(n: u32, n_e: u32, sigma: f64, theta0: f64, theta1: f64, alpha: f64) -> Result<Self> {
        let s = Self {
            n,
            sigma,
            theta0,
            alpha,
            c: 1.0 - alpha,
            n_e,
            sigma_e: sigma,
            theta1,
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
        if self.n == 0 || self.n_e == 0 {
            return Err(Error::invalid("sample sizes n and nE must be at least 1"));
        }
        for (name, v) in [("sigma", self.sigma), ("sigmaE", self.sigma_e)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !self.theta0.is_finite() || !self.theta1.is_finite() {
            return Err(Error::invalid("theta0 and theta1 must be finite"));
        }
        if !(self.theta1 > self.theta0) {
            return Err(Error::invalid(format!(
                "theta1 ({}) must exceed theta0 ({})",
                self.theta1, self.theta0
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.c) {
            return Err(Error::invalid(format!("c must lie in [0, 1), got {}", self.c)));
        }
        Ok(())
    }

    /// Standard error of the current sample mean.
    pub fn sigma_n(&self) -> f64 {
        self.sigma / (self.n as f64).sqrt()
    }

    pub fn current(&self, mean: f64) -> Result<ArmSummary> {
        ArmSummary::new(mean, self.n, self.sigma)
    }

    pub fn external(&self, mean: f64) -> Result<ArmSummary> {
        ArmSummary::new(mean, self.n_e, self.sigma_e)
    }

    /// Same scenario with theta0 and theta1 moved by `s`.
    pub fn shifted(&self, s: f64) -> Self {
        Self {
            theta0: self.theta0 + s,
            theta1: self.theta1 + s,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OCPoint {
    pub t1e_borrow: f64,
    pub power_borrow: f64,
    pub power_calibrated: f64,
    pub power_diff: f64,
}

impl OCPoint {
    pub fn new(t1e_borrow: f64, power_borrow: f64, power_calibrated: f64) -> Self {
        Self {
            t1e_borrow,
            power_borrow,
            power_calibrated,
            power_diff: power_borrow - power_calibrated,
        }
    }
}

/// How replicate-level test decisions are evaluated in simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerEngine {
    /// Exact conditional rejection probabilities given each external draw.
    #[default]
    Exact,
    /// One simulated current data set per replicate and hypothesis.
    Literal,
}

/// Size of the borrowing test with the given region: the supremum of the
/// rejection probability over theta <= theta0.
pub fn null_supremum(region: &RejectionRegion, scen: &ScenarioOneArm) -> Result<f64> {
    let at_border = rejection_prob(region, scen.theta0, scen.n, scen.sigma);
    if interval_count(region) <= 1 && (region.is_upper_tail() || region.is_empty()) {
        return Ok(at_border);
    }
    let lo = scen.theta0 - NULL_SEARCH_WIDTH * scen.sigma_n();
    let best = maximize_1d(
        |theta| rejection_prob(region, theta, scen.n, scen.sigma),
        Interval::finite(lo, scen.theta0)?,
        NULL_SEARCH_TOL,
    )?;
    Ok(best.max.max(at_border))
}

/// Exact operating characteristics for a fixed external mean.
pub fn oc_fixed_external(
    scen: &ScenarioOneArm,
    external_mean: f64,
    method: BorrowingMethod,
) -> Result<OCPoint> {
    let region = rejection_region(scen, external_mean, method, scen.c)?;
    oc_from_region(&region, scen)
}

/// Operating characteristics of an already-computed rejection region.
pub fn oc_from_region(region: &RejectionRegion, scen: &ScenarioOneArm) -> Result<OCPoint> {
    let t1e = null_supremum(region, scen)?;
    let power = rejection_prob(region, scen.theta1, scen.n, scen.sigma);
    Ok(OCPoint::new(t1e, power, power_calibrated(t1e, scen)))
}

/// Size of the fixed power prior test for external mean `external_mean`.
pub fn t1e_closed_form_fixed_pp(scen: &ScenarioOneArm, external_mean: f64, delta: f64) -> f64 {
    let sn = scen.sigma_n();
    let ratio = ratio_current_to_prior(scen, delta);
    let z = upper_quantile(1.0 - scen.c).expect("c lies in [0, 1)");
    norm_sf(z * (1.0 + ratio).sqrt() - (external_mean - scen.theta0) / sn * ratio)
}

/// sigma_n^2 / sigma_pi^2, with sigma_pi^2 = sigma_E^2 / (delta n_E).
fn ratio_current_to_prior(scen: &ScenarioOneArm, delta: f64) -> f64 {
    let sn2 = scen.sigma * scen.sigma / scen.n as f64;
    sn2 * delta * scen.n_e as f64 / (scen.sigma_e * scen.sigma_e)
}

/// Power at theta1 of the no-borrowing z-test run at level `alpha_b`.
pub fn power_calibrated(alpha_b: f64, scen: &ScenarioOneArm) -> f64 {
    if alpha_b >= 1.0 {
        return 1.0;
    }
    if !(alpha_b > 0.0) {
        return 0.0;
    }
    let z = upper_quantile(alpha_b).expect("level lies in (0, 1)");
    norm_sf(z - (scen.theta1 - scen.theta0) / scen.sigma_n())
}

/// Closed-form characteristics of the fixed power prior test when the
/// external mean is drawn from N(theta_E, sigma_E^2 / n_E).
pub fn oc_random_external_fixed_pp(scen: &ScenarioOneArm, theta_e: f64, delta: f64) -> OCPoint {
    let sn = scen.sigma_n();
    let ratio = ratio_current_to_prior(scen, delta);
    let z = upper_quantile(1.0 - scen.c).expect("c lies in [0, 1)");
    let sd_x = (1.0 + delta * ratio).sqrt();
    let mu_x = |theta: f64| (theta - scen.theta0) / sn + (theta_e - scen.theta0) / sn * ratio;
    let crit = z * (1.0 + ratio).sqrt();
    let t1e = norm_sf((crit - mu_x(scen.theta0)) / sd_x);
    let power = norm_sf((crit - mu_x(scen.theta1)) / sd_x);
    OCPoint::new(t1e, power, power_calibrated(t1e, scen))
}

/// Monte Carlo characteristics for random external data, with standard
/// errors of the averaged quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOcPoint {
    pub point: OCPoint,
    pub t1e_se: f64,
    pub power_borrow_se: f64,
    pub nsim: usize,
}

/// Per-replicate output of a random-external simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateDraw {
    pub external_mean: f64,
    pub t1e: f64,
    pub power: f64,
}

/// Simulate `nsim` external data sets and evaluate the borrowing test on
/// each. Replicate `i` uses the random stream `(seed, i)`, so the output does
/// not depend on the number of worker threads.
pub fn simulate_random_external(
    scen: &ScenarioOneArm,
    theta_e: f64,
    method: BorrowingMethod,
    nsim: usize,
    seed: u64,
    engine: InnerEngine,
    draw: ExternalDraw,
) -> Result<Vec<ReplicateDraw>> {
    scen.validate()?;
    if nsim == 0 {
        return Err(Error::invalid("nsim must be at least 1"));
    }
    (0..nsim)
        .into_par_iter()
        .map(|i| {
            replicate(scen, theta_e, method, seed, i, engine, draw).map_err(|e| Error::Replicate {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

fn replicate(
    scen: &ScenarioOneArm,
    theta_e: f64,
    method: BorrowingMethod,
    seed: u64,
    index: usize,
    engine: InnerEngine,
    draw: ExternalDraw,
) -> Result<ReplicateDraw> {
    let mut rng = RngStream::new(seed, index as u64);
    let external_mean = draw_external_mean(&mut rng, theta_e, scen.n_e, scen.sigma_e, draw);
    let (t1e, power) = match engine {
        InnerEngine::Exact => {
            let region = rejection_region(scen, external_mean, method, scen.c)?;
            (
                null_supremum(&region, scen)?,
                rejection_prob(&region, scen.theta1, scen.n, scen.sigma),
            )
        }
        InnerEngine::Literal => {
            let ext = scen.external(external_mean)?;
            let mut decide = |theta: f64| -> Result<f64> {
                let cur = scen.current(rng.normal(theta, scen.sigma_n()))?;
                Ok(if decide_borrow(&cur, &ext, method, scen.theta0, scen.c) { 1.0 } else { 0.0 })
            };
            let t1e = decide(scen.theta0)?;
            (t1e, decide(scen.theta1)?)
        }
    };
    Ok(ReplicateDraw {
        external_mean,
        t1e,
        power,
    })
}

/// Average a simulation into calibrated characteristics.
pub fn summarize_draws(draws: &[ReplicateDraw], scen: &ScenarioOneArm) -> Result<McOcPoint> {
    if draws.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let (t1e, t1e_se) = mean_and_se(draws.iter().map(|d| d.t1e));
    let (power, power_se) = mean_and_se(draws.iter().map(|d| d.power));
    Ok(McOcPoint {
        point: OCPoint::new(t1e, power, power_calibrated(t1e, scen)),
        t1e_se,
        power_borrow_se: power_se,
        nsim: draws.len(),
    })
}

fn mean_and_se<I: Iterator<Item = f64> + Clone>(values: I) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = neumaier_sum(values.clone()) / n;
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    let ss = neumaier_sum(values.map(|v| (v - mean) * (v - mean)));
    (mean, (ss / (n - 1.0) / n).sqrt())
}

/// Random-external characteristics by simulation of the external mean and
/// exact evaluation given each draw.
pub fn oc_random_external_mc(
    scen: &ScenarioOneArm,
    theta_e: f64,
    method: BorrowingMethod,
    nsim: usize,
    seed: u64,
) -> Result<McOcPoint> {
    let draws = simulate_random_external(
        scen,
        theta_e,
        method,
        nsim,
        seed,
        InnerEngine::Exact,
        ExternalDraw::Mean,
    )?;
    summarize_draws(&draws, scen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scen(n_e: u32) -> ScenarioOneArm {
        ScenarioOneArm::new(25, n_e, 1.0, 0.0, 0.5, 0.025).unwrap()
    }

    fn fixed(delta: f64) -> BorrowingMethod {
        BorrowingMethod::fixed(delta).unwrap()
    }

    #[test]
    fn scenario_validation() {
        assert!(ScenarioOneArm::new(25, 20, 1.0, 0.0, 0.0, 0.025).is_err());
        assert!(ScenarioOneArm::new(25, 20, 1.0, 0.0, 0.5, 1.0).is_err());
        assert!(ScenarioOneArm::new(0, 20, 1.0, 0.0, 0.5, 0.025).is_err());
        assert!(scen(20).with_c(1.0).is_err());
        assert!(scen(20).with_sigma_e(-1.0).is_err());
        assert_eq!(scen(20).c, 0.975);
    }

    #[test]
    fn fixed_weight_examples() {
        let s = scen(20);
        let p = oc_fixed_external(&s, 0.0, fixed(0.5)).unwrap();
        assert!((p.t1e_borrow - 0.010_195_873_707_045_3).abs() < 1e-10);
        assert!((p.power_borrow - 0.571_792_404_843_521).abs() < 1e-10, "{}", p.power_borrow);
        assert!(p.power_diff.abs() < 1e-9);

        let p = oc_fixed_external(&s, 0.5, fixed(0.5)).unwrap();
        assert!((p.t1e_borrow - 0.093_574_416_716_594_5).abs() < 1e-10);
        assert!(p.power_diff.abs() < 1e-9);
    }

    #[test]
    fn no_borrowing_example() {
        let p = oc_fixed_external(&scen(20), 1.0, BorrowingMethod::NoBorrowing).unwrap();
        assert!((p.t1e_borrow - 0.025).abs() < 1e-10);
        assert!((p.power_borrow - 0.705_413_9).abs() < 1e-6);
        assert!(p.power_diff.abs() < 1e-10);
    }

    #[test]
    fn closed_form_limits() {
        let s = scen(20);
        assert!((t1e_closed_form_fixed_pp(&s, 0.0, 0.5) - 0.010_195_873_707_045_3).abs() < 1e-12);
        assert!(t1e_closed_form_fixed_pp(&s, 50.0, 0.5) > 1.0 - 1e-12);
        assert!((t1e_closed_form_fixed_pp(&s, 0.3, 1e-12) - 0.025).abs() < 1e-9);
    }

    #[test]
    fn calibrated_power_examples() {
        let s = scen(20);
        assert!((power_calibrated(0.025, &s) - 0.705_413_9).abs() < 1e-6);
        assert!((power_calibrated(0.0171, &s) - 0.649).abs() < 1e-3);
        assert_eq!(power_calibrated(1.0, &s), 1.0);
        assert_eq!(power_calibrated(0.0, &s), 0.0);
    }

    #[test]
    fn random_external_fixed_closed_forms() {
        let s = scen(20);
        let p = oc_random_external_fixed_pp(&s, 0.0, 0.5);
        assert!((p.t1e_borrow - 0.0171).abs() < 5e-4, "{p:?}");
        assert!((p.power_borrow - 0.5656).abs() < 5e-4, "{p:?}");
        assert!((p.power_calibrated - 0.6492).abs() < 5e-4, "{p:?}");
        let p = oc_random_external_fixed_pp(&s, 0.5, 0.5);
        assert!((p.t1e_borrow - 0.1143).abs() < 5e-4, "{p:?}");
        assert!((p.power_borrow - 0.8595).abs() < 5e-4, "{p:?}");
        assert!((p.power_calibrated - 0.9025).abs() < 5e-4, "{p:?}");
    }

    #[test]
    fn random_external_closed_form_matches_quadrature() {
        // Independent route: average the conditional closed form over the
        // external mean's distribution.
        use crate::statmath::{gaussian_expectation, DEFAULT_QUAD_TOL};
        let s = scen(20);
        let se_e = s.sigma_e / (s.n_e as f64).sqrt();
        for &(theta_e, delta) in &[(0.0, 0.5), (0.5, 0.5), (-0.3, 1.0), (1.0, 0.25)] {
            let closed = oc_random_external_fixed_pp(&s, theta_e, delta);
            let avg = gaussian_expectation(
                |de| t1e_closed_form_fixed_pp(&s, de, delta),
                theta_e,
                se_e,
                Interval::real_line(),
                &[],
                DEFAULT_QUAD_TOL * 1e-3,
            )
            .unwrap();
            assert!((closed.t1e_borrow - avg).abs() < 1e-9, "{theta_e} {delta}");
        }
    }

    #[test]
    fn mc_agrees_with_closed_form() {
        let s = scen(20);
        for &theta_e in &[0.0, 0.5] {
            let mc = oc_random_external_mc(&s, theta_e, fixed(0.5), 4000, 11).unwrap();
            let exact = oc_random_external_fixed_pp(&s, theta_e, 0.5);
            assert!((mc.point.t1e_borrow - exact.t1e_borrow).abs() < 4.0 * mc.t1e_se);
            assert!((mc.point.power_borrow - exact.power_borrow).abs() < 4.0 * mc.power_borrow_se);
        }
    }

    #[test]
    fn literal_engine_agrees_with_exact() {
        let s = scen(20);
        let exact = oc_random_external_fixed_pp(&s, 0.0, 0.5);
        let draws = simulate_random_external(
            &s,
            0.0,
            fixed(0.5),
            40_000,
            3,
            InnerEngine::Literal,
            ExternalDraw::Observations,
        )
        .unwrap();
        let mc = summarize_draws(&draws, &s).unwrap();
        assert!((mc.point.t1e_borrow - exact.t1e_borrow).abs() < 4.0 * mc.t1e_se);
        assert!((mc.point.power_borrow - exact.power_borrow).abs() < 4.0 * mc.power_borrow_se);
    }

    #[test]
    fn simulation_is_reproducible() {
        let s = scen(20);
        let a = simulate_random_external(&s, 0.2, BorrowingMethod::EmpiricalBayes, 64, 5, InnerEngine::Exact, ExternalDraw::Mean).unwrap();
        let b = simulate_random_external(&s, 0.2, BorrowingMethod::EmpiricalBayes, 64, 5, InnerEngine::Exact, ExternalDraw::Mean).unwrap();
        assert_eq!(a, b);
        assert!(summarize_draws(&[], &s).is_err());
    }

    #[test]
    fn eb_large_external_loses_power() {
        let s = scen(1000);
        for &de in &[0.08, 0.10, 0.12] {
            let p = oc_fixed_external(&s, de, BorrowingMethod::EmpiricalBayes).unwrap();
            assert!(p.power_diff < 0.0, "de={de}: {p:?}");
        }
        for &de in &[0.0, 0.3] {
            let p = oc_fixed_external(&s, de, BorrowingMethod::EmpiricalBayes).unwrap();
            assert!(p.power_diff.abs() < 1e-6, "de={de}: {p:?}");
        }
    }

    #[test]
    fn calibrated_power_dominates_on_grid() {
        for &delta in &[0.25, 0.5, 1.0] {
            for &theta_e in &[-0.5, 0.0, 0.5, 1.0] {
                for &theta1 in &[0.2, 0.5, 1.0] {
                    let s = ScenarioOneArm::new(25, 20, 1.0, 0.0, theta1, 0.025).unwrap();
                    let p = oc_random_external_fixed_pp(&s, theta_e, delta);
                    assert!(p.power_calibrated > p.power_borrow, "{delta} {theta_e} {theta1}");
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn ump_identity(de in -1.0f64..2.0, delta in 0.01f64..=1.0) {
            let p = oc_fixed_external(&scen(20), de, fixed(delta)).unwrap();
            prop_assert!(p.power_diff.abs() <= 1e-9, "{:?}", p);
        }

        #[test]
        fn closed_form_matches_region(de in -1.0f64..2.0, delta in 0.01f64..=1.0) {
            let s = scen(20);
            let p = oc_fixed_external(&s, de, fixed(delta)).unwrap();
            prop_assert!((p.t1e_borrow - t1e_closed_form_fixed_pp(&s, de, delta)).abs() <= 1e-9);
        }

        #[test]
        fn shift_invariance(de in -1.0f64..1.5, shift in -5.0f64..5.0, eb in any::<bool>()) {
            let method = if eb { BorrowingMethod::EmpiricalBayes } else { fixed(0.5) };
            let s = scen(20);
            let a = oc_fixed_external(&s, de, method).unwrap();
            let b = oc_fixed_external(&s.shifted(shift), de + shift, method).unwrap();
            prop_assert!((a.t1e_borrow - b.t1e_borrow).abs() < 1e-8);
            prop_assert!((a.power_borrow - b.power_borrow).abs() < 1e-8);
            prop_assert!((a.power_calibrated - b.power_calibrated).abs() < 1e-8);
        }

        #[test]
        fn calibrated_power_dominates(theta_e in -1.0f64..1.5, delta in 0.05f64..=1.0, theta1 in 0.05f64..1.5) {
            let s = ScenarioOneArm::new(25, 20, 1.0, 0.0, theta1, 0.025).unwrap();
            let p = oc_random_external_fixed_pp(&s, theta_e, delta);
            prop_assert!(p.power_calibrated > p.power_borrow);
        }

        #[test]
        fn probabilities_in_range(de in -3.0f64..3.0, n_e in 1u32..2000) {
            let p = oc_fixed_external(&scen(n_e), de, BorrowingMethod::EmpiricalBayes).unwrap();
            for v in [p.t1e_borrow, p.power_borrow, p.power_calibrated] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert_eq!(p.power_diff, p.power_borrow - p.power_calibrated);
        }
    }
}
