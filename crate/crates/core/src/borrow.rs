//! Power-prior posteriors and the Bayesian test decisions built on them.
//!
//! Everything operates on sufficient statistics: a current or external arm
//! enters only through its sample mean, size and known per-observation sd.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statmath::{
    maximize_on_grid, norm_quantile, norm_sf, upper_quantile, Interval, RngStream, DEFAULT_ROOT_TOL,
};

/// Sample mean, size and known observation sd of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub mean: f64,
    pub n: u32,
    pub sigma: f64,
}

impl ArmSummary {
    pub fn new(mean: f64, n: u32, sigma: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("arm sample size must be at least 1"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("arm sd must be positive and finite, got {sigma}")));
        }
        if !mean.is_finite() {
            return Err(Error::invalid(format!("arm mean must be finite, got {mean}")));
        }
        Ok(Self { mean, n, sigma })
    }

    /// Reduce raw observations to their mean.
    pub fn from_observations(obs: &[f64], sigma: f64) -> Result<Self> {
        let n = u32::try_from(obs.len())
            .map_err(|_| Error::invalid("too many observations"))?;
        if n == 0 {
            return Err(Error::invalid("no observations"));
        }
        let mean = crate::statmath::neumaier_sum(obs.iter().copied()) / n as f64;
        Self::new(mean, n, sigma)
    }

    /// Variance of the sample mean, sigma^2 / n.
    pub fn mean_variance(&self) -> f64 {
        self.sigma * self.sigma / self.n as f64
    }

    pub fn with_mean(self, mean: f64) -> Self {
        Self { mean, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BorrowingMethod {
    NoBorrowing,
    FixedPowerPrior { delta: f64 },
    EmpiricalBayes,
}

impl BorrowingMethod {
    pub fn fixed(delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::invalid(format!(
                "power prior weight delta must lie in [0, 1], got {delta}"
            )));
        }
        Ok(BorrowingMethod::FixedPowerPrior { delta })
    }

    pub fn label(&self) -> String {
        match self {
            BorrowingMethod::NoBorrowing => "none".to_string(),
            BorrowingMethod::FixedPowerPrior { delta } => format!("fixed-pp(delta={delta})"),
            BorrowingMethod::EmpiricalBayes => "eb-pp".to_string(),
        }
    }

    /// Weight given to the external data for this pair of summaries.
    pub fn weight(&self, current: &ArmSummary, external: &ArmSummary) -> f64 {
        match *self {
            BorrowingMethod::NoBorrowing => 0.0,
            BorrowingMethod::FixedPowerPrior { delta } => delta,
            BorrowingMethod::EmpiricalBayes => eb_delta(current, external),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPosterior {
    pub mean: f64,
    pub sd: f64,
}

/// Posterior of the current mean under a flat initial prior and the power
/// prior built from `external` with weight `delta`.
///
/// The prior has mean `external.mean` and variance `sigma_E^2 / (delta n_E)`;
/// `delta = 0` leaves the flat-prior posterior N(mean, sigma^2 / n).
pub fn fixed_pp_posterior(current: &ArmSummary, external: &ArmSummary, delta: f64) -> NormalPosterior {
    let current_prec = 1.0 / current.mean_variance();
    let prior_prec = delta / external.mean_variance();
    let prec = current_prec + prior_prec;
    let mean = if prior_prec == 0.0 {
        current.mean
    } else {
        (current_prec * current.mean + prior_prec * external.mean) / prec
    };
    NormalPosterior {
        mean,
        sd: prec.sqrt().recip(),
    }
}

/// Empirical Bayes power-prior weight: the maximiser over (0, 1] of the
/// marginal likelihood of the current mean,
/// `N(mean; external.mean, sigma^2/n + sigma_E^2/(delta n_E))`.
pub fn eb_delta(current: &ArmSummary, external: &ArmSummary) -> f64 {
    let v_cur = current.mean_variance();
    let v_ext = external.mean_variance();
    let diff = current.mean - external.mean;
    let conflict = (diff * diff).max(v_cur + v_ext);
    (v_ext / (conflict - v_cur)).min(1.0)
}

/// Log marginal likelihood of `delta`, up to an additive constant.
pub fn eb_log_marginal(current: &ArmSummary, external: &ArmSummary, delta: f64) -> f64 {
    let v = current.mean_variance() + external.mean_variance() / delta;
    let diff = current.mean - external.mean;
    -0.5 * v.ln() - 0.5 * diff * diff / v
}

/// Numerical maximisation of [`eb_log_marginal`] over `[1e-12, 1]`.
///
/// The search runs on `ln(delta)` so that weights of order 1e-4 are
/// resolved as well as weights near 1.
pub fn eb_delta_numeric(current: &ArmSummary, external: &ArmSummary, tol: f64) -> Result<f64> {
    const FLOOR: f64 = 1e-12;
    let domain = Interval::finite(FLOOR.ln(), 0.0)?;
    let best = maximize_on_grid(
        |log_delta| eb_log_marginal(current, external, log_delta.exp()),
        domain,
        tol,
        2001,
    )?;
    Ok(best.argmax.exp())
}

/// P(theta > theta0 | data).
pub fn posterior_tail(post: &NormalPosterior, theta0: f64) -> f64 {
    norm_sf((theta0 - post.mean) / post.sd)
}

/// Standardised posterior location `(mean - theta0) / sd`; the tail
/// probability is Φ of this value.
pub fn posterior_z(post: &NormalPosterior, theta0: f64) -> f64 {
    (post.mean - theta0) / post.sd
}

pub fn posterior(current: &ArmSummary, external: &ArmSummary, method: BorrowingMethod) -> NormalPosterior {
    fixed_pp_posterior(current, external, method.weight(current, external))
}

/// Borrowing test: reject iff P(theta > theta0 | data; external) > c.
pub fn decide_borrow(
    current: &ArmSummary,
    external: &ArmSummary,
    method: BorrowingMethod,
    theta0: f64,
    c: f64,
) -> bool {
    posterior_tail(&posterior(current, external, method), theta0) > c
}

/// Critical value on the standardised posterior scale matching threshold
/// `c` on the probability scale.
pub fn z_threshold(c: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::domain(format!("posterior threshold c must lie in [0, 1), got {c}")));
    }
    norm_quantile(c)
}

/// One-sided z-test of H0: theta <= theta0 at level `alpha`; the test
/// calibrated to borrowing when `alpha` is the borrowing test's size.
///
/// `alpha >= 1` always rejects and `alpha <= 0` never does.
pub fn decide_no_borrow(current: &ArmSummary, theta0: f64, alpha: f64) -> bool {
    if alpha >= 1.0 {
        return true;
    }
    if !(alpha > 0.0) {
        return false;
    }
    let z = (current.mean - theta0) / current.mean_variance().sqrt();
    z > upper_quantile(alpha).expect("alpha lies in (0, 1)")
}

/// Default tolerance for [`eb_delta_numeric`].
pub const EB_NUMERIC_TOL: f64 = DEFAULT_ROOT_TOL;

/// How an external data set is generated from its true mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExternalDraw {
    /// Draw the sufficient mean directly from N(theta_E, sigma_E^2 / n_E).
    #[default]
    Mean,
    /// Draw n_E observations and average them.
    Observations,
}

/// Sample mean of an external data set with true mean `theta_e`.
pub fn draw_external_mean(
    rng: &mut RngStream,
    theta_e: f64,
    n_e: u32,
    sigma_e: f64,
    draw: ExternalDraw,
) -> f64 {
    match draw {
        ExternalDraw::Mean => rng.normal(theta_e, sigma_e / (n_e as f64).sqrt()),
        ExternalDraw::Observations => {
            let obs = (0..n_e).map(|_| rng.normal(theta_e, sigma_e));
            crate::statmath::neumaier_sum(obs) / n_e as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arm(mean: f64, n: u32) -> ArmSummary {
        ArmSummary::new(mean, n, 1.0).unwrap()
    }

    #[test]
    fn summary_validation() {
        assert!(ArmSummary::new(0.0, 0, 1.0).is_err());
        assert!(ArmSummary::new(0.0, 5, 0.0).is_err());
        assert!(ArmSummary::new(f64::NAN, 5, 1.0).is_err());
        let s = ArmSummary::from_observations(&[1.0, 2.0, 3.0, 6.0], 1.0).unwrap();
        assert_eq!(s.n, 4);
        assert_eq!(s.mean, 3.0);
    }

    #[test]
    fn fixed_weight_range() {
        assert!(BorrowingMethod::fixed(1.5).is_err());
        assert!(BorrowingMethod::fixed(-0.1).is_err());
        assert!(BorrowingMethod::fixed(0.0).is_ok());
        assert!(BorrowingMethod::fixed(1.0).is_ok());
    }

    #[test]
    fn fixed_pp_half_weight() {
        let p = fixed_pp_posterior(&arm(0.0, 25), &arm(0.0, 20), 0.5);
        assert_eq!(p.mean, 0.0);
        assert!((p.sd - (1.0_f64 / 35.0).sqrt()).abs() < 1e-15);
        assert!((p.sd - 0.169_030_9).abs() < 1e-7);
    }

    #[test]
    fn fixed_pp_full_weight_pools() {
        let p = fixed_pp_posterior(&arm(0.4, 25), &arm(0.1, 20), 1.0);
        assert!((p.mean - 12.0 / 45.0).abs() < 1e-15);
        assert!((p.mean - 0.266_666_7).abs() < 1e-7);
        assert!((p.sd - 0.149_071_2).abs() < 1e-7);
    }

    #[test]
    fn zero_weight_is_flat_prior() {
        let cur = ArmSummary::new(0.37, 25, 1.3).unwrap();
        let p = fixed_pp_posterior(&cur, &arm(5.0, 20), 0.0);
        assert_eq!(p.mean, 0.37);
        assert_eq!(p.sd, 1.3 / 5.0);
    }

    #[test]
    fn unequal_external_sd_uses_external_variance() {
        let cur = arm(0.0, 25);
        let ext = ArmSummary::new(1.0, 20, 2.0).unwrap();
        let p = fixed_pp_posterior(&cur, &ext, 0.5);
        // prior variance 4 / 10 = 0.4, data variance 0.04
        let prec: f64 = 25.0 + 2.5;
        assert!((p.sd - prec.sqrt().recip()).abs() < 1e-15);
        assert!((p.mean - 2.5 / prec).abs() < 1e-15);
    }

    #[test]
    fn eb_examples() {
        assert_eq!(eb_delta(&arm(0.3, 25), &arm(0.3, 20)), 1.0);
        let d = eb_delta(&arm(0.5, 25), &arm(0.0, 20));
        assert!((d - 0.05 / 0.21).abs() < 1e-15);
        assert!((d - 0.238_095_2).abs() < 1e-7);
        assert_eq!(eb_delta(&arm(0.3, 25), &arm(0.0, 20)), 1.0);
        let far = eb_delta(&arm(10.0, 25), &arm(0.0, 20));
        assert!((far - 0.05 / 99.96).abs() < 1e-15);
    }

    #[test]
    fn eb_numeric_examples() {
        let d = eb_delta_numeric(&arm(0.2, 25), &arm(0.2, 20), 1e-12).unwrap();
        assert!((d - 1.0).abs() < 1e-9);
        let d = eb_delta_numeric(&arm(10.0, 25), &arm(0.0, 20), 1e-12).unwrap();
        assert!((d - 0.000_500_2).abs() < 1e-7, "{d}");
        let d = eb_delta_numeric(&arm(0.5, 25), &arm(0.0, 20), 1e-12).unwrap();
        assert!((d - 0.238_095_238).abs() < 1e-6, "{d}");
    }

    #[test]
    fn posterior_tail_examples() {
        let p = NormalPosterior { mean: 0.2, sd: 0.3 };
        assert_eq!(posterior_tail(&p, 0.2), 0.5);
        let p = NormalPosterior { mean: 0.463_810, sd: 0.2 };
        assert!((posterior_tail(&p, 0.0) - 0.9898).abs() < 5e-5);
        let p = NormalPosterior { mean: 1e6, sd: 0.2 };
        assert_eq!(posterior_tail(&p, 0.0), 1.0);
    }

    #[test]
    fn decide_borrow_thresholds() {
        // Rejection threshold 0.2 * (2.3190607 - 2 dE) from the rearranged
        // posterior criterion.
        let ext = arm(0.0, 20);
        let m = BorrowingMethod::fixed(0.5).unwrap();
        assert!(decide_borrow(&arm(0.463_82, 25), &ext, m, 0.0, 0.975));
        assert!(!decide_borrow(&arm(0.463_80, 25), &ext, m, 0.0, 0.975));
        let ext = arm(0.5, 20);
        assert!(decide_borrow(&arm(0.263_82, 25), &ext, m, 0.0, 0.975));
        assert!(!decide_borrow(&arm(0.263_80, 25), &ext, m, 0.0, 0.975));

        let cut = 1.959_964 * 0.2;
        let nb = BorrowingMethod::NoBorrowing;
        assert!(decide_borrow(&arm(cut + 1e-6, 25), &ext, nb, 0.0, 0.975));
        assert!(!decide_borrow(&arm(cut - 1e-6, 25), &ext, nb, 0.0, 0.975));
    }

    #[test]
    fn decide_no_borrow_levels() {
        // Size of the fixed-weight test at dE = 0: 1 - Φ(2.3190607).
        let alpha_b = norm_sf(2.319_060_66);
        assert!((alpha_b - 0.010_195_874).abs() < 1e-9);
        assert!(decide_no_borrow(&arm(0.463_813, 25), 0.0, alpha_b));
        assert!(!decide_no_borrow(&arm(0.463_811, 25), 0.0, alpha_b));
        assert!(!decide_no_borrow(&arm(0.0, 25), 0.0, 0.025));
        assert!(decide_no_borrow(&arm(-100.0, 25), 0.0, 1.0));
        assert!(!decide_no_borrow(&arm(100.0, 25), 0.0, 0.0));
    }

    #[test]
    fn no_borrow_size_is_exact() {
        // P(mean > theta0 + z sigma/sqrt(n)) under theta0 equals alpha.
        for &alpha in &[0.001, 0.025, 0.3] {
            let z = upper_quantile(alpha).unwrap();
            assert!((norm_sf(z) - alpha).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn eb_closed_form_matches_marginal_likelihood_argmax(
            d in -3.0f64..3.0, de in -3.0f64..3.0,
            n in 1u32..200, ne in 1u32..2000,
            s in 0.2f64..3.0, se in 0.2f64..3.0,
        ) {
            let cur = ArmSummary::new(d, n, s).unwrap();
            let ext = ArmSummary::new(de, ne, se).unwrap();
            let closed = eb_delta(&cur, &ext);
            let numeric = eb_delta_numeric(&cur, &ext, 1e-12).unwrap();
            prop_assert!((closed - numeric).abs() <= 1e-6, "{} vs {}", closed, numeric);
        }

        #[test]
        fn eb_weight_properties(d in -3.0f64..3.0, de in -3.0f64..3.0, bump in 0.0f64..1.0) {
            let cur = arm(d, 25);
            let ext = arm(de, 20);
            let w = eb_delta(&cur, &ext);
            prop_assert!((0.0..=1.0).contains(&w));
            let diff2 = (d - de).powi(2);
            prop_assert_eq!(w == 1.0, diff2 <= 0.04 + 0.05);
            let further = arm(de + (d - de).signum() * ((d - de).abs() + bump), 25);
            prop_assert!(eb_delta(&further, &ext) <= w);
        }

        #[test]
        fn fixed_pp_mean_is_between(d in -5.0f64..5.0, de in -5.0f64..5.0, delta in 0.0f64..=1.0) {
            let p = fixed_pp_posterior(&arm(d, 25), &arm(de, 20), delta);
            prop_assert!(p.mean >= d.min(de) - 1e-12 && p.mean <= d.max(de) + 1e-12);
        }

        #[test]
        fn fixed_pp_tail_monotone(d in -2.0f64..2.0, de in -2.0f64..2.0, delta in 0.01f64..=1.0, h in 1e-3f64..0.5) {
            let m = |a: f64, b: f64| posterior_z(&fixed_pp_posterior(&arm(a, 25), &arm(b, 20), delta), 0.0);
            prop_assert!(m(d + h, de) > m(d, de));
            prop_assert!(m(d, de + h) > m(d, de));
        }
    }
}
