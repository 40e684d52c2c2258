//! Standard normal distribution functions.
//!
//! The cdf and survival function are computed through `erfc`, which keeps
//! relative accuracy deep into either tail. Tail probabilities of a few
//! times 1e-4 are common for strongly conflicting external data, and the
//! calibrated test inverts them again, so absolute accuracy alone would not
//! be enough.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Density of N(mean, sd^2) at `x`.
pub fn normal_density(x: f64, mean: f64, sd: f64) -> f64 {
    norm_pdf((x - mean) / sd) / sd
}

/// Standard normal cdf, Φ(z).
pub fn norm_cdf(z: f64) -> f64 {
    if z == f64::NEG_INFINITY {
        return 0.0;
    }
    if z == f64::INFINITY {
        return 1.0;
    }
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail 1 - Φ(z), accurate in relative terms for large `z`.
pub fn norm_sf(z: f64) -> f64 {
    norm_cdf(-z)
}

/// Inverse of [`norm_cdf`].
///
/// `p = 0` and `p = 1` map to the infinite sentinels.
pub fn norm_quantile(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!(
            "normal quantile requires p in [0, 1], got {p}"
        )));
    }
    if p == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if p == 1.0 {
        return Ok(f64::INFINITY);
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p < 0.5 {
        Ok(lower_quantile(p))
    } else {
        // 1 - p is exact for p >= 0.5.
        Ok(-lower_quantile(1.0 - p))
    }
}

/// z_{1-alpha}, the critical value of a one-sided level-alpha z-test.
///
/// Computed as `-Φ⁻¹(alpha)` for small `alpha` so that tiny levels keep
/// their relative accuracy.
pub fn upper_quantile(alpha: f64) -> Result<f64> {
    norm_quantile(alpha).map(|q| -q)
}

/// Quantile for `0 < p < 0.5`: rational starting value refined by Halley
/// steps on Φ(x) - p.
fn lower_quantile(p: f64) -> f64 {
    let t = (-2.0 * p.ln()).sqrt();
    let num = 2.515_517 + t * (0.802_853 + t * 0.010_328);
    let den = 1.0 + t * (1.432_788 + t * (0.189_269 + t * 0.001_308));
    let mut x = -(t - num / den);

    for _ in 0..10 {
        let dens = norm_pdf(x);
        if dens == 0.0 {
            break;
        }
        let u = (norm_cdf(x) - p) / dens;
        let step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    // 40-digit reference values of Φ.
    const CDF_REFERENCE: &[(f64, f64)] = &[
        (-8.0, 6.220_960_574_271_784e-16),
        (-6.0, 9.865_876_450_376_98e-10),
        (-4.0, 3.167_124_183_311_992e-5),
        (-2.5, 0.006_209_665_325_776_135),
        (-1.0, 0.158_655_253_931_457_05),
        (-0.5, 0.308_537_538_725_986_9),
        (0.3, 0.617_911_422_188_952_6),
        (1.0, 0.841_344_746_068_542_9),
        (1.959_964, 0.975_000_000_903_557_6),
        (2.319_052, 0.989_803_891_518_520_5),
        (3.5, 0.999_767_370_920_964_5),
        (5.0, 0.999_999_713_348_428_1),
        (7.5, 0.999_999_999_999_968_1),
    ];

    const QUANTILE_REFERENCE: &[(f64, f64)] = &[
        (1e-12, -7.034_483_825_301_132),
        (1e-6, -4.753_424_308_822_899),
        (1e-4, -3.719_016_485_455_680_6),
        (0.010_193, -2.319_166_687_030_109),
        (0.025, -1.959_963_984_540_054_2),
        (0.1, -1.281_551_565_544_600_5),
        (0.9, 1.281_551_565_544_600_5),
        (0.975, 1.959_963_984_540_054_2),
        (0.999_999, 4.753_424_308_822_899),
    ];

    #[test]
    fn cdf_matches_reference() {
        for &(z, expected) in CDF_REFERENCE {
            let got = norm_cdf(z);
            assert!((got - expected).abs() <= 1e-15, "z={z}: {got} vs {expected}");
            if z < -3.0 {
                assert!(((got - expected) / expected).abs() < 1e-13, "z={z}");
            }
        }
    }

    #[test]
    fn cdf_fixed_points() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert_eq!(norm_cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(norm_cdf(f64::INFINITY), 1.0);
        assert!((norm_cdf(1.959_964) - 0.975).abs() < 1e-8);
        assert!((norm_cdf(-1.0) - 0.158_655_3).abs() < 1e-7);
    }

    #[test]
    fn quantile_matches_reference() {
        for &(p, expected) in QUANTILE_REFERENCE {
            let got = norm_quantile(p).unwrap();
            // Decimal p above 0.5 is not exact in binary; allow for the
            // conditioning of the quantile at that point.
            let slack = if p > 0.5 { f64::EPSILON / norm_pdf(expected) } else { 0.0 };
            assert!(
                (got - expected).abs() <= 1e-12 * expected.abs().max(1.0) + slack,
                "p={p}: {got} vs {expected}"
            );
        }
        assert_eq!(norm_quantile(0.5).unwrap(), 0.0);
        assert!((norm_quantile(0.975).unwrap() - 1.959_964).abs() < 1e-6);
        assert!((norm_quantile(0.9).unwrap() - 1.281_551_6).abs() < 1e-7);
    }

    #[test]
    fn quantile_domain() {
        assert_eq!(norm_quantile(0.0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(norm_quantile(1.0).unwrap(), f64::INFINITY);
        assert!(matches!(norm_quantile(-0.1), Err(Error::Domain(_))));
        assert!(matches!(norm_quantile(1.5), Err(Error::Domain(_))));
        assert!(norm_quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_far_tail() {
        for &p in &[1e-300, 1e-100, 1e-20] {
            let x = norm_quantile(p).unwrap();
            let back = norm_cdf(x);
            assert!(((back - p) / p).abs() < 1e-12, "p={p}: {back}");
        }
    }

    #[test]
    fn upper_quantile_small_levels() {
        let z = upper_quantile(3e-4).unwrap();
        assert!(((norm_sf(z) - 3e-4) / 3e-4).abs() < 1e-13);
        assert_eq!(upper_quantile(1.0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(upper_quantile(0.0).unwrap(), f64::INFINITY);
    }

    /// Independent Φ: Taylor series for |z| <= 3, Laplace continued
    /// fraction for the tails.
    fn oracle_cdf(z: f64) -> f64 {
        if z.abs() <= 3.0 {
            // Φ(z) = 1/2 + φ(z) Σ z^(2k+1) / (2k+1)!!
            let mut term = z;
            let mut sum = z;
            let mut k = 0.0;
            while term.abs() > 1e-18 * sum.abs().max(1e-300) {
                k += 1.0;
                term *= z * z / (2.0 * k + 1.0);
                sum += term;
            }
            0.5 + norm_pdf(z) * sum
        } else {
            let x = z.abs();
            // Mills ratio R(x) = 1/(x + 1/(x + 2/(x + 3/(x + ...))))
            let mut frac = x;
            for k in (1..=200).rev() {
                frac = x + k as f64 / frac;
            }
            let tail = norm_pdf(x) / frac;
            if z < 0.0 { tail } else { 1.0 - tail }
        }
    }

    #[test]
    fn cdf_agrees_with_series_oracle() {
        let mut z = -8.0;
        while z <= 8.0 {
            let (a, b) = (norm_cdf(z), oracle_cdf(z));
            assert!((a - b).abs() <= 1e-15, "z={z}: {a} vs {b}");
            z += 0.0625;
        }
    }

    proptest::proptest! {
        #[test]
        fn cdf_symmetry(z in -8.0f64..8.0) {
            proptest::prop_assert!((norm_cdf(z) + norm_cdf(-z) - 1.0).abs() <= 1e-15);
        }

        #[test]
        fn quantile_inverts_cdf(log_p in -12.0f64..-std::f64::consts::LOG10_2, upper in proptest::bool::ANY) {
            let p = 10f64.powf(log_p);
            let p = if upper { 1.0 - p } else { p };
            let back = norm_cdf(norm_quantile(p).unwrap());
            proptest::prop_assert!((back - p).abs() <= 1e-12, "p={} back={}", p, back);
        }
    }
}
