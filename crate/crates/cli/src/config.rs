//! Scenario configuration documents.
//!
//! A config is one flat JSON object. Parsing validates every key, rejects
//! unknown ones and fills in defaults, so the resolved config written next
//! to each output is complete and parses back to the same value.

use borrowoc::borrow::BorrowingMethod;
use borrowoc::oc_onearm::ScenarioOneArm;
use borrowoc::oc_twoarm::ScenarioTwoArm;
use borrowoc::runner::{Design, TwoArmDesign};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Upper bound on the number of grid points.
pub const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config: {0}")]
pub struct ConfigError(pub String);

fn bad(key: &str, msg: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("key `{key}`: {msg}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    OneArm,
    TwoArm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    None,
    FixedPp,
    EbPp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    /// Points `start + i * step` up to `stop`, inclusive within half a step.
    pub fn values(&self) -> Result<Vec<f64>, ConfigError> {
        let GridSpec { start, stop, step } = *self;
        if !start.is_finite() || !stop.is_finite() {
            return Err(bad("grid", "start and stop must be finite"));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(bad("grid", format!("step must be positive, got {step}")));
        }
        if stop < start {
            return Err(bad("grid", format!("stop ({stop}) is below start ({start})")));
        }
        let count = ((stop - start) / step + 0.5).floor() as usize + 1;
        if count > MAX_GRID_POINTS {
            return Err(bad("grid", format!("{count} points exceed the limit of {MAX_GRID_POINTS}")));
        }
        Ok((0..count).map(|i| start + step * i as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub design: DesignKind,
    pub method: MethodKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(rename = "nE")]
    pub n_e: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nc: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nt: Option<u32>,
    pub sigma: f64,
    #[serde(rename = "sigmaE", default, skip_serializing_if = "Option::is_none")]
    pub sigma_e: Option<f64>,
    /// Null value (one arm) or reference control mean (two arms).
    #[serde(default)]
    pub theta0: f64,
    pub theta1: f64,
    #[serde(rename = "thetaE", default, skip_serializing_if = "Option::is_none")]
    pub theta_e: Option<f64>,
    /// Fixed external mean.
    #[serde(rename = "dE_mean", default, skip_serializing_if = "Option::is_none")]
    pub de_mean: Option<f64>,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nsim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// External means (one arm) or profile offsets (two arms).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

/// Parse, validate and complete a config document. A missing seed is
/// drawn at random and recorded in the returned config.
pub fn parse_config(document: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg: ScenarioConfig =
        serde_json::from_str(document).map_err(|e| ConfigError(e.to_string()))?;
    cfg.sigma_e.get_or_insert(cfg.sigma);
    cfg.c.get_or_insert(1.0 - cfg.alpha);
    cfg.seed.get_or_insert_with(rand::random::<u64>);
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match (self.method, self.delta) {
            (MethodKind::FixedPp, None) => return Err(bad("delta", "required when method is fixed-pp")),
            (MethodKind::FixedPp, Some(d)) if !(0.0..=1.0).contains(&d) => {
                return Err(bad("delta", format!("must lie in [0, 1], got {d}")))
            }
            (MethodKind::None | MethodKind::EbPp, Some(_)) => {
                return Err(bad("delta", "only allowed when method is fixed-pp"))
            }
            _ => {}
        }
        match self.design {
            DesignKind::OneArm => {
                let n = self.n.ok_or_else(|| bad("n", "required for a one-arm design"))?;
                positive_count("n", n)?;
                for key in ["nc", "nt"] {
                    let v = if key == "nc" { self.nc } else { self.nt };
                    if v.is_some() {
                        return Err(bad(key, "only allowed for a two-arm design"));
                    }
                }
                if self.theta_e.is_some() && self.grid.is_some() {
                    return Err(bad("grid", "cannot be combined with thetaE"));
                }
            }
            DesignKind::TwoArm => {
                positive_count("nc", self.nc.ok_or_else(|| bad("nc", "required for a two-arm design"))?)?;
                positive_count("nt", self.nt.ok_or_else(|| bad("nt", "required for a two-arm design"))?)?;
                if self.n.is_some() {
                    return Err(bad("n", "only allowed for a one-arm design; use nc and nt"));
                }
            }
        }
        if self.theta_e.is_some() && self.de_mean.is_some() {
            return Err(bad("dE_mean", "cannot be combined with thetaE"));
        }
        positive_count("nE", self.n_e)?;
        positive_real("sigma", self.sigma)?;
        positive_real("sigmaE", self.sigma_e.unwrap_or(self.sigma))?;
        for (key, v) in [("theta0", Some(self.theta0)), ("theta1", Some(self.theta1)), ("thetaE", self.theta_e), ("dE_mean", self.de_mean)] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(bad(key, format!("must be finite, got {v}")));
                }
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(bad("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if let Some(c) = self.c {
            if !(0.0..1.0).contains(&c) {
                return Err(bad("c", format!("must lie in [0, 1), got {c}")));
            }
        }
        if self.nsim == Some(0) {
            return Err(bad("nsim", "must be at least 1"));
        }
        if let Some(g) = &self.grid {
            g.values()?;
        }
        match self.design {
            DesignKind::OneArm if !(self.theta1 > self.theta0) => {
                Err(bad("theta1", format!("must exceed theta0 ({}), got {}", self.theta0, self.theta1)))
            }
            DesignKind::TwoArm if !(self.theta1 > 0.0) => {
                Err(bad("theta1", format!("treatment effect must be positive, got {}", self.theta1)))
            }
            _ => Ok(()),
        }
    }

    pub fn method(&self) -> BorrowingMethod {
        match self.method {
            MethodKind::None => BorrowingMethod::NoBorrowing,
            MethodKind::FixedPp => BorrowingMethod::FixedPowerPrior {
                delta: self.delta.expect("validated"),
            },
            MethodKind::EbPp => BorrowingMethod::EmpiricalBayes,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("seed is filled in by parse_config")
    }

    pub fn one_arm(&self) -> Result<ScenarioOneArm, ConfigError> {
        if self.design != DesignKind::OneArm {
            return Err(bad("design", "this command needs a one-arm design"));
        }
        let s = ScenarioOneArm {
            n: self.n.expect("validated"),
            sigma: self.sigma,
            theta0: self.theta0,
            alpha: self.alpha,
            c: self.c.unwrap_or(1.0 - self.alpha),
            n_e: self.n_e,
            sigma_e: self.sigma_e.unwrap_or(self.sigma),
            theta1: self.theta1,
        };
        s.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(s)
    }

    pub fn two_arm(&self) -> Result<TwoArmDesign, ConfigError> {
        if self.design != DesignKind::TwoArm {
            return Err(bad("design", "this command needs a two-arm design"));
        }
        let scenario = ScenarioTwoArm {
            nc: self.nc.expect("validated"),
            nt: self.nt.expect("validated"),
            n_e: self.n_e,
            sigma: self.sigma,
            sigma_e: self.sigma_e.unwrap_or(self.sigma),
            theta1: self.theta1,
            alpha: self.alpha,
            c: self.c.unwrap_or(1.0 - self.alpha),
        };
        scenario.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(TwoArmDesign {
            scenario,
            theta_c: self.theta0,
            external_mean: self.de_mean.unwrap_or(0.0),
        })
    }

    pub fn design(&self) -> Result<Design, ConfigError> {
        Ok(match self.design {
            DesignKind::OneArm => Design::OneArm(self.one_arm()?),
            DesignKind::TwoArm => Design::TwoArm(self.two_arm()?),
        })
    }

    pub fn require_theta_e(&self) -> Result<f64, ConfigError> {
        self.theta_e.ok_or_else(|| bad("thetaE", "required for random external data"))
    }

    pub fn require_de_mean(&self) -> Result<f64, ConfigError> {
        self.de_mean.ok_or_else(|| bad("dE_mean", "required for a fixed external mean"))
    }

    pub fn grid_values(&self) -> Result<Option<Vec<f64>>, ConfigError> {
        self.grid.as_ref().map(GridSpec::values).transpose()
    }

    /// Canonical JSON text of the config.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn positive_count(key: &str, v: u32) -> Result<(), ConfigError> {
    if v == 0 {
        return Err(bad(key, "must be at least 1"));
    }
    Ok(())
}

fn positive_real(key: &str, v: f64) -> Result<(), ConfigError> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(bad(key, format!("must be positive and finite, got {v}")));
    }
    Ok(())
}
