//! Runtime-tunable loop parameters.

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Upper bound on the decision period, seconds. Handoff decisions for a
/// walking user must be taken at least this often.
pub const MAX_SCAN_INTERVAL: f64 = 2.0;
pub const MAX_SCAN_DURATION: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    /// Weight of the newest RSSI sample in the smoothed value.
    pub alpha: f64,
    /// Loop period, seconds.
    pub scan_interval: f64,
    /// Minimum score gain in dB before an algorithmic handoff.
    pub hysteresis: f64,
    /// Score penalty per station already on an AP, dB.
    pub load_penalty_beta: f64,
    /// Consecutive missed scans after which a matrix cell is dropped.
    pub stale_scans_limit: u32,
    /// Dwell time of each scan, seconds.
    pub scan_duration: f64,
}

impl Default for Parameters {
    fn default() -> Self {
        Parameters {
            alpha: 0.8,
            scan_interval: 1.0,
            hysteresis: 6.0,
            load_penalty_beta: 3.0,
            stale_scans_limit: 3,
            scan_duration: 0.06,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    Alpha,
    ScanInterval,
    Hysteresis,
    LoadPenaltyBeta,
    StaleScansLimit,
    ScanDuration,
}

impl ParamName {
    pub const ALL: [ParamName; 6] = [
        ParamName::Alpha,
        ParamName::ScanInterval,
        ParamName::Hysteresis,
        ParamName::LoadPenaltyBeta,
        ParamName::StaleScansLimit,
        ParamName::ScanDuration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Alpha => "alpha",
            ParamName::ScanInterval => "scan_interval",
            ParamName::Hysteresis => "hysteresis",
            ParamName::LoadPenaltyBeta => "load_penalty_beta",
            ParamName::StaleScansLimit => "stale_scans_limit",
            ParamName::ScanDuration => "scan_duration",
        }
    }

    /// Checks `value` against this parameter's range.
    pub fn validate(self, value: f64) -> Result<(), ParamError> {
        let bad = |reason| Err(ParamError::OutOfRange { name: self, value, reason });
        if !value.is_finite() {
            return bad("must be finite");
        }
        match self {
            ParamName::Alpha if !(0.0..=1.0).contains(&value) => bad("must lie in [0, 1]"),
            ParamName::ScanInterval if value <= 0.0 => bad("must be positive"),
            ParamName::ScanInterval if value > MAX_SCAN_INTERVAL => bad("must not exceed 2 s"),
            ParamName::Hysteresis | ParamName::LoadPenaltyBeta if value < 0.0 => bad("must be >= 0"),
            ParamName::StaleScansLimit if value < 1.0 || libm::trunc(value) != value || value > u32::MAX as f64 => {
                bad("must be an integer >= 1")
            }
            ParamName::ScanDuration if value <= 0.0 || value > MAX_SCAN_DURATION => bad("must lie in (0, 1] s"),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ParamName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| ParamError::UnknownName(alloc::string::String::from(s)))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("unknown parameter `{0}`")]
    UnknownName(alloc::string::String),
    #[error("{name} = {value}: {reason}")]
    OutOfRange { name: ParamName, value: f64, reason: &'static str },
}

/// A requested parameter edit, queued until the end of the current iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamChange {
    pub name: ParamName,
    pub value: f64,
    pub requested_at: f64,
}

impl ParamChange {
    pub fn new(name: ParamName, value: f64, requested_at: f64) -> Result<Self, ParamError> {
        name.validate(value)?;
        Ok(ParamChange { name, value, requested_at })
    }
}

impl Parameters {
    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::Alpha => self.alpha,
            ParamName::ScanInterval => self.scan_interval,
            ParamName::Hysteresis => self.hysteresis,
            ParamName::LoadPenaltyBeta => self.load_penalty_beta,
            ParamName::StaleScansLimit => self.stale_scans_limit as f64,
            ParamName::ScanDuration => self.scan_duration,
        }
    }

    pub fn set(&mut self, name: ParamName, value: f64) -> Result<(), ParamError> {
        name.validate(value)?;
        match name {
            ParamName::Alpha => self.alpha = value,
            ParamName::ScanInterval => self.scan_interval = value,
            ParamName::Hysteresis => self.hysteresis = value,
            ParamName::LoadPenaltyBeta => self.load_penalty_beta = value,
            ParamName::StaleScansLimit => self.stale_scans_limit = value as u32,
            ParamName::ScanDuration => self.scan_duration = value,
        }
        Ok(())
    }

    /// Applies changes in order; the last change to a parameter wins.
    pub fn apply_all<'a>(&mut self, changes: impl IntoIterator<Item = &'a ParamChange>) -> Result<(), ParamError> {
        for c in changes {
            self.set(c.name, c.value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for name in ParamName::ALL {
            name.validate(self.get(name))?;
        }
        Ok(())
    }
}
