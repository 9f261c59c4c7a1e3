//! Transport link profiles for the four classes of dispatch network.
//!
//! Only the dial-up bitrate (56 kbit/s) is a quoted figure; the other presets
//! are representative values for radio, GPRS and broadband links.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkProfile {
    name: String,
    bitrate_bps: f64,
    latency_s: f64,
    drop_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("bitrate must be positive, got {0}")]
    Bitrate(f64),
    #[error("latency must be non-negative, got {0}")]
    Latency(f64),
    #[error("drop probability must be in [0, 1), got {0}")]
    DropProbability(f64),
    #[error("unknown link profile {0:?} (expected dialup, radio, gprs, broadband or perfect)")]
    UnknownPreset(String),
}

impl LinkProfile {
    pub const PRESETS: [&'static str; 5] = ["dialup", "radio", "gprs", "broadband", "perfect"];

    pub fn new(
        name: impl Into<String>,
        bitrate_bps: f64,
        latency_s: f64,
        drop_probability: f64,
    ) -> Result<Self, ProfileError> {
        if bitrate_bps.is_nan() || bitrate_bps <= 0.0 {
            return Err(ProfileError::Bitrate(bitrate_bps));
        }
        if !latency_s.is_finite() || latency_s < 0.0 {
            return Err(ProfileError::Latency(latency_s));
        }
        if !(0.0..1.0).contains(&drop_probability) {
            return Err(ProfileError::DropProbability(drop_probability));
        }
        Ok(LinkProfile {
            name: name.into(),
            bitrate_bps,
            latency_s,
            drop_probability,
        })
    }

    /// Switched-circuit modem at 56 kbit/s.
    pub fn dialup() -> Self {
        LinkProfile::new("dialup", 56_000.0, 0.5, 0.02).expect("valid preset")
    }

    pub fn radio() -> Self {
        LinkProfile::new("radio", 9_600.0, 0.3, 0.05).expect("valid preset")
    }

    pub fn gprs() -> Self {
        LinkProfile::new("gprs", 40_000.0, 0.7, 0.03).expect("valid preset")
    }

    pub fn broadband() -> Self {
        LinkProfile::new("broadband", 10_000_000.0, 0.02, 0.001).expect("valid preset")
    }

    /// Lossless, zero-latency link for tests.
    pub fn perfect() -> Self {
        LinkProfile::new("perfect", 1e12, 0.0, 0.0).expect("valid preset")
    }

    pub fn preset(name: &str) -> Result<Self, ProfileError> {
        match name {
            "dialup" => Ok(Self::dialup()),
            "radio" => Ok(Self::radio()),
            "gprs" => Ok(Self::gprs()),
            "broadband" => Ok(Self::broadband()),
            "perfect" => Ok(Self::perfect()),
            other => Err(ProfileError::UnknownPreset(other.to_owned())),
        }
    }

    pub fn with_drop_probability(self, p: f64) -> Result<Self, ProfileError> {
        LinkProfile::new(self.name, self.bitrate_bps, self.latency_s, p)
    }

    pub fn with_latency(self, latency_s: f64) -> Result<Self, ProfileError> {
        LinkProfile::new(self.name, self.bitrate_bps, latency_s, self.drop_probability)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bitrate_bps(&self) -> f64 {
        self.bitrate_bps
    }

    pub fn latency_s(&self) -> f64 {
        self.latency_s
    }

    pub fn drop_probability(&self) -> f64 {
        self.drop_probability
    }
}

impl FromStr for LinkProfile {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LinkProfile::preset(s)
    }
}

impl fmt::Display for LinkProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} bit/s, {} s, drop {})",
            self.name, self.bitrate_bps, self.latency_s, self.drop_probability
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transfer {
    /// Seconds from send to arrival.
    Delivered(f64),
    Dropped,
}

impl Transfer {
    pub fn is_dropped(self) -> bool {
        matches!(self, Transfer::Dropped)
    }
}

/// Models sending `payload_bytes` over `profile`.
///
/// Draws exactly one `f64` from `rng` per call, whatever the profile, so a
/// seeded generator yields the same drop pattern on every run.
pub fn simulate_transfer<R: Rng + ?Sized>(payload_bytes: usize, profile: &LinkProfile, rng: &mut R) -> Transfer {
    let draw: f64 = rng.random();
    if draw < profile.drop_probability {
        return Transfer::Dropped;
    }
    Transfer::Delivered(profile.latency_s + (payload_bytes as f64 * 8.0) / profile.bitrate_bps)
}
