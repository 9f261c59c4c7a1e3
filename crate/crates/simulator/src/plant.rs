//! First-order thermal model of a heat station.
//!
//! Each channel relaxes toward its setpoint while its pump runs and toward
//! ambient otherwise, integrated with forward Euler at the push period.
//! Temperatures are kept at full precision internally and quantized to
//! tenths only when a telemetry frame is built, so the trajectory does not
//! stall a few tenths short of its target.

use std::time::Duration;

use heatdispatch_core::command::CommandKind;
use heatdispatch_core::{OperatingMode, PumpState, StationId, TelemetryFrame, Temperature, CHANNELS};
use thiserror::Error;

use crate::link::{LinkProfile, ProfileError};

#[derive(Debug, Clone, PartialEq)]
pub struct StationConfig {
    pub id: StationId,
    pub push_period: Duration,
    pub poll_period: Duration,
    pub link: LinkProfile,
    pub ambient: Temperature,
    pub setpoints: [Temperature; CHANNELS],
    /// First-order rate constant, per second.
    pub rate_k: f64,
    /// Thermostat dead band in degrees Celsius.
    pub hysteresis: f64,
    pub initial_mode: OperatingMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("push period must be at least 1 ms")]
    PushPeriod,
    #[error("poll period must be at least 1 ms")]
    PollPeriod,
    #[error("rate constant must be positive and finite, got {0}")]
    RateConstant(f64),
    #[error("hysteresis must be positive and finite, got {0}")]
    Hysteresis(f64),
    #[error("duplicate station id {0}")]
    DuplicateStation(StationId),
    #[error("fleet needs at least one station")]
    EmptyFleet,
    #[error(transparent)]
    Link(#[from] ProfileError),
}

impl StationConfig {
    pub fn new(id: StationId) -> Self {
        StationConfig {
            id,
            push_period: Duration::from_secs(1),
            poll_period: Duration::from_secs(5),
            link: LinkProfile::perfect(),
            ambient: Temperature::from_tenths(150).expect("15.0 C"),
            setpoints: [Temperature::from_tenths(550).expect("55.0 C"); CHANNELS],
            rate_k: 0.05,
            hysteresis: 1.0,
            initial_mode: OperatingMode::Auto,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.push_period < Duration::from_millis(1) {
            return Err(ConfigError::PushPeriod);
        }
        if self.poll_period < Duration::from_millis(1) {
            return Err(ConfigError::PollPeriod);
        }
        if !(self.rate_k > 0.0 && self.rate_k.is_finite()) {
            return Err(ConfigError::RateConstant(self.rate_k));
        }
        if !(self.hysteresis > 0.0 && self.hysteresis.is_finite()) {
            return Err(ConfigError::Hysteresis(self.hysteresis));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    /// Channel temperatures in degrees Celsius, within the Temperature bounds.
    pub temps: [f64; CHANNELS],
    pub pumps: [PumpState; CHANNELS],
    pub setpoints: [Temperature; CHANNELS],
    pub mode: OperatingMode,
    /// Sequence number of the next frame to deliver.
    pub seq: u32,
    /// Seconds of simulated time elapsed.
    pub sim_time: f64,
    /// Accumulated pump running time over all channels, in milliseconds.
    pub pump_on_ms: u64,
}

impl PlantState {
    pub fn initial(config: &StationConfig) -> Self {
        PlantState {
            temps: [config.ambient.celsius(); CHANNELS],
            pumps: [PumpState::Off; CHANNELS],
            setpoints: config.setpoints,
            mode: config.initial_mode,
            seq: 1,
            sim_time: 0.0,
            pump_on_ms: 0,
        }
    }

    /// Temperatures as reported, rounded to tenths.
    pub fn reported_temps(&self) -> [Temperature; CHANNELS] {
        self.temps.map(Temperature::from_celsius_clamped)
    }

    pub fn frame(&self, station: &StationId, timestamp: u64) -> TelemetryFrame {
        TelemetryFrame {
            station: station.clone(),
            seq: self.seq,
            timestamp,
            temps: self.reported_temps(),
            pumps: self.pumps,
            mode: self.mode,
        }
    }

    /// Advances the plant by `dt` seconds.
    pub fn step(&self, config: &StationConfig, dt: f64) -> PlantState {
        let mut next = self.clone();
        match next.mode {
            OperatingMode::Auto => {
                for i in 0..CHANNELS {
                    let setpoint = next.setpoints[i].celsius();
                    if next.temps[i] < setpoint - config.hysteresis {
                        next.pumps[i] = PumpState::On;
                    } else if next.temps[i] > setpoint + config.hysteresis {
                        next.pumps[i] = PumpState::Off;
                    }
                }
            }
            OperatingMode::Manual => {}
            OperatingMode::Off => next.pumps = [PumpState::Off; CHANNELS],
        }

        // never step past the target, whatever k * dt is
        let gain = (config.rate_k * dt).min(1.0);
        let ambient = config.ambient.celsius();
        for i in 0..CHANNELS {
            let target = if next.pumps[i].is_on() {
                next.setpoints[i].celsius()
            } else {
                ambient
            };
            let t = if gain >= 1.0 {
                target
            } else {
                next.temps[i] + gain * (target - next.temps[i])
            };
            next.temps[i] = t.clamp(Temperature::MIN.celsius(), Temperature::MAX.celsius());
        }

        let running = next.pumps.iter().filter(|p| p.is_on()).count() as u64;
        next.pump_on_ms += running * (dt * 1000.0).round() as u64;
        next.sim_time += dt;
        next
    }

    /// Applies a dispatcher command. Returns false when the command does not
    /// apply in the current mode (pump commands outside MANUAL).
    pub fn apply(&mut self, kind: &CommandKind) -> bool {
        match *kind {
            CommandKind::SetMode(mode) => {
                self.mode = mode;
                if mode == OperatingMode::Off {
                    self.pumps = [PumpState::Off; CHANNELS];
                }
                true
            }
            CommandKind::SetPump(channel, state) => {
                if self.mode != OperatingMode::Manual {
                    return false;
                }
                self.pumps[channel.index()] = state;
                true
            }
            CommandKind::SetSetpoint(channel, value) => {
                self.setpoints[channel.index()] = value;
                true
            }
        }
    }
}

/// Free-function form of [`PlantState::step`].
pub fn step_plant(state: &PlantState, config: &StationConfig, dt: f64) -> PlantState {
    state.step(config, dt)
}
