//! One simulated heat station: plant, meter link, uplink and the two loops.

use heatdispatch_core::{Command, MeterReading, Reply, StationId, TelemetryFrame, Transport, TransportError};
use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::link::{simulate_transfer, Transfer};
use crate::meter::MeterLink;
use crate::plant::{ConfigError, PlantState, StationConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StationStats {
    /// Push attempts, including dropped ones.
    pub sent: u64,
    /// Pushes the service answered with 200 (stored or duplicate).
    pub acked: u64,
    pub dropped: u64,
    /// Non-200 replies and transport failures on the push path.
    pub failed: u64,
    pub meter_errors: u64,
    pub polls: u64,
    pub commands_applied: u64,
    pub commands_ignored: u64,
    pub command_acks_failed: u64,
    /// Simulated time spent on the link by delivered pushes.
    pub link_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PushOutcome {
    Stored,
    Duplicate,
    Dropped,
    Rejected { status: u16, body: String },
    Failed(TransportError),
}

/// A frame that has been built and sent into the link model, not yet delivered.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPush {
    pub frame: TelemetryFrame,
    pub transfer: Transfer,
}

#[derive(Debug)]
pub struct Station {
    config: StationConfig,
    state: PlantState,
    meter: MeterLink,
    rng: ChaCha8Rng,
    stats: StationStats,
    last_reading: Option<MeterReading>,
}

impl Station {
    /// `address` is the primary M-Bus address of the station's meter.
    pub fn new(config: StationConfig, address: u8) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Station {
            state: PlantState::initial(&config),
            meter: MeterLink::new(address),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            stats: StationStats::default(),
            last_reading: None,
            config,
        })
    }

    pub fn id(&self) -> &StationId {
        &self.config.id
    }

    pub fn config(&self) -> &StationConfig {
        &self.config
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn stats(&self) -> &StationStats {
        &self.stats
    }

    pub fn last_reading(&self) -> Option<MeterReading> {
        self.last_reading
    }

    pub fn meter_mut(&mut self) -> &mut MeterLink {
        &mut self.meter
    }

    /// Steps the plant by one push period, reads the meter and builds the
    /// next frame stamped with `timestamp`, then runs it through the link model.
    pub fn prepare_push(&mut self, timestamp: u64) -> PreparedPush {
        let dt = self.config.push_period.as_secs_f64();
        self.state = self.state.step(&self.config, dt);
        match self.meter.exchange(&self.state) {
            Ok(reading) => self.last_reading = Some(reading),
            Err(e) => {
                self.stats.meter_errors += 1;
                warn!("{}: meter exchange failed: {e}", self.config.id);
            }
        }
        let frame = self.state.frame(&self.config.id, timestamp);
        let transfer = simulate_transfer(frame.encode().len(), &self.config.link, &mut self.rng);
        self.stats.sent += 1;
        if let Transfer::Delivered(secs) = transfer {
            self.stats.link_seconds += secs;
        }
        PreparedPush { frame, transfer }
    }

    /// Records how a delivered push was answered. Only a 200 moves `seq` on.
    pub fn finish_push(&mut self, push: &PreparedPush, reply: Result<Reply, TransportError>) -> PushOutcome {
        let outcome = match reply {
            Ok(r) if r.status == 200 && r.body == "DUP" => PushOutcome::Duplicate,
            Ok(r) if r.status == 200 => PushOutcome::Stored,
            Ok(r) => PushOutcome::Rejected {
                status: r.status,
                body: r.body,
            },
            Err(e) => PushOutcome::Failed(e),
        };
        match &outcome {
            PushOutcome::Stored | PushOutcome::Duplicate => {
                self.stats.acked += 1;
                if self.state.seq == push.frame.seq {
                    self.state.seq += 1;
                }
            }
            PushOutcome::Rejected { status, body } => {
                self.stats.failed += 1;
                warn!(
                    "{}: seq {} rejected with {status} {body}",
                    self.config.id, push.frame.seq
                );
            }
            PushOutcome::Failed(e) => {
                self.stats.failed += 1;
                warn!("{}: seq {} not sent: {e}", self.config.id, push.frame.seq);
            }
            PushOutcome::Dropped => {}
        }
        outcome
    }

    pub fn record_drop(&mut self, push: &PreparedPush) -> PushOutcome {
        self.stats.dropped += 1;
        debug!("{}: seq {} dropped on the link", self.config.id, push.frame.seq);
        PushOutcome::Dropped
    }

    /// One push period with the link delay folded into the current instant.
    pub fn push(&mut self, transport: &dyn Transport, timestamp: u64) -> PushOutcome {
        let push = self.prepare_push(timestamp);
        match push.transfer {
            Transfer::Dropped => self.record_drop(&push),
            Transfer::Delivered(_) => {
                let reply = transport.get(&record_path(&push.frame));
                self.finish_push(&push, reply)
            }
        }
    }

    /// Applies fetched commands in id order. Returns the ids to acknowledge.
    pub fn apply_commands(&mut self, mut commands: Vec<Command>) -> Vec<u64> {
        commands.sort_by_key(|c| c.id);
        let mut ids = Vec::with_capacity(commands.len());
        for cmd in commands {
            if cmd.station != self.config.id {
                warn!("{}: ignoring command {} for {}", self.config.id, cmd.id, cmd.station);
                continue;
            }
            if self.state.apply(&cmd.kind) {
                self.stats.commands_applied += 1;
                debug!("{}: applied {} ({})", self.config.id, cmd.id, cmd.kind);
            } else {
                self.stats.commands_ignored += 1;
                debug!("{}: {} not applicable in {}", self.config.id, cmd.kind, self.state.mode);
            }
            ids.push(cmd.id);
        }
        ids
    }

    /// One poll period: fetch, apply, acknowledge.
    pub fn poll(&mut self, transport: &dyn Transport) -> Result<usize, TransportError> {
        let commands = fetch_commands(transport, &self.config.id)?;
        self.stats.polls += 1;
        let ids = self.apply_commands(commands);
        let failed = ack_commands(transport, &self.config.id, &ids);
        self.stats.command_acks_failed += failed;
        Ok(ids.len())
    }

    pub fn note_poll_failure(&mut self, e: &TransportError) {
        warn!("{}: poll failed: {e}", self.config.id);
    }
}

pub fn record_path(frame: &TelemetryFrame) -> String {
    let data: String = form_urlencoded::byte_serialize(frame.encode().as_bytes()).collect();
    format!("/zapis_danni?data={data}")
}

fn station_param(station: &StationId) -> String {
    form_urlencoded::byte_serialize(station.as_str().as_bytes()).collect()
}

pub fn fetch_commands(transport: &dyn Transport, station: &StationId) -> Result<Vec<Command>, TransportError> {
    let reply = transport.get(&format!("/commands/poll?station={}", station_param(station)))?;
    if reply.status != 200 {
        return Err(TransportError(format!("poll answered {} {}", reply.status, reply.body)));
    }
    serde_json::from_str(&reply.body).map_err(|e| TransportError(format!("poll body: {e}")))
}

/// Acknowledges each id; returns how many acks failed.
pub fn ack_commands(transport: &dyn Transport, station: &StationId, ids: &[u64]) -> u64 {
    let station_q = station_param(station);
    let mut failed = 0;
    for id in ids {
        match transport.get(&format!("/commands/ack?station={station_q}&id={id}")) {
            Ok(r) if r.status == 200 => {}
            Ok(r) => {
                failed += 1;
                warn!("{station}: ack {id} answered {} {}", r.status, r.body);
            }
            Err(e) => {
                failed += 1;
                warn!("{station}: ack {id} failed: {e}");
            }
        }
    }
    failed
}
