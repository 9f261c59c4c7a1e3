//! Drives many stations against one service.
//!
//! In simulated time the fleet is an event loop over a [`SimClock`]: at each
//! instant every due station polls first, then pushes, and stations are
//! stepped side by side through [`Execution`]. Each station only touches its
//! own plant, RNG and log file, so results do not depend on the execution
//! mode. In real time each station runs a push thread and a poll thread that
//! share the station behind a mutex.

use std::collections::HashSet;
use std::fmt;
use std::thread;
use std::time::{Duration, Instant};

use heatdispatch_core::{Clock, Execution, SimClock, StationId, Transport};
use log::info;
use parking_lot::Mutex;

use crate::link::Transfer;
use crate::plant::{ConfigError, StationConfig};
use crate::station::{record_path, Station, StationStats};

/// Where a run takes its time from.
#[derive(Clone, Copy)]
pub enum RunClock<'a> {
    /// Fast-forward: the fleet advances this clock itself.
    Simulated(&'a SimClock),
    /// Wall-clock pacing; frame timestamps come from the given clock.
    RealTime(&'a dyn Clock),
}

struct Slot {
    station: Station,
    /// Offsets from the fleet origin, in milliseconds.
    next_push: u64,
    next_poll: u64,
}

impl Slot {
    fn push_ms(&self) -> u64 {
        self.station.config().push_period.as_millis() as u64
    }

    fn poll_ms(&self) -> u64 {
        self.station.config().poll_period.as_millis() as u64
    }

    fn next_event(&self) -> u64 {
        self.next_push.min(self.next_poll)
    }

    fn fire(&mut self, at: u64, transport: &dyn Transport, now_secs: u64) {
        if self.next_poll == at {
            if let Err(e) = self.station.poll(transport) {
                self.station.note_poll_failure(&e);
            }
            self.next_poll += self.poll_ms();
        }
        if self.next_push == at {
            self.station.push(transport, now_secs);
            self.next_push += self.push_ms();
        }
    }
}

pub struct Fleet {
    slots: Vec<Slot>,
    exec: Execution,
    origin_ms: Option<u64>,
}

impl Fleet {
    pub fn new(configs: Vec<StationConfig>) -> Result<Self, ConfigError> {
        if configs.is_empty() {
            return Err(ConfigError::EmptyFleet);
        }
        let mut seen = HashSet::new();
        for c in &configs {
            if !seen.insert(c.id.clone()) {
                return Err(ConfigError::DuplicateStation(c.id.clone()));
            }
        }
        let slots = configs
            .into_iter()
            .enumerate()
            .map(|(i, config)| {
                // primary M-Bus addresses run 1..=250
                let station = Station::new(config, (i % 250) as u8 + 1)?;
                Ok(Slot {
                    next_push: station.config().push_period.as_millis() as u64,
                    next_poll: station.config().poll_period.as_millis() as u64,
                    station,
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Ok(Fleet {
            slots,
            exec: Execution::default(),
            origin_ms: None,
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn stations(&self) -> impl Iterator<Item = &Station> {
        self.slots.iter().map(|s| &s.station)
    }

    pub fn station(&self, id: &StationId) -> Option<&Station> {
        self.stations().find(|s| s.id() == id)
    }

    pub fn station_mut(&mut self, id: &StationId) -> Option<&mut Station> {
        self.slots.iter_mut().map(|s| &mut s.station).find(|s| s.id() == id)
    }

    /// Processes every event up to `elapsed` after the first call's clock
    /// reading, leaving `clock` at that instant. Can be called repeatedly to
    /// interleave the run with outside actions.
    pub fn run_until(&mut self, transport: &dyn Transport, clock: &SimClock, elapsed: Duration) -> FleetSummary {
        let origin = *self.origin_ms.get_or_insert_with(|| clock.now_millis());
        let end = elapsed.as_millis() as u64;
        while let Some(at) = self.slots.iter().map(Slot::next_event).min().filter(|&t| t <= end) {
            clock.advance_to(origin + at);
            let now_secs = clock.now_secs();
            self.exec
                .for_each_mut(&mut self.slots, |slot| slot.fire(at, transport, now_secs));
        }
        clock.advance_to(origin + end);
        self.summary()
    }

    /// Paces both loops of every station on the wall clock for `duration`.
    pub fn run_realtime(&mut self, transport: &dyn Transport, clock: &dyn Clock, duration: Duration) -> FleetSummary {
        let cells: Vec<Mutex<Slot>> = std::mem::take(&mut self.slots).into_iter().map(Mutex::new).collect();
        let start = Instant::now();
        let deadline = start + duration;
        thread::scope(|scope| {
            for cell in &cells {
                let (push, poll) = {
                    let slot = cell.lock();
                    (slot.station.config().push_period, slot.station.config().poll_period)
                };
                scope.spawn(move || {
                    every(start, push, deadline, || {
                        let prepared = cell.lock().station.prepare_push(clock.now_secs());
                        match prepared.transfer {
                            Transfer::Dropped => {
                                cell.lock().station.record_drop(&prepared);
                            }
                            Transfer::Delivered(secs) => {
                                thread::sleep(Duration::from_secs_f64(secs));
                                let reply = transport.get(&record_path(&prepared.frame));
                                cell.lock().station.finish_push(&prepared, reply);
                            }
                        }
                    })
                });
                scope.spawn(move || {
                    every(start, poll, deadline, || {
                        let mut slot = cell.lock();
                        if let Err(e) = slot.station.poll(transport) {
                            slot.station.note_poll_failure(&e);
                        }
                    })
                });
            }
        });
        self.slots = cells.into_iter().map(Mutex::into_inner).collect();
        self.summary()
    }

    pub fn run(&mut self, transport: &dyn Transport, clock: RunClock<'_>, duration: Duration) -> FleetSummary {
        info!("running {} stations for {:?}", self.slots.len(), duration);
        match clock {
            RunClock::Simulated(sim) => self.run_until(transport, sim, duration),
            RunClock::RealTime(clock) => self.run_realtime(transport, clock, duration),
        }
    }

    pub fn summary(&self) -> FleetSummary {
        FleetSummary {
            stations: self
                .slots
                .iter()
                .map(|s| (s.station.id().clone(), *s.station.stats()))
                .collect(),
        }
    }
}

/// Calls `f` at `start + k * period` for k = 1, 2, ... while not past `deadline`.
fn every(start: Instant, period: Duration, deadline: Instant, mut f: impl FnMut()) {
    let mut k = 1u32;
    loop {
        let Some(at) = period.checked_mul(k).map(|d| start + d) else {
            return;
        };
        if at > deadline {
            return;
        }
        let now = Instant::now();
        if at > now {
            thread::sleep(at - now);
        }
        f();
        k += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetSummary {
    pub stations: Vec<(StationId, StationStats)>,
}

impl FleetSummary {
    pub fn get(&self, id: &StationId) -> Option<&StationStats> {
        self.stations.iter().find(|(s, _)| s == id).map(|(_, st)| st)
    }

    pub fn total(&self) -> StationStats {
        self.stations.iter().fold(StationStats::default(), |mut acc, (_, s)| {
            acc.sent += s.sent;
            acc.acked += s.acked;
            acc.dropped += s.dropped;
            acc.failed += s.failed;
            acc.meter_errors += s.meter_errors;
            acc.polls += s.polls;
            acc.commands_applied += s.commands_applied;
            acc.commands_ignored += s.commands_ignored;
            acc.command_acks_failed += s.command_acks_failed;
            acc.link_seconds += s.link_seconds;
            acc
        })
    }
}

impl fmt::Display for FleetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>8} {:>8} {:>8} {:>8} {:>9}",
            "station", "sent", "acked", "dropped", "failed", "commands"
        )?;
        for (id, s) in &self.stations {
            writeln!(
                f,
                "{:<12} {:>8} {:>8} {:>8} {:>8} {:>9}",
                id.as_str(),
                s.sent,
                s.acked,
                s.dropped,
                s.failed,
                s.commands_applied + s.commands_ignored
            )?;
        }
        Ok(())
    }
}

/// Builds a fleet from `configs` and runs it for `duration`.
pub fn run_fleet(
    configs: Vec<StationConfig>,
    transport: &dyn Transport,
    clock: RunClock<'_>,
    duration: Duration,
) -> Result<FleetSummary, ConfigError> {
    Ok(Fleet::new(configs)?.run(transport, clock, duration))
}

/// Runs a single station; see [`run_fleet`].
pub fn run_station(
    config: StationConfig,
    transport: &dyn Transport,
    clock: RunClock<'_>,
    duration: Duration,
) -> Result<StationStats, ConfigError> {
    let summary = run_fleet(vec![config], transport, clock, duration)?;
    Ok(summary.stations[0].1)
}

/// Configs for `n` stations named ST01, ST02, ... with seeds `seed + i`.
pub fn fleet_configs(n: usize, base: &StationConfig, seed: u64) -> Vec<StationConfig> {
    (0..n)
        .map(|i| StationConfig {
            id: StationId::new(format!("ST{:02}", i + 1)).expect("generated ids are valid"),
            seed: seed.wrapping_add(i as u64),
            ..base.clone()
        })
        .collect()
}
