//! Per-station command queue with at-most-once delivery.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use heatdispatch_core::command::{Command, CommandKind, CommandState};
use heatdispatch_core::StationId;
use parking_lot::Mutex;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AckError {
    #[error("unknown command")]
    Unknown,
    #[error("command is {0}")]
    State(CommandState),
}

#[derive(Default)]
struct Inner {
    next_id: u64,
    commands: HashMap<u64, Command>,
    /// Non-terminal command ids per station.
    open: BTreeMap<StationId, BTreeSet<u64>>,
}

impl Inner {
    fn expire(&mut self, station: &StationId, now: u64) {
        let Some(ids) = self.open.get_mut(station) else {
            return;
        };
        ids.retain(|id| {
            let cmd = self.commands.get_mut(id).expect("open ids are always stored");
            if cmd.is_expired_at(now) {
                cmd.state = CommandState::Expired;
                false
            } else {
                true
            }
        });
    }

    fn expire_all(&mut self, now: u64) {
        let stations: Vec<StationId> = self.open.keys().cloned().collect();
        for s in &stations {
            self.expire(s, now);
        }
    }
}

#[derive(Default)]
pub struct CommandQueue {
    inner: Mutex<Inner>,
}

impl CommandQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enqueue(&self, station: StationId, kind: CommandKind, now: u64, ttl: u64) -> Command {
        let mut inner = self.inner.lock();
        inner.next_id += 1;
        let cmd = Command {
            id: inner.next_id,
            station: station.clone(),
            kind,
            created_at: now,
            ttl,
            state: CommandState::Pending,
        };
        inner.commands.insert(cmd.id, cmd.clone());
        inner.open.entry(station).or_default().insert(cmd.id);
        cmd
    }

    /// Marks every live pending command for `station` delivered and returns them in id order.
    pub fn poll(&self, station: &StationId, now: u64) -> Vec<Command> {
        let mut inner = self.inner.lock();
        inner.expire(station, now);
        let Inner { commands, open, .. } = &mut *inner;
        let Some(ids) = open.get(station) else {
            return Vec::new();
        };
        let mut delivered = Vec::new();
        for id in ids {
            let cmd = commands.get_mut(id).expect("open ids are always stored");
            if cmd.state == CommandState::Pending {
                cmd.state = CommandState::Delivered;
                delivered.push(cmd.clone());
            }
        }
        delivered
    }

    pub fn ack(&self, station: &StationId, id: u64, now: u64) -> Result<Command, AckError> {
        let mut inner = self.inner.lock();
        inner.expire(station, now);
        let cmd = inner
            .commands
            .get_mut(&id)
            .filter(|c| &c.station == station)
            .ok_or(AckError::Unknown)?;
        if cmd.state != CommandState::Delivered {
            return Err(AckError::State(cmd.state));
        }
        cmd.state = CommandState::Acked;
        let acked = cmd.clone();
        if let Some(ids) = inner.open.get_mut(station) {
            ids.remove(&id);
        }
        Ok(acked)
    }

    /// Current view of a command, with expiry applied.
    pub fn get(&self, id: u64, now: u64) -> Option<Command> {
        let mut inner = self.inner.lock();
        let station = inner.commands.get(&id)?.station.clone();
        inner.expire(&station, now);
        inner.commands.get(&id).cloned()
    }

    /// Number of live `PENDING` commands per station.
    pub fn pending_counts(&self, now: u64) -> BTreeMap<StationId, usize> {
        let mut inner = self.inner.lock();
        inner.expire_all(now);
        inner
            .open
            .iter()
            .map(|(station, ids)| {
                let pending = ids
                    .iter()
                    .filter(|id| inner.commands[id].state == CommandState::Pending)
                    .count();
                (station.clone(), pending)
            })
            .collect()
    }
}
