//! Dispatcher commands and their delivery lifecycle.
//!
//! States only move forward: `PENDING -> DELIVERED -> ACKED`, with
//! `PENDING`/`DELIVERED -> EXPIRED` once the time-to-live runs out.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::{OperatingMode, PumpState, StationId, Temperature, CHANNELS};

pub const DEFAULT_TTL_SECS: u64 = 300;

/// Index of one of the eight sensor/pump channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Channel(u8);

impl Channel {
    pub fn new(index: usize) -> Option<Self> {
        (index < CHANNELS).then_some(Channel(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CommandKind {
    SetMode(OperatingMode),
    SetPump(Channel, PumpState),
    SetSetpoint(Channel, Temperature),
}

impl CommandKind {
    pub fn token(&self) -> &'static str {
        match self {
            CommandKind::SetMode(_) => "SETMODE",
            CommandKind::SetPump(..) => "SETPUMP",
            CommandKind::SetSetpoint(..) => "SETSETPOINT",
        }
    }

    /// Builds a kind from the enqueue query parameters.
    pub fn from_params(
        kind: Option<&str>,
        mode: Option<&str>,
        index: Option<&str>,
        value: Option<&str>,
    ) -> Result<Self, ParamError> {
        let channel = || -> Result<Channel, ParamError> {
            index
                .and_then(|i| {
                    if i.bytes().all(|b| b.is_ascii_digit()) {
                        i.parse::<usize>().ok()
                    } else {
                        None
                    }
                })
                .and_then(Channel::new)
                .ok_or(ParamError("index"))
        };
        match kind.ok_or(ParamError("kind"))? {
            "SETMODE" => {
                let mode = mode.and_then(|m| m.parse().ok()).ok_or(ParamError("mode"))?;
                Ok(CommandKind::SetMode(mode))
            }
            "SETPUMP" => {
                let channel = channel()?;
                let state = value.and_then(parse_pump).ok_or(ParamError("value"))?;
                Ok(CommandKind::SetPump(channel, state))
            }
            "SETSETPOINT" => {
                let channel = channel()?;
                let temp = value.and_then(|v| v.parse().ok()).ok_or(ParamError("value"))?;
                Ok(CommandKind::SetSetpoint(channel, temp))
            }
            _ => Err(ParamError("kind")),
        }
    }
}

fn parse_pump(value: &str) -> Option<PumpState> {
    match value {
        "1" | "on" | "ON" => Some(PumpState::On),
        "0" | "off" | "OFF" => Some(PumpState::Off),
        _ => None,
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandKind::SetMode(m) => write!(f, "SETMODE {m}"),
            CommandKind::SetPump(c, s) => write!(f, "SETPUMP {} {}", c.index(), s.as_bit()),
            CommandKind::SetSetpoint(c, t) => write!(f, "SETSETPOINT {} {t}", c.index()),
        }
    }
}

/// Names the offending request parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("invalid parameter {0}")]
pub struct ParamError(pub &'static str);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CommandState {
    Pending,
    Delivered,
    Acked,
    Expired,
}

impl CommandState {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandState::Pending => "PENDING",
            CommandState::Delivered => "DELIVERED",
            CommandState::Acked => "ACKED",
            CommandState::Expired => "EXPIRED",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, CommandState::Acked | CommandState::Expired)
    }

    pub fn can_become(self, next: CommandState) -> bool {
        use CommandState::*;
        matches!(
            (self, next),
            (Pending, Delivered) | (Delivered, Acked) | (Pending, Expired) | (Delivered, Expired)
        )
    }
}

impl fmt::Display for CommandState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "CommandJson", try_from = "CommandJson")]
pub struct Command {
    pub id: u64,
    pub station: StationId,
    pub kind: CommandKind,
    /// Unix seconds.
    pub created_at: u64,
    pub ttl: u64,
    pub state: CommandState,
}

impl Command {
    pub fn expires_at(&self) -> u64 {
        self.created_at.saturating_add(self.ttl)
    }

    pub fn is_expired_at(&self, now: u64) -> bool {
        now >= self.expires_at()
    }
}

/// Flat JSON shape of a command as served by the poll endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandJson {
    pub id: u64,
    pub station: StationId,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<OperatingMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    pub state: CommandState,
    pub created_at: u64,
    pub ttl: u64,
}

impl From<Command> for CommandJson {
    fn from(c: Command) -> Self {
        let (mode, index, value) = match c.kind {
            CommandKind::SetMode(m) => (Some(m), None, None),
            CommandKind::SetPump(ch, s) => (None, Some(ch.0), Some(s.as_bit().to_string())),
            CommandKind::SetSetpoint(ch, t) => (None, Some(ch.0), Some(t.to_string())),
        };
        CommandJson {
            id: c.id,
            station: c.station,
            kind: c.kind.token().to_owned(),
            mode,
            index,
            value,
            state: c.state,
            created_at: c.created_at,
            ttl: c.ttl,
        }
    }
}

impl TryFrom<CommandJson> for Command {
    type Error = ParamError;

    fn try_from(j: CommandJson) -> Result<Self, Self::Error> {
        let index = j.index.map(|i| i.to_string());
        let kind = CommandKind::from_params(
            Some(&j.kind),
            j.mode.map(|m| m.as_str()),
            index.as_deref(),
            j.value.as_deref(),
        )?;
        Ok(Command {
            id: j.id,
            station: j.station,
            kind,
            created_at: j.created_at,
            ttl: j.ttl,
            state: j.state,
        })
    }
}
