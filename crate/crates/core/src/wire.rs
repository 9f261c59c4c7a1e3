//! JSON bodies served by the ingest service.

use serde::{Deserialize, Serialize};

use crate::command::CommandState;
use crate::store::StationRecord;
use crate::telemetry::{OperatingMode, PumpState, StationId, TelemetryFrame, Temperature, CHANNELS};

/// One stored record. Temperatures are decimal strings with one fractional digit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordJson {
    pub station: StationId,
    pub seq: u32,
    pub timestamp: u64,
    pub received_at: u64,
    pub temps: [Temperature; CHANNELS],
    pub pumps: [PumpState; CHANNELS],
    pub mode: OperatingMode,
}

impl From<&StationRecord> for RecordJson {
    fn from(r: &StationRecord) -> Self {
        let f = &r.frame;
        RecordJson {
            station: f.station.clone(),
            seq: f.seq,
            timestamp: f.timestamp,
            received_at: r.received_at,
            temps: f.temps,
            pumps: f.pumps,
            mode: f.mode,
        }
    }
}

impl From<RecordJson> for StationRecord {
    fn from(j: RecordJson) -> Self {
        StationRecord {
            frame: TelemetryFrame {
                station: j.station,
                seq: j.seq,
                timestamp: j.timestamp,
                temps: j.temps,
                pumps: j.pumps,
                mode: j.mode,
            },
            received_at: j.received_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationSummaryJson {
    pub station: StationId,
    pub last_received_at: u64,
    pub pending_commands: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnqueuedJson {
    pub id: u64,
    pub state: CommandState,
}
