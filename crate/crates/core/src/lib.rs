//! Shared building blocks for the heat-supply dispatch platform.
//!
//! * [`telemetry`]: station identity, temperature and pump types and the
//!   text wire grammar stations use to report.
//! * [`mbus`]: M-Bus long-frame codec for the local heat-meter link.
//! * [`store`]: append-only per-station telemetry logs with dedupe and
//!   range queries.
//! * [`command`]: dispatcher commands and their lifecycle.
//! * [`wire`]: JSON bodies exchanged with the ingest service.

pub mod clock;
pub mod command;
pub mod mbus;
pub mod par;
pub mod store;
pub mod telemetry;
pub mod transport;
pub mod wire;

pub use clock::{Clock, SimClock, SystemClock};
pub use command::{Channel, Command, CommandKind, CommandState};
pub use mbus::{MbusFrame, MeterReading};
pub use par::Execution;
pub use store::{AppendOutcome, StationRecord, Store, StoreError};
pub use telemetry::{
    decode_frame, encode_frame, OperatingMode, PumpState, StationId, TelemetryFrame, Temperature, CHANNELS,
};
pub use transport::{Reply, Transport, TransportError};
