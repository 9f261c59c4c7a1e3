//! Heat-station fleet simulator.
//!
//! Each station carries eight temperature channels and eight pumps driven by
//! a first-order plant model, reads a heat meter over a simulated M-Bus
//! link, pushes telemetry over a modelled transport link and polls for
//! dispatcher commands.

pub mod fleet;
pub mod http_client;
pub mod link;
pub mod meter;
pub mod plant;
pub mod station;

pub use fleet::{fleet_configs, run_fleet, run_station, Fleet, FleetSummary, RunClock};
pub use http_client::HttpTransport;
pub use link::{simulate_transfer, LinkProfile, ProfileError, Transfer};
pub use meter::{meter_exchange, LinkError, MeterLink};
pub use plant::{step_plant, ConfigError, PlantState, StationConfig};
pub use station::{PushOutcome, Station, StationStats};
