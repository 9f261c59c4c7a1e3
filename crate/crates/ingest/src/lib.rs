//! Telemetry ingestion, query and command service for heat stations.
//!
//! Routes:
//!
//! | route | purpose |
//! |-------|---------|
//! | `GET /zapis_danni?data=<frame>` | record one telemetry string |
//! | `GET /danni?station=&from=&to=&limit=` | stored records as JSON |
//! | `GET /latest?station=` | newest record |
//! | `GET\|POST /commands/enqueue?station=&kind=&mode=&index=&value=[&ttl=]` | queue a command |
//! | `GET /commands/poll?station=` | deliver pending commands |
//! | `GET /commands/ack?station=&id=` | confirm a delivered command |
//! | `GET /stations` | fleet overview |

pub mod config;
pub mod http;
pub mod queue;
pub mod service;

pub use config::{ConfigError, ServiceConfig};
pub use http::{router, serve, ServerHandle};
pub use queue::{AckError, CommandQueue};
pub use service::{Method, Request, Response, Service};
