//! Transport-independent request handling.
//!
//! [`Service::handle`] maps a method, path and query string to a status and
//! body. The axum adapter in [`crate::http`] and the in-process
//! [`Transport`] impl both go through it, so they answer identically.

use std::path::Path;
use std::sync::Arc;

use heatdispatch_core::command::{CommandKind, ParamError};
use heatdispatch_core::store::{AppendOutcome, Store, StoreError};
use heatdispatch_core::wire::{EnqueuedJson, RecordJson, StationSummaryJson};
use heatdispatch_core::{Clock, Execution, Reply, StationId, TelemetryFrame, Transport, TransportError};
use log::{error, info, warn};
use serde::Serialize;

use crate::config::ServiceConfig;
use crate::queue::{AckError, CommandQueue};

pub const DEFAULT_QUERY_LIMIT: usize = 1000;
pub const AUTH_HEADER: &str = "x-auth-token";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContentType {
    Text,
    Json,
}

impl ContentType {
    pub fn mime(self) -> &'static str {
        match self {
            ContentType::Text => "text/plain; charset=utf-8",
            ContentType::Json => "application/json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub content_type: ContentType,
    pub body: String,
}

impl Response {
    fn text(status: u16, body: impl Into<String>) -> Self {
        Response {
            status,
            content_type: ContentType::Text,
            body: body.into(),
        }
    }

    fn ok_text(body: &str) -> Self {
        Response::text(200, body)
    }

    fn error(status: u16, what: impl std::fmt::Display) -> Self {
        Response::text(status, format!("ERR {what}"))
    }

    fn json<T: Serialize>(value: &T) -> Self {
        match serde_json::to_string(value) {
            Ok(body) => Response {
                status: 200,
                content_type: ContentType::Json,
                body,
            },
            Err(e) => {
                error!("serializing response: {e}");
                Response::error(500, "INTERNAL")
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Request<'a> {
    pub method: Method,
    pub path: &'a str,
    /// Raw query string, without the leading `?`.
    pub query: &'a str,
    /// Form-encoded body parameters (POST only).
    pub body: &'a str,
    pub auth_token: Option<&'a str>,
}

impl<'a> Request<'a> {
    pub fn get(path_and_query: &'a str) -> Self {
        let (path, query) = path_and_query.split_once('?').unwrap_or((path_and_query, ""));
        Request {
            method: Method::Get,
            path,
            query,
            body: "",
            auth_token: None,
        }
    }
}

/// Decoded query parameters; the first occurrence of a name wins.
struct Params(Vec<(String, String)>);

impl Params {
    fn parse(query: &str, body: &str) -> Self {
        let pairs = form_urlencoded::parse(query.as_bytes())
            .chain(form_urlencoded::parse(body.as_bytes()))
            .map(|(k, v)| (k.into_owned(), v.into_owned()))
            .collect();
        Params(pairs)
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    fn station(&self) -> Result<StationId, Response> {
        self.get("station")
            .and_then(|s| StationId::new(s).ok())
            .ok_or_else(|| Response::error(400, "station"))
    }

    /// Optional unsigned integer parameter.
    fn number<T: std::str::FromStr>(&self, name: &str, default: T) -> Result<T, Response> {
        match self.get(name) {
            None => Ok(default),
            Some(v) if !v.is_empty() && v.bytes().all(|b| b.is_ascii_digit()) => {
                v.parse().map_err(|_| Response::error(400, name))
            }
            Some(_) => Err(Response::error(400, name)),
        }
    }
}

pub struct Service {
    store: Store,
    queue: CommandQueue,
    clock: Arc<dyn Clock>,
    command_ttl_s: u64,
    auth_token: Option<String>,
}

impl Service {
    pub fn new(store: Store, clock: Arc<dyn Clock>, command_ttl_s: u64) -> Self {
        Service {
            store,
            queue: CommandQueue::new(),
            clock,
            command_ttl_s,
            auth_token: None,
        }
    }

    pub fn open(config: &ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        Self::open_at(&config.data_dir, config, clock)
    }

    fn open_at(dir: &Path, config: &ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let store = Store::open_with(dir, Execution::default())?;
        let mut service = Service::new(store, clock, config.command_ttl_s);
        service.auth_token = config.auth_token.clone();
        Ok(service)
    }

    pub fn with_auth_token(mut self, token: Option<String>) -> Self {
        self.auth_token = token;
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn queue(&self) -> &CommandQueue {
        &self.queue
    }

    pub fn now(&self) -> u64 {
        self.clock.now_secs()
    }

    pub fn handle(&self, req: &Request<'_>) -> Response {
        if let Some(expected) = &self.auth_token {
            let params = Params::parse(req.query, req.body);
            let given = req.auth_token.or_else(|| params.get("token"));
            if given != Some(expected.as_str()) {
                return Response::error(401, "AUTH");
            }
        }

        let params = Params::parse(req.query, if req.method == Method::Post { req.body } else { "" });
        let get_only = |f: &dyn Fn(&Params) -> Response| match req.method {
            Method::Get => f(&params),
            _ => Response::error(405, "METHOD"),
        };
        match req.path {
            "/zapis_danni" => get_only(&|p| self.handle_record(p.get("data"))),
            "/danni" => get_only(&|p| self.handle_query(p)),
            "/latest" => get_only(&|p| self.handle_latest(p)),
            "/commands/enqueue" => match req.method {
                Method::Get | Method::Post => self.handle_enqueue_command(&params),
                Method::Other => Response::error(405, "METHOD"),
            },
            "/commands/poll" => get_only(&|p| self.handle_poll_commands(p)),
            "/commands/ack" => get_only(&|p| self.handle_ack(p)),
            "/stations" => get_only(&|_| self.handle_stations()),
            _ => Response::error(404, "NOT_FOUND"),
        }
    }

    /// Records one telemetry string.
    pub fn handle_record(&self, data: Option<&str>) -> Response {
        let Some(data) = data else {
            return Response::error(400, "data");
        };
        let frame = match TelemetryFrame::decode(data) {
            Ok(f) => f,
            Err(e) => {
                warn!("rejected telemetry {data:?}: {e}");
                return Response::error(400, e.field());
            }
        };
        match self.store.append(frame, self.now()) {
            Ok(AppendOutcome::Appended) => Response::ok_text("OK"),
            Ok(AppendOutcome::Duplicate) => Response::ok_text("DUP"),
            Err(e) => {
                error!("append failed: {e}");
                Response::error(500, "STORAGE")
            }
        }
    }

    fn handle_query(&self, p: &Params) -> Response {
        let run = || -> Result<Response, Response> {
            let station = p.station()?;
            let from = p.number("from", 0u64)?;
            let to = p.number("to", u64::MAX)?;
            let limit = p.number("limit", DEFAULT_QUERY_LIMIT)?;
            if limit == 0 {
                return Err(Response::error(400, "limit"));
            }
            if from > to {
                return Err(Response::error(400, "range"));
            }
            let records = self.store.query_range(&station, from, to, limit).map_err(store_error)?;
            let body: Vec<RecordJson> = records.iter().map(RecordJson::from).collect();
            Ok(Response::json(&body))
        };
        run().unwrap_or_else(|r| r)
    }

    fn handle_latest(&self, p: &Params) -> Response {
        let run = || -> Result<Response, Response> {
            let station = p.station()?;
            let record = self.store.latest(&station).map_err(store_error)?;
            Ok(Response::json(&RecordJson::from(&record)))
        };
        run().unwrap_or_else(|r| r)
    }

    fn handle_enqueue_command(&self, p: &Params) -> Response {
        let run = || -> Result<Response, Response> {
            let station = p.station()?;
            let kind = CommandKind::from_params(p.get("kind"), p.get("mode"), p.get("index"), p.get("value"))
                .map_err(|ParamError(field)| Response::error(400, field))?;
            let ttl = p.number("ttl", self.command_ttl_s)?;
            if ttl == 0 {
                return Err(Response::error(400, "ttl"));
            }
            let cmd = self.queue.enqueue(station, kind, self.now(), ttl);
            info!("enqueued command {} for {}: {}", cmd.id, cmd.station, cmd.kind);
            Ok(Response::json(&EnqueuedJson {
                id: cmd.id,
                state: cmd.state,
            }))
        };
        run().unwrap_or_else(|r| r)
    }

    fn handle_poll_commands(&self, p: &Params) -> Response {
        match p.station() {
            Ok(station) => Response::json(&self.queue.poll(&station, self.now())),
            Err(r) => r,
        }
    }

    fn handle_ack(&self, p: &Params) -> Response {
        let run = || -> Result<Response, Response> {
            let station = p.station()?;
            let id = match p.get("id") {
                Some(_) => p.number("id", 0u64)?,
                None => return Err(Response::error(400, "id")),
            };
            match self.queue.ack(&station, id, self.now()) {
                Ok(_) => Ok(Response::ok_text("OK")),
                Err(AckError::Unknown) => Err(Response::error(404, "UNKNOWN_COMMAND")),
                Err(AckError::State(state)) => Err(Response::error(409, format!("STATE {state}"))),
            }
        };
        run().unwrap_or_else(|r| r)
    }

    fn handle_stations(&self) -> Response {
        let pending = self.queue.pending_counts(self.now());
        let body: Vec<StationSummaryJson> = self
            .store
            .list_stations()
            .into_iter()
            .map(|(station, last_received_at)| StationSummaryJson {
                pending_commands: pending.get(&station).copied().unwrap_or(0),
                station,
                last_received_at,
            })
            .collect();
        Response::json(&body)
    }
}

fn store_error(e: StoreError) -> Response {
    match e {
        StoreError::UnknownStation(_) => Response::error(404, "UNKNOWN_STATION"),
        StoreError::InvalidQuery(_) => Response::error(400, "range"),
        StoreError::Storage { .. } => {
            error!("{e}");
            Response::error(500, "STORAGE")
        }
    }
}

/// In-process transport: requests skip the network but take the same code path.
impl Transport for Service {
    fn get(&self, path_and_query: &str) -> Result<Reply, TransportError> {
        let resp = self.handle(&Request::get(path_and_query));
        Ok(Reply {
            status: resp.status,
            body: resp.body,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use heatdispatch_core::command::{Command, CommandState};
    use heatdispatch_core::SimClock;

    const FRAME: &str = "ST01;1;1700000000;20.0,20.0,20.0,20.0,20.0,20.0,20.0,20.0;0,0,0,0,0,0,0,0;AUTO";

    fn service() -> (Service, Arc<SimClock>, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(SimClock::starting_at_secs(1_700_000_000));
        let svc = Service::new(Store::open(dir.path()).unwrap(), clock.clone(), 300);
        (svc, clock, dir)
    }

    fn get(svc: &Service, uri: &str) -> Response {
        svc.handle(&Request::get(uri))
    }

    fn enc(s: &str) -> String {
        form_urlencoded::byte_serialize(s.as_bytes()).collect()
    }

    #[test]
    fn record_then_duplicate() {
        let (svc, _, _dir) = service();
        let uri = format!("/zapis_danni?data={}", enc(FRAME));
        assert_eq!(get(&svc, &uri), Response::ok_text("OK"));
        assert_eq!(get(&svc, &uri), Response::ok_text("DUP"));
        assert_eq!(svc.store().record_count(&StationId::new("ST01").unwrap()), 1);
    }

    #[test]
    fn record_errors_name_the_field() {
        let (svc, _, _dir) = service();
        let seven = "ST01;1;1700000000;20.0,20.0,20.0,20.0,20.0,20.0,20.0;0,0,0,0,0,0,0,0;AUTO";
        assert_eq!(
            get(&svc, &format!("/zapis_danni?data={}", enc(seven))),
            Response::error(400, "temps")
        );
        assert_eq!(get(&svc, "/zapis_danni"), Response::error(400, "data"));
        assert_eq!(get(&svc, "/zapis_danni?data=%FF%FE"), Response::error(400, "seq"));
    }

    #[test]
    fn query_parameters() {
        let (svc, _, _dir) = service();
        get(&svc, &format!("/zapis_danni?data={}", enc(FRAME)));
        let ok = get(&svc, "/danni?station=ST01");
        assert_eq!(ok.status, 200);
        assert_eq!(ok.content_type, ContentType::Json);
        let recs: Vec<RecordJson> = serde_json::from_str(&ok.body).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].received_at, 1_700_000_000);

        assert_eq!(get(&svc, "/danni?station=NOPE").status, 404);
        assert_eq!(
            get(&svc, "/danni?station=ST01&from=5&to=4"),
            Response::error(400, "range")
        );
        assert_eq!(get(&svc, "/danni?station=ST01&from=x"), Response::error(400, "from"));
        assert_eq!(get(&svc, "/danni?station=ST01&to=-1"), Response::error(400, "to"));
        assert_eq!(get(&svc, "/danni?station=ST01&limit=0"), Response::error(400, "limit"));
        assert_eq!(
            get(&svc, "/danni?station=ST01&limit=99999999999999999999999"),
            Response::error(400, "limit")
        );
        assert_eq!(get(&svc, "/danni"), Response::error(400, "station"));
        assert_eq!(get(&svc, "/danni?station=a%20b"), Response::error(400, "station"));
    }

    #[test]
    fn latest_and_unknown() {
        let (svc, _, _dir) = service();
        assert_eq!(
            get(&svc, "/latest?station=ST01"),
            Response::error(404, "UNKNOWN_STATION")
        );
        get(&svc, &format!("/zapis_danni?data={}", enc(FRAME)));
        let latest: RecordJson = serde_json::from_str(&get(&svc, "/latest?station=ST01").body).unwrap();
        assert_eq!(latest.seq, 1);
    }

    #[test]
    fn command_round_trip() {
        let (svc, clock, _dir) = service();
        let r = get(&svc, "/commands/enqueue?station=ST01&kind=SETMODE&mode=MANUAL");
        assert_eq!(r.body, r#"{"id":1,"state":"PENDING"}"#);
        assert_eq!(
            get(&svc, "/commands/enqueue?station=ST01&kind=SETPUMP&index=9&value=1"),
            Response::error(400, "index")
        );
        let r2 = get(&svc, "/commands/enqueue?station=ST01&kind=SETPUMP&index=0&value=1");
        let e2: EnqueuedJson = serde_json::from_str(&r2.body).unwrap();
        assert_eq!(e2.id, 2);

        clock.advance_by(1000);
        let polled: Vec<Command> = serde_json::from_str(&get(&svc, "/commands/poll?station=ST01").body).unwrap();
        assert_eq!(polled.iter().map(|c| c.id).collect::<Vec<_>>(), [1, 2]);
        assert!(polled.iter().all(|c| c.state == CommandState::Delivered));
        assert_eq!(get(&svc, "/commands/poll?station=ST01").body, "[]");

        assert_eq!(get(&svc, "/commands/ack?station=ST01&id=1"), Response::ok_text("OK"));
        assert_eq!(
            get(&svc, "/commands/ack?station=ST01&id=1"),
            Response::error(409, "STATE ACKED")
        );
        assert_eq!(
            get(&svc, "/commands/ack?station=ST01&id=77"),
            Response::error(404, "UNKNOWN_COMMAND")
        );
        assert_eq!(get(&svc, "/commands/ack?station=ST01&id=x"), Response::error(400, "id"));
        assert_eq!(get(&svc, "/commands/ack?station=ST01"), Response::error(400, "id"));
    }

    #[test]
    fn ttl_parameter_and_expiry() {
        let (svc, clock, _dir) = service();
        get(&svc, "/commands/enqueue?station=ST01&kind=SETMODE&mode=OFF&ttl=1");
        clock.advance_by(2000);
        assert_eq!(get(&svc, "/commands/poll?station=ST01").body, "[]");
        assert_eq!(svc.queue().get(1, svc.now()).unwrap().state, CommandState::Expired);
        assert_eq!(
            get(&svc, "/commands/enqueue?station=ST01&kind=SETMODE&mode=OFF&ttl=0"),
            Response::error(400, "ttl")
        );
    }

    #[test]
    fn enqueue_accepts_post_body() {
        let (svc, _, _dir) = service();
        let r = svc.handle(&Request {
            method: Method::Post,
            path: "/commands/enqueue",
            query: "",
            body: "station=ST01&kind=SETSETPOINT&index=2&value=60.0",
            auth_token: None,
        });
        assert_eq!(r.status, 200, "{}", r.body);
        let post_poll = svc.handle(&Request {
            method: Method::Post,
            ..Request::get("/commands/poll?station=ST01")
        });
        assert_eq!(post_poll, Response::error(405, "METHOD"));
    }

    #[test]
    fn stations_overview() {
        let (svc, _, _dir) = service();
        assert_eq!(get(&svc, "/stations").body, "[]");
        let other = FRAME.replace("ST01", "ST02");
        get(&svc, &format!("/zapis_danni?data={}", enc(&other)));
        get(&svc, &format!("/zapis_danni?data={}", enc(FRAME)));
        get(&svc, "/commands/enqueue?station=ST02&kind=SETMODE&mode=OFF");
        get(&svc, "/commands/enqueue?station=ST02&kind=SETMODE&mode=AUTO");
        let list: Vec<StationSummaryJson> = serde_json::from_str(&get(&svc, "/stations").body).unwrap();
        assert_eq!(list.len(), 2);
        assert_eq!(list[0].station.as_str(), "ST01");
        assert_eq!(list[0].pending_commands, 0);
        assert_eq!(list[1].pending_commands, 2);
    }

    #[test]
    fn unknown_route_and_auth() {
        let (svc, _, _dir) = service();
        assert_eq!(get(&svc, "/zapis_danni.php"), Response::error(404, "NOT_FOUND"));

        let svc = svc.with_auth_token(Some("s3cret".into()));
        assert_eq!(get(&svc, "/stations"), Response::error(401, "AUTH"));
        assert_eq!(get(&svc, "/stations?token=s3cret").status, 200);
        let with_header = Request {
            auth_token: Some("s3cret"),
            ..Request::get("/stations")
        };
        assert_eq!(svc.handle(&with_header).status, 200);
    }
}
