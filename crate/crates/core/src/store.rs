//! Append-only telemetry store.
//!
//! Every station owns one log at `<data_dir>/<station>.log`. Each line is
//! `<received_at>|<encoded frame>` followed by `\n`. Indexes live in memory
//! and are rebuilt from the logs when the store is opened. On replay, a
//! trailing line without its newline is cut off the file and complete lines
//! that fail to decode are skipped with a warning.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{debug, warn};
use parking_lot::RwLock;
use thiserror::Error;

use crate::par::Execution;
use crate::telemetry::{DecodeError, StationId, TelemetryFrame};

const LOG_EXT: &str = "log";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StationRecord {
    pub frame: TelemetryFrame,
    /// Unix seconds from the server clock.
    pub received_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogLineError {
    #[error("missing '|' separator")]
    MissingSeparator,
    #[error("bad received_at")]
    ReceivedAt,
    #[error(transparent)]
    Frame(#[from] DecodeError),
}

impl StationRecord {
    pub fn to_log_line(&self) -> String {
        let mut line = format!("{}|", self.received_at);
        self.frame.encode_into(&mut line);
        line.push('\n');
        line
    }

    /// Parses one log line, without its trailing newline.
    pub fn from_log_line(line: &str) -> Result<Self, LogLineError> {
        let (received, frame) = line.split_once('|').ok_or(LogLineError::MissingSeparator)?;
        if received.is_empty() || !received.bytes().all(|b| b.is_ascii_digit()) {
            return Err(LogLineError::ReceivedAt);
        }
        let received_at = received.parse().map_err(|_| LogLineError::ReceivedAt)?;
        Ok(StationRecord {
            frame: TelemetryFrame::decode(frame)?,
            received_at,
        })
    }

    fn order_key(&self) -> (u64, u32) {
        (self.frame.timestamp, self.frame.seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppendOutcome {
    Appended,
    Duplicate,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure on {path}: {source}")]
    Storage { path: PathBuf, source: io::Error },
    #[error("unknown station {0}")]
    UnknownStation(StationId),
    #[error("invalid query: {0}")]
    InvalidQuery(&'static str),
}

impl StoreError {
    fn storage(path: &Path, source: io::Error) -> Self {
        StoreError::Storage {
            path: path.to_owned(),
            source,
        }
    }
}

struct StationLog {
    path: PathBuf,
    file: File,
    /// Bytes known to hold complete lines.
    len: u64,
    records: BTreeMap<(u64, u32), StationRecord>,
    seqs: HashSet<u32>,
    last_received_at: u64,
}

impl StationLog {
    fn insert(&mut self, record: StationRecord) {
        self.seqs.insert(record.frame.seq);
        self.last_received_at = self.last_received_at.max(record.received_at);
        self.records.insert(record.order_key(), record);
    }
}

/// Result of replaying one log file.
struct Replayed {
    station: StationId,
    log: Option<StationLog>,
}

pub struct Store {
    dir: PathBuf,
    stations: RwLock<BTreeMap<StationId, Arc<RwLock<StationLog>>>>,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Store::open_with(dir, Execution::default())
    }

    /// Opens the store, replaying station logs with the given execution mode.
    pub fn open_with(dir: impl Into<PathBuf>, exec: Execution) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| StoreError::storage(&dir, e))?;

        let mut logs = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| StoreError::storage(&dir, e))? {
            let entry = entry.map_err(|e| StoreError::storage(&dir, e))?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some(LOG_EXT) {
                continue;
            }
            match path.file_stem().and_then(|s| s.to_str()).map(StationId::new) {
                Some(Ok(station)) => logs.push((station, path)),
                _ => warn!("ignoring log with invalid station name: {}", path.display()),
            }
        }

        let replayed = exec.map(logs, |(station, path)| replay_log(station, path, exec));
        let mut stations = BTreeMap::new();
        for r in replayed {
            let r = r?;
            if let Some(log) = r.log {
                stations.insert(r.station, Arc::new(RwLock::new(log)));
            }
        }
        debug!("opened store at {} with {} stations", dir.display(), stations.len());
        Ok(Store {
            dir,
            stations: RwLock::new(stations),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn log_path(&self, station: &StationId) -> PathBuf {
        self.dir.join(format!("{station}.{LOG_EXT}"))
    }

    fn shard(&self, station: &StationId) -> Option<Arc<RwLock<StationLog>>> {
        self.stations.read().get(station).cloned()
    }

    fn shard_or_create(&self, station: &StationId) -> Result<Arc<RwLock<StationLog>>, StoreError> {
        if let Some(shard) = self.shard(station) {
            return Ok(shard);
        }
        let mut stations = self.stations.write();
        if let Some(shard) = stations.get(station) {
            return Ok(shard.clone());
        }
        let path = self.log_path(station);
        let file = open_append(&path)?;
        let len = file.metadata().map_err(|e| StoreError::storage(&path, e))?.len();
        let shard = Arc::new(RwLock::new(StationLog {
            path,
            file,
            len,
            records: BTreeMap::new(),
            seqs: HashSet::new(),
            last_received_at: 0,
        }));
        stations.insert(station.clone(), shard.clone());
        Ok(shard)
    }

    /// Appends `frame` unless a record with the same `(station, seq)` exists.
    pub fn append(&self, frame: TelemetryFrame, received_at: u64) -> Result<AppendOutcome, StoreError> {
        if let Some(shard) = self.shard(&frame.station) {
            if shard.read().seqs.contains(&frame.seq) {
                return Ok(AppendOutcome::Duplicate);
            }
        }
        let shard = self.shard_or_create(&frame.station)?;
        let mut log = shard.write();
        if log.seqs.contains(&frame.seq) {
            return Ok(AppendOutcome::Duplicate);
        }
        let record = StationRecord { frame, received_at };
        let line = record.to_log_line();
        if let Err(e) = log.file.write_all(line.as_bytes()) {
            // drop whatever part of the line made it out
            let _ = log.file.set_len(log.len);
            return Err(StoreError::storage(&log.path, e));
        }
        log.len += line.len() as u64;
        log.insert(record);
        Ok(AppendOutcome::Appended)
    }

    /// Records with `from <= timestamp <= to`, ordered by `(timestamp, seq)`.
    pub fn query_range(
        &self,
        station: &StationId,
        from: u64,
        to: u64,
        limit: usize,
    ) -> Result<Vec<StationRecord>, StoreError> {
        if from > to {
            return Err(StoreError::InvalidQuery("from > to"));
        }
        if limit == 0 {
            return Err(StoreError::InvalidQuery("limit must be positive"));
        }
        let shard = self.known(station)?;
        let log = shard.read();
        Ok(log
            .records
            .range((from, 0)..=(to, u32::MAX))
            .take(limit)
            .map(|(_, r)| r.clone())
            .collect())
    }

    pub fn latest(&self, station: &StationId) -> Result<StationRecord, StoreError> {
        let shard = self.known(station)?;
        let log = shard.read();
        log.records
            .values()
            .next_back()
            .cloned()
            .ok_or_else(|| StoreError::UnknownStation(station.clone()))
    }

    /// Every station with at least one record, sorted, with its last receive time.
    pub fn list_stations(&self) -> Vec<(StationId, u64)> {
        let stations = self.stations.read();
        stations
            .iter()
            .filter_map(|(id, shard)| {
                let log = shard.read();
                (!log.records.is_empty()).then(|| (id.clone(), log.last_received_at))
            })
            .collect()
    }

    pub fn record_count(&self, station: &StationId) -> usize {
        self.shard(station).map(|s| s.read().records.len()).unwrap_or(0)
    }

    fn known(&self, station: &StationId) -> Result<Arc<RwLock<StationLog>>, StoreError> {
        self.shard(station)
            .filter(|s| !s.read().records.is_empty())
            .ok_or_else(|| StoreError::UnknownStation(station.clone()))
    }
}

fn open_append(path: &Path) -> Result<File, StoreError> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| StoreError::storage(path, e))
}

/// Decodes complete log lines, skipping (and reporting) the ones that fail.
pub fn decode_log_lines(text: &str, exec: Execution) -> Vec<Result<StationRecord, LogLineError>> {
    let lines: Vec<&str> = text.lines().collect();
    exec.map_ref(&lines, |line| StationRecord::from_log_line(line))
}

fn replay_log(station: StationId, path: PathBuf, exec: Execution) -> Result<Replayed, StoreError> {
    let bytes = fs::read(&path).map_err(|e| StoreError::storage(&path, e))?;
    let complete = match bytes.iter().rposition(|&b| b == b'\n') {
        Some(i) => i + 1,
        None => 0,
    };
    if complete < bytes.len() {
        debug!(
            "truncating {} partial bytes at end of {}",
            bytes.len() - complete,
            path.display()
        );
        let file = OpenOptions::new()
            .write(true)
            .open(&path)
            .map_err(|e| StoreError::storage(&path, e))?;
        file.set_len(complete as u64)
            .map_err(|e| StoreError::storage(&path, e))?;
    }

    let text = String::from_utf8_lossy(&bytes[..complete]);
    let mut log = StationLog {
        file: open_append(&path)?,
        path,
        len: complete as u64,
        records: BTreeMap::new(),
        seqs: HashSet::new(),
        last_received_at: 0,
    };
    for (lineno, decoded) in decode_log_lines(&text, exec).into_iter().enumerate() {
        match decoded {
            Ok(record) if record.frame.station != station => {
                warn!(
                    "{}:{}: record for station {} skipped",
                    log.path.display(),
                    lineno + 1,
                    record.frame.station
                );
            }
            Ok(record) if log.seqs.contains(&record.frame.seq) => {
                warn!(
                    "{}:{}: duplicate seq {} skipped",
                    log.path.display(),
                    lineno + 1,
                    record.frame.seq
                );
            }
            Ok(record) => log.insert(record),
            Err(e) => warn!("{}:{}: undecodable line skipped: {e}", log.path.display(), lineno + 1),
        }
    }
    let log = (!log.records.is_empty()).then_some(log);
    Ok(Replayed { station, log })
}
