//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Runs under `cargo test` (or `cargo test -p heatdispatch-sim --test acceptance`).

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use heatdispatch_core::mbus::{parse_long_frame, MAX_USER_DATA};
use heatdispatch_core::wire::{EnqueuedJson, RecordJson};
use heatdispatch_core::{
    Clock, CommandState, MbusFrame, OperatingMode, PumpState, Reply, SimClock, StationId, StationRecord, Store,
    TelemetryFrame, Temperature, Transport, TransportError, CHANNELS,
};
use heatdispatch_ingest::{ServerHandle, Service};
use heatdispatch_sim::{
    fleet_configs, simulate_transfer, step_plant, Fleet, HttpTransport, LinkProfile, PlantState, RunClock,
    StationConfig, Transfer,
};
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPOCH: u64 = 1_700_000_000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("codec round trips", codec_round_trips),
        ("corruption detection", corruption_detection),
        ("end-to-end fidelity", end_to_end_fidelity),
        ("lossy-link integrity", lossy_link_integrity),
        ("command loop", command_loop),
        ("dial-up timing anchor", dialup_timing_anchor),
        ("plant convergence", plant_convergence),
        ("store crash recovery", store_crash_recovery),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, run) in criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(&p))));
        let ms = started.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("PASS  {name:<24} {detail} [{ms} ms]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<24} {detail} [{ms} ms]");
            }
        }
    }
    let _ = panic::take_hook();
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "non-string panic".into())
}

fn random_frame(rng: &mut ChaCha8Rng) -> TelemetryFrame {
    const ID_CHARS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_-";
    let len = rng.random_range(1..=32);
    let id: String = (0..len)
        .map(|_| ID_CHARS[rng.random_range(0..ID_CHARS.len())] as char)
        .collect();
    TelemetryFrame {
        station: StationId::new(id).unwrap(),
        seq: rng.random(),
        timestamp: rng.random(),
        temps: std::array::from_fn(|_| {
            Temperature::from_tenths(rng.random_range(Temperature::MIN_TENTHS..=Temperature::MAX_TENTHS) as i64)
                .unwrap()
        }),
        pumps: std::array::from_fn(|_| PumpState::from(rng.random_bool(0.5))),
        mode: OperatingMode::ALL[rng.random_range(0..3)],
    }
}

fn random_mbus(rng: &mut ChaCha8Rng) -> MbusFrame {
    let len = rng.random_range(0..=MAX_USER_DATA);
    let data: Vec<u8> = (0..len).map(|_| rng.random()).collect();
    MbusFrame::new(rng.random(), rng.random(), rng.random(), data).unwrap()
}

fn codec_round_trips() -> Outcome {
    const N: usize = 10_000;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = 0;
    for _ in 0..N {
        let f = random_frame(&mut rng);
        if TelemetryFrame::decode(&f.encode()).as_ref() != Ok(&f) {
            failures += 1;
        }
    }
    for _ in 0..N {
        let f = random_mbus(&mut rng);
        if parse_long_frame(&f.to_bytes()).as_ref() != Ok(&f) {
            failures += 1;
        }
    }
    let elapsed = started.elapsed();
    check!(failures == 0, "{failures} round-trip failures");
    check!(elapsed < Duration::from_secs(10), "took {elapsed:?}, limit 10 s");
    Ok(format!(
        "{N} telemetry + {N} M-Bus frames, 0 failures in {:.2} s",
        elapsed.as_secs_f64()
    ))
}

fn corruption_detection() -> Outcome {
    const FRAMES: usize = 100;
    const VALUES_PER_POSITION: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut tried, mut accepted) = (0u64, 0u64);
    for _ in 0..FRAMES {
        let bytes = random_mbus(&mut rng).to_bytes();
        for pos in 0..bytes.len() {
            for _ in 0..VALUES_PER_POSITION {
                let mut bad = bytes.clone();
                // any value except the original
                bad[pos] = bytes[pos].wrapping_add(rng.random_range(1..=255));
                tried += 1;
                if parse_long_frame(&bad).is_ok() {
                    accepted += 1;
                }
            }
        }
    }
    check!(accepted == 0, "{accepted} of {tried} corrupted frames accepted");
    Ok(format!(
        "{tried} single-byte substitutions over {FRAMES} frames, 0 accepted"
    ))
}

/// Forwards to an inner transport and keeps every frame the service stored.
struct Recording<T> {
    inner: T,
    stored: Mutex<BTreeMap<StationId, Vec<TelemetryFrame>>>,
}

impl<T> Recording<T> {
    fn new(inner: T) -> Self {
        Recording {
            inner,
            stored: Mutex::new(BTreeMap::new()),
        }
    }
}

impl<T: Transport> Transport for Recording<T> {
    fn get(&self, path_and_query: &str) -> Result<Reply, TransportError> {
        let reply = self.inner.get(path_and_query)?;
        if let Some(q) = path_and_query.strip_prefix("/zapis_danni?") {
            if reply.status == 200 && reply.body == "OK" {
                let data = form_urlencoded::parse(q.as_bytes())
                    .find(|(k, _)| k == "data")
                    .map(|(_, v)| v.into_owned())
                    .expect("data parameter");
                let frame = TelemetryFrame::decode(&data).expect("simulator sends valid frames");
                self.stored.lock().entry(frame.station.clone()).or_default().push(frame);
            }
        }
        Ok(reply)
    }
}

struct Live {
    server: ServerHandle,
    service: Arc<Service>,
    clock: Arc<SimClock>,
    _dir: tempfile::TempDir,
}

impl Live {
    fn start() -> Live {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(SimClock::starting_at_secs(EPOCH));
        let service = Arc::new(Service::new(Store::open(dir.path()).unwrap(), clock.clone(), 300));
        let server = ServerHandle::spawn(service.clone(), "127.0.0.1:0").unwrap();
        Live {
            server,
            service,
            clock,
            _dir: dir,
        }
    }

    fn http(&self) -> HttpTransport {
        HttpTransport::new(&self.server.base_url())
    }

    fn danni(&self, http: &HttpTransport, station: &StationId) -> Result<Vec<TelemetryFrame>, String> {
        let reply = http
            .get(&format!(
                "/danni?station={station}&from=0&to={}&limit=1000000",
                u64::MAX
            ))
            .map_err(|e| e.to_string())?;
        check!(
            reply.status == 200,
            "/danni for {station}: {} {}",
            reply.status,
            reply.body
        );
        let records: Vec<RecordJson> = serde_json::from_str(&reply.body).map_err(|e| e.to_string())?;
        Ok(records.into_iter().map(|r| StationRecord::from(r).frame).collect())
    }
}

fn fleet_base(link: LinkProfile) -> StationConfig {
    StationConfig {
        link,
        ..StationConfig::new(StationId::new("ST01").unwrap())
    }
}

fn end_to_end_fidelity() -> Outcome {
    let live = Live::start();
    let transport = Recording::new(live.http());
    let configs = fleet_configs(3, &fleet_base(LinkProfile::perfect()), 11);
    let ids: Vec<StationId> = configs.iter().map(|c| c.id.clone()).collect();
    Fleet::new(configs).map_err(|e| e.to_string())?.run(
        &transport,
        RunClock::Simulated(&live.clock),
        Duration::from_secs(60),
    );

    let http = live.http();
    let stored = transport.stored.lock();
    let mut total = 0;
    for id in &ids {
        let frames = live.danni(&http, id)?;
        let seqs: Vec<u32> = frames.iter().map(|f| f.seq).collect();
        check!(seqs == (1..=60).collect::<Vec<_>>(), "{id}: seqs {seqs:?}");
        check!(
            Some(&frames) == stored.get(id),
            "{id}: /danni differs from the frames pushed"
        );
        total += frames.len();
    }
    let store_total: usize = ids.iter().map(|id| live.service.store().record_count(id)).sum();
    check!(
        total == 180 && store_total == 180,
        "{total} records via /danni, {store_total} in store"
    );
    Ok("3 stations x 60 s: 180 records, seqs 1..60, /danni equals pushed frames".into())
}

fn lossy_link_integrity() -> Outcome {
    let live = Live::start();
    let link = LinkProfile::perfect()
        .with_drop_probability(0.5)
        .map_err(|e| e.to_string())?;
    let configs = fleet_configs(3, &fleet_base(link), 0x5EED);
    let ids: Vec<StationId> = configs.iter().map(|c| c.id.clone()).collect();
    let summary = Fleet::new(configs).map_err(|e| e.to_string())?.run(
        &live.http(),
        RunClock::Simulated(&live.clock),
        Duration::from_secs(60),
    );

    let http = live.http();
    let mut counts = Vec::new();
    for id in &ids {
        let seqs: Vec<u32> = live.danni(&http, id)?.iter().map(|f| f.seq).collect();
        check!(!seqs.is_empty(), "{id}: nothing stored");
        check!(
            seqs == (1..=seqs.len() as u32).collect::<Vec<_>>(),
            "{id}: seqs {seqs:?}"
        );
        // the log itself must not hold a seq twice either
        let log = fs::read_to_string(live.service.store().log_path(id)).map_err(|e| e.to_string())?;
        check!(
            log.lines().count() == seqs.len(),
            "{id}: {} log lines for {} seqs",
            log.lines().count(),
            seqs.len()
        );
        counts.push(seqs.len());
    }
    let dropped = summary.total().dropped;
    check!(dropped > 0, "no frames were dropped, the link is not lossy");
    Ok(format!(
        "stored {counts:?} gap-free, {dropped} drops retransmitted, no duplicates"
    ))
}

fn command_loop() -> Outcome {
    let live = Live::start();
    let http = live.http();
    let config = fleet_base(LinkProfile::perfect());
    let (push, poll) = (config.push_period, config.poll_period);
    let id = config.id.clone();
    let mut fleet = Fleet::new(vec![config]).map_err(|e| e.to_string())?;

    // enqueue right after a poll: the slowest case
    let t0 = poll;
    fleet.run_until(&http, &live.clock, t0);
    let enqueue = |q: &str| -> Result<u64, String> {
        let r = http
            .get(&format!("/commands/enqueue?station={id}&{q}"))
            .map_err(|e| e.to_string())?;
        check!(r.status == 200, "enqueue {q}: {} {}", r.status, r.body);
        Ok(serde_json::from_str::<EnqueuedJson>(&r.body)
            .map_err(|e| e.to_string())?
            .id)
    };
    let ids = [
        enqueue("kind=SETMODE&mode=MANUAL")?,
        enqueue("kind=SETPUMP&index=0&value=1")?,
    ];

    fleet.run_until(&http, &live.clock, t0 + poll + push);
    let latest = live.service.store().latest(&id).map_err(|e| e.to_string())?;
    check!(
        latest.frame.mode == OperatingMode::Manual && latest.frame.pumps[0] == PumpState::On,
        "newest frame shows {} with pump 0 {:?}",
        latest.frame.mode,
        latest.frame.pumps[0]
    );
    let now = live.clock.now_secs();
    for cmd in ids {
        let state = live.service.queue().get(cmd, now).map(|c| c.state);
        check!(state == Some(CommandState::Acked), "command {cmd} is {state:?}");
    }
    Ok(format!(
        "MANUAL + pump 0 on visible within {} s of enqueue, both commands ACKED",
        (poll + push).as_secs_f64()
    ))
}

fn dialup_timing_anchor() -> Outcome {
    let link = LinkProfile::dialup()
        .with_latency(0.0)
        .and_then(|l| l.with_drop_probability(0.0))
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let got = simulate_transfer(7000, &link, &mut rng);
    let bits: u32 = 7000 * 8;
    let expected = f64::from(bits) / 56_000.0;
    check!(got == Transfer::Delivered(expected) && expected == 1.0, "got {got:?}");
    Ok("7000 bytes over 56 kbit/s = 1.000 s exactly".into())
}

fn plant_convergence() -> Outcome {
    let config = StationConfig {
        rate_k: 0.05,
        initial_mode: OperatingMode::Manual,
        ..StationConfig::new(StationId::new("ST01").unwrap())
    };
    let mut state = PlantState::initial(&config);
    state.pumps = [PumpState::On; CHANNELS];
    check!(state.reported_temps()[0].tenths() == 150, "start is not 15.0");
    let mut worst = (0.0f64, 0);
    for step in 1..=100 {
        state = step_plant(&state, &config, 1.0);
        let exact = 55.0 - 40.0 * (-0.05 * step as f64).exp();
        for t in state.reported_temps() {
            let err = (t.celsius() - exact).abs();
            if err > worst.0 {
                worst = (err, step);
            }
        }
    }
    check!(worst.0 <= 0.5, "error {:.3} C at step {}", worst.0, worst.1);
    Ok(format!(
        "max |reported - closed form| = {:.3} C (step {}), limit 0.5 C",
        worst.0, worst.1
    ))
}

fn store_crash_recovery() -> Outcome {
    const RECORDS: u32 = 300;
    let src = tempfile::tempdir().map_err(|e| e.to_string())?;
    let station = StationId::new("ST01").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut appended = Vec::new();
    {
        let store = Store::open(src.path()).map_err(|e| e.to_string())?;
        for seq in 1..=RECORDS {
            let frame = TelemetryFrame {
                station: station.clone(),
                seq,
                ..random_frame(&mut rng)
            };
            let frame = TelemetryFrame {
                timestamp: EPOCH + seq as u64,
                ..frame
            };
            store
                .append(frame.clone(), EPOCH + seq as u64)
                .map_err(|e| e.to_string())?;
            appended.push(frame);
        }
    }
    let log = fs::read(src.path().join("ST01.log")).map_err(|e| e.to_string())?;
    // line end offsets, to know how many records each cut should keep
    let ends: Vec<usize> = log
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == b'\n')
        .map(|(i, _)| i + 1)
        .collect();

    let mut kept = Vec::new();
    for _ in 0..10 {
        let cut = rng.random_range(0..log.len());
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        fs::write(dir.path().join("ST01.log"), &log[..cut]).map_err(|e| e.to_string())?;
        let reopened = panic::catch_unwind(|| Store::open(dir.path()))
            .map_err(|p| format!("replay panicked at cut {cut}: {}", panic_message(&p)))?
            .map_err(|e| e.to_string())?;
        let expected = ends.iter().filter(|&&e| e <= cut).count();
        let got: Vec<TelemetryFrame> = if expected == 0 {
            Vec::new()
        } else {
            reopened
                .query_range(&station, 0, u64::MAX, usize::MAX)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|r| r.frame)
                .collect()
        };
        check!(
            got == appended[..expected],
            "cut at byte {cut}: recovered {} records, expected prefix of {expected}",
            got.len()
        );
        kept.push(expected);
    }
    Ok(format!("10 cuts, recovered prefixes of {kept:?} of {RECORDS} records"))
}
