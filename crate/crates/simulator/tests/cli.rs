use std::process::{Command, Output};
use std::sync::Arc;

use heatdispatch_core::mbus::{encode_meter_payload, CI_RESPONSE, C_RSP_UD};
use heatdispatch_core::{MbusFrame, MeterReading, StationId, Store, SystemClock, Temperature};
use heatdispatch_ingest::{ServerHandle, Service};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatdispatch-sim"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn inspect_frame_dumps_meter_reply() {
    let reading = MeterReading {
        energy_wh: 1234,
        flow_temp: Temperature::from_tenths(612).unwrap(),
        return_temp: Temperature::from_tenths(-15).unwrap(),
    };
    let bytes = MbusFrame::new(C_RSP_UD, 5, CI_RESPONSE, encode_meter_payload(&reading).to_vec())
        .unwrap()
        .to_bytes();
    let hex: Vec<String> = bytes.iter().map(|b| format!("{b:02x}")).collect();
    let out = sim(&["inspect-frame", &hex.join(" ")]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("RSP_UD"), "{text}");
    assert!(text.contains("energy=1234 Wh flow=61.2 C return=-1.5 C"), "{text}");

    let mut bad = bytes.clone();
    bad[6] ^= 0x40;
    let hex: String = bad.iter().map(|b| format!("{b:02X}")).collect();
    let out = sim(&["inspect-frame", &hex]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("checksum"), "{}", stdout(&out));

    assert_eq!(sim(&["inspect-frame", "zz"]).status.code(), Some(2));
}

#[test]
fn config_errors_exit_nonzero() {
    for args in [
        &["simulate", "--server", "http://127.0.0.1:1", "--profile", "isdn"][..],
        &["simulate", "--server", "http://127.0.0.1:1", "--stations", "0"],
        &["simulate", "--server", "http://127.0.0.1:1", "--push-period", "0"],
        &["simulate", "--server", "http://127.0.0.1:1", "--poll-period", "-1"],
    ] {
        let out = sim(args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn simulate_and_send_one_against_a_live_service() {
    let dir = tempfile::tempdir().unwrap();
    let service = Arc::new(Service::new(
        Store::open(dir.path()).unwrap(),
        Arc::new(SystemClock),
        300,
    ));
    let server = ServerHandle::spawn(service.clone(), "127.0.0.1:0").unwrap();
    let url = server.base_url();

    let out = sim(&[
        "simulate",
        "--server",
        &url,
        "--stations",
        "2",
        "--profile",
        "perfect",
        "--duration",
        "5",
        "--seed",
        "3",
        "--fast-forward",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("ST02"));
    for st in ["ST01", "ST02"] {
        assert_eq!(service.store().record_count(&StationId::new(st).unwrap()), 5);
    }

    let frame = "DEMO;1;1700000000;20.0,21.0,22.0,23.0,24.0,25.0,26.0,-27.5;1,0,1,0,1,0,1,0;MANUAL";
    let out = sim(&["send-one", "--server", &url, "--data", frame]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "200 OK");
    let out = sim(&["send-one", "--server", &url, "--data", frame]);
    assert_eq!(stdout(&out).trim(), "200 DUP");
    let out = sim(&["send-one", "--server", &url, "--data", "DEMO;2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).starts_with("400 ERR"), "{}", stdout(&out));
}
