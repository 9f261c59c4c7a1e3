use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use heatdispatch_core::mbus::{describe, parse_hex, parse_long_frame};
use heatdispatch_core::{Clock, SimClock, StationId, SystemClock, Transport};
use heatdispatch_sim::{fleet_configs, ConfigError, Fleet, HttpTransport, LinkProfile, RunClock, StationConfig};

/// Heat-station fleet simulator.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run a fleet of stations against an ingest service.
    Simulate {
        /// Base URL of the ingest service, e.g. http://127.0.0.1:8080
        #[arg(long)]
        server: String,
        #[arg(long, default_value_t = 3)]
        stations: usize,
        /// Link preset: dialup, radio, gprs, broadband or perfect
        #[arg(long, default_value = "dialup")]
        profile: String,
        /// Seconds between telemetry pushes
        #[arg(long, default_value_t = 1.0)]
        push_period: f64,
        /// Seconds between command polls
        #[arg(long, default_value_t = 5.0)]
        poll_period: f64,
        /// Seconds to run
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run on a simulated clock as fast as the service answers
        #[arg(long)]
        fast_forward: bool,
        /// Sent as x-auth-token when the service requires one
        #[arg(long)]
        token: Option<String>,
    },
    /// Parse and annotate a hex-encoded M-Bus long frame.
    InspectFrame { hex: String },
    /// Send one telemetry string with a single GET /zapis_danni.
    SendOne {
        #[arg(long)]
        server: String,
        /// Encoded telemetry frame
        #[arg(long)]
        data: String,
        #[arg(long)]
        token: Option<String>,
    },
}

fn seconds(name: &'static str, value: f64) -> Result<Duration, String> {
    Duration::try_from_secs_f64(value)
        .map_err(|_| format!("--{name} must be a non-negative number of seconds, got {value}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Cmd::Simulate {
            server,
            stations,
            profile,
            push_period,
            poll_period,
            duration,
            seed,
            fast_forward,
            token,
        } => {
            let built = (|| -> Result<(Fleet, Duration), String> {
                let link = LinkProfile::preset(&profile).map_err(|e| e.to_string())?;
                let base = StationConfig {
                    push_period: seconds("push-period", push_period)?,
                    poll_period: seconds("poll-period", poll_period)?,
                    link,
                    ..StationConfig::new(StationId::new("ST01").expect("valid id"))
                };
                let duration = seconds("duration", duration)?;
                let fleet = Fleet::new(fleet_configs(stations, &base, seed)).map_err(|e: ConfigError| e.to_string())?;
                Ok((fleet, duration))
            })();
            let (mut fleet, duration) = match built {
                Ok(x) => x,
                Err(e) => {
                    eprintln!("configuration error: {e}");
                    return ExitCode::from(2);
                }
            };
            let transport = HttpTransport::new(&server).with_token(token);
            let summary = if fast_forward {
                let clock = SimClock::new(SystemClock.now_millis());
                fleet.run(&transport, RunClock::Simulated(&clock), duration)
            } else {
                fleet.run(&transport, RunClock::RealTime(&SystemClock), duration)
            };
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Cmd::InspectFrame { hex } => {
            let bytes = match parse_hex(&hex) {
                Ok(b) => b,
                Err(e) => {
                    eprintln!("invalid hex: {e}");
                    return ExitCode::from(2);
                }
            };
            print!("{}", describe(&bytes));
            if parse_long_frame(&bytes).is_ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Cmd::SendOne { server, data, token } => {
            let transport = HttpTransport::new(&server).with_token(token);
            let query: String = form_urlencoded::byte_serialize(data.as_bytes()).collect();
            match transport.get(&format!("/zapis_danni?data={query}")) {
                Ok(reply) => {
                    println!("{} {}", reply.status, reply.body);
                    if reply.status == 200 {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
