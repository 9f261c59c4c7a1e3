use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Parser;
use heatdispatch_core::SystemClock;
use heatdispatch_ingest::{serve, Service, ServiceConfig};
use log::info;

/// Heat-station telemetry ingestion and command service.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// key=value configuration file (listen, data_dir, command_ttl_s, auth_token)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `listen` from the config file
    #[arg(long)]
    listen: Option<String>,
    /// Overrides `data_dir` from the config file
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Overrides `command_ttl_s` from the config file
    #[arg(long)]
    command_ttl: Option<u64>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    let mut config = match &args.config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig::default(),
    };
    if let Some(listen) = args.listen {
        config.listen = listen;
    }
    if let Some(dir) = args.data_dir {
        config.data_dir = dir;
    }
    if let Some(ttl) = args.command_ttl {
        anyhow::ensure!(ttl > 0, "--command-ttl must be positive");
        config.command_ttl_s = ttl;
    }

    let service = Arc::new(
        Service::open(&config, Arc::new(SystemClock))
            .with_context(|| format!("opening store at {}", config.data_dir.display()))?,
    );
    let listener = tokio::net::TcpListener::bind(&config.listen)
        .await
        .with_context(|| format!("binding {}", config.listen))?;
    info!(
        "listening on {} with data in {}",
        listener.local_addr()?,
        config.data_dir.display()
    );

    tokio::select! {
        r = serve(listener, service) => r?,
        _ = tokio::signal::ctrl_c() => info!("shutting down"),
    }
    Ok(())
}
