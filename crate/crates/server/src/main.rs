use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Parser;
use jobrec::bench::SyntheticWorld;
use jobrec::demo::DemoWorld;
use jobrec::service::{ConversationStore, FileStore, InMemoryStore, Service, ServiceConfig, SystemClock};

/// Serves the chat service over HTTP with server-sent events.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// World directory written by `bench gen`. The bundled demo world is used otherwise.
    #[arg(long)]
    world: Option<PathBuf>,
    /// Service configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for persisted conversations. Kept in memory otherwise.
    #[arg(long)]
    store: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    let config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ServiceConfig::from_toml(&text)?
        }
        None => ServiceConfig::default(),
    };
    let store: Arc<dyn ConversationStore> = match &args.store {
        Some(dir) => Arc::new(FileStore::new(dir)),
        None => Arc::new(InMemoryStore::new()),
    };
    let clock = Arc::new(SystemClock);
    let deps = match &args.world {
        Some(dir) => SyntheticWorld::load(dir)
            .with_context(|| format!("loading world from {}", dir.display()))?
            .service_deps(clock, store),
        None => DemoWorld::load().service_deps(clock, store),
    };
    let service = Arc::new(Service::new(deps, config)?);

    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, jobrec_server::router(service)).await?;
    Ok(())
}
