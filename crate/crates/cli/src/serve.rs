use std::io::Write;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use emomap_core::clock::SystemClock;
use emomap_core::storage::FileStore;
use emomap_core::{Platform, PlatformConfig};
use tracing_subscriber::EnvFilter;

use crate::direct::StoreLock;

pub fn run(store: &Path, bind: SocketAddr, config: PlatformConfig) -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    let _lock = StoreLock::acquire(store)?;
    let file_store = FileStore::open(store)?;
    let platform = Platform::open(Arc::new(file_store), Arc::new(SystemClock), config)?;
    tracing::info!(store = %store.display(), experiments = platform.experiments().len(), "store loaded");

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .with_context(|| format!("cannot bind {bind}"))?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        std::io::stdout().flush()?;
        emomap_server::serve(listener, Arc::new(platform), emomap_server::shutdown_signal()).await?;
        tracing::info!("shut down");
        Ok(())
    })
}
