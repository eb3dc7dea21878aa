use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use gridwrangle::{AffectedMode, SessionConfig};
use gridwrangle_server::{router, AppState, ServerConfig};

#[derive(Debug, Parser)]
#[command(name = "gridwrangle-server", version, about = "HTTP API for gridwrangle sessions")]
struct Args {
    #[arg(long, env = "GRIDWRANGLE_BIND", default_value = "127.0.0.1")]
    bind: std::net::IpAddr,
    #[arg(long, env = "GRIDWRANGLE_PORT", default_value_t = 8080)]
    port: u16,
    /// Directory for session logs. Sessions are memory-only without it.
    #[arg(long, env = "GRIDWRANGLE_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Flush the log after this many updates.
    #[arg(long, env = "GRIDWRANGLE_FLUSH_EVERY", default_value_t = 3)]
    flush_every: usize,
    #[arg(long, env = "GRIDWRANGLE_OUTLIER_K", default_value_t = 2.0)]
    outlier_k: f64,
    #[arg(long, env = "GRIDWRANGLE_MIN_GROUP_SIZE", default_value_t = 2)]
    min_group_size: usize,
    #[arg(long, env = "GRIDWRANGLE_SAMPLE_K", default_value_t = 20)]
    sample_k: usize,
    /// Expand the affected set to connected components instead of one hop.
    #[arg(long, env = "GRIDWRANGLE_CONNECTED_COMPONENTS")]
    connected_components: bool,
    #[arg(long, env = "GRIDWRANGLE_MAX_UPLOAD_MB", default_value_t = 256)]
    max_upload_mb: usize,
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let session = SessionConfig {
        outlier_k: args.outlier_k,
        min_group_size: args.min_group_size,
        flush_every: args.flush_every,
        sample_k: args.sample_k,
        affected_mode: if args.connected_components {
            AffectedMode::ConnectedComponents
        } else {
            AffectedMode::OneHop
        },
        pairs: None,
    };
    if let Err(e) = session.validate() {
        eprintln!("gridwrangle-server: {e}");
        return ExitCode::from(2);
    }
    if let Some(dir) = &args.data_dir {
        if let Err(e) = std::fs::create_dir_all(dir) {
            eprintln!("gridwrangle-server: {}: {e}", dir.display());
            return ExitCode::from(2);
        }
    }
    let state = AppState::new(ServerConfig {
        data_dir: args.data_dir.clone(),
        session,
        max_upload_bytes: args.max_upload_mb << 20,
    });
    match state.recover_all().await {
        Ok(0) => {}
        Ok(n) => eprintln!("recovered {n} session(s)"),
        Err(e) => {
            eprintln!("gridwrangle-server: recovery failed: {e}");
            return ExitCode::from(2);
        }
    }
    let addr = SocketAddr::new(args.bind, args.port);
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("gridwrangle-server: bind {addr}: {e}");
            return ExitCode::from(2);
        }
    };
    eprintln!("listening on http://{addr}");
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await {
        eprintln!("gridwrangle-server: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
