use clap::Parser;
use tracing_subscriber::EnvFilter;

/// Serves the g2t HTTP/JSON API.
#[derive(Parser)]
#[command(name = "g2t-server", version)]
struct Args {
    /// Address to listen on.
    #[arg(long, env = "G2T_ADDR", default_value = "127.0.0.1:7878")]
    addr: String,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_env_filter(EnvFilter::from_default_env().add_directive("info".parse()?)).init();
    let args = Args::parse();
    let listener = tokio::net::TcpListener::bind(&args.addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    g2t_server::serve(listener).await?;
    Ok(())
}
