//! Starts a registry, registers a few hosts over HTTP and lists them.
//!
//! Pass `--serve` to keep it running for other processes.

use std::time::Duration;

use edgefl::registry::{RegistryClient, RegistryServer};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let server = RegistryServer::start("127.0.0.1:0".parse()?).await?;
    println!("registry at {}", server.url());

    let client = RegistryClient::new(&[server.url()], Duration::from_secs(1))?;
    for (i, host) in ["alpha", "beta", "gamma"].iter().enumerate() {
        client
            .register(host, &format!("127.0.0.1:{}", 9100 + i))
            .await?;
    }
    client.unregister("beta").await?;
    for p in client.peers().await? {
        println!("  {} -> {}", p.hostname, p.address);
    }

    if std::env::args().any(|a| a == "--serve") {
        tokio::signal::ctrl_c().await?;
    }
    server.shutdown().await;
    Ok(())
}
