//! Two peers publish different models and pull each other's.

use edgefl::peer::{Peer, PeerConfig};
use edgefl::registry::RegistryServer;
use edgefl::weights::{Tensor, WeightSet};

fn constant(v: f32) -> WeightSet {
    WeightSet::new(
        vec![Tensor::new("W0", vec![3], vec![v; 3]).unwrap()],
        0,
        "",
        0,
    )
    .unwrap()
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = RegistryServer::start("127.0.0.1:0".parse()?).await?;
    let mut peers = Vec::new();
    for (name, value) in [("left", 1.0), ("right", 5.0)] {
        let mut peer = Peer::new(PeerConfig::new(name, vec![registry.url()]))?;
        peer.start().await?;
        peer.publish(constant(value))?;
        println!("{name} serving at {}", peer.address().unwrap());
        peers.push(peer);
    }

    for peer in &mut peers {
        let agg = peer.aggregate().await?;
        println!(
            "{} fetched {} model(s), average {:?}",
            peer.hostname(),
            agg.selected,
            agg.weights.entry("W0").unwrap().data()
        );
    }
    for peer in &mut peers {
        peer.unregister_peer().await?;
    }
    registry.shutdown().await;
    Ok(())
}
