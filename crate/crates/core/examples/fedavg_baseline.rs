//! Centralized federated averaging with half the clients per round.

use edgefl::fedavg::{run_fedavg, FedAvgConfig, Weighting};
use edgefl::partition::{generate_blobs, partition_normal};
use edgefl::trainer::{ModelSpec, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_blobs(5, 200, 8, 4.0, 3)?;
    let cfg = FedAvgConfig {
        node_count: 8,
        client_fraction: 0.5,
        rounds: 10,
        train: TrainConfig::new(16, 1, 0.1, 0),
        model: ModelSpec::softmax(8, 5, 0),
        partition: partition_normal(data.labels(), 5, 8, 1, 0.3)?,
        seed: 1,
        weighting: Weighting::SampleCount,
    };
    let trace = run_fedavg(&cfg, &data)?;
    for r in &trace.rounds {
        println!(
            "round {:>2}: clients {:?} mean accuracy {:.3}",
            r.round, r.selected, r.mean_accuracy
        );
    }
    Ok(())
}
