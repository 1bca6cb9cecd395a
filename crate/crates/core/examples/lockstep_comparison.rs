//! Runs a lockstep experiment next to the baseline and prints both curves.

use edgefl::experiment::{run_comparison, ExperimentConfig, Launcher, Mode};
use edgefl::partition::{BlobsSpec, DataSource};
use edgefl::trainer::TrainConfig;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join("edgefl-lockstep");
    let data = DataSource::Blobs(BlobsSpec {
        classes: 4,
        per_class: 150,
        feature_dim: 8,
        separation: 4.0,
        seed: 2,
    });
    let mut cfg = ExperimentConfig::new(4, 6, TrainConfig::new(16, 1, 0.1, 0), data, &out);
    cfg.mode = Mode::Lockstep;
    cfg.launcher = Launcher::InProcess;
    cfg.base_port = 0;

    let cmp = run_comparison(&cfg).await?;
    print!("{}", cmp.to_csv());
    println!("artifacts in {}", out.display());
    Ok(())
}
