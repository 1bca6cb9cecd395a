//! Asynchronous run where two nodes join late and one leaves early.
//!
//! Nodes run in process here; build the binary and switch the launcher to
//! `Launcher::Process` to get one OS process per node.

use edgefl::experiment::{run_experiment, ExperimentConfig, Launcher};
use edgefl::metrics::EventKind;
use edgefl::partition::{BlobsSpec, DataSource, Scheme};
use edgefl::trainer::TrainConfig;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join("edgefl-async");
    let data = DataSource::Blobs(BlobsSpec {
        classes: 5,
        per_class: 200,
        feature_dim: 8,
        separation: 5.0,
        seed: 4,
    });
    let mut cfg = ExperimentConfig::new(4, 8, TrainConfig::new(16, 1, 0.1, 0), data, &out);
    cfg.alpha = 0.5;
    cfg.distribution = Scheme::Normal { spread: 0.3 };
    cfg.join_schedule = vec![(5, 3), (6, 3)];
    cfg.leave_schedule = vec![(2, 5)];
    cfg.launcher = Launcher::InProcess;
    cfg.base_port = 0;
    cfg.pace_ms = 100;

    let report = run_experiment(&cfg).await?;
    for o in &report.outcomes {
        let evals = report
            .events
            .iter()
            .filter(|e| e.node == o.hostname && e.kind == EventKind::Evaluate)
            .count();
        println!(
            "{} rounds [{}, {}) evaluated {evals}",
            o.hostname, o.start_round, o.end_round
        );
    }
    for (round, acc) in &report.report.summary.mean_accuracy_by_round {
        println!("round {round}: {acc:.3}");
    }
    Ok(())
}
