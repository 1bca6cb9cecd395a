//! Trains a softmax classifier and a small MLP on synthetic blobs.

use edgefl::partition::{generate_blobs, local_split};
use edgefl::trainer::{evaluate, init_weights, loss, node_training, ModelSpec, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_blobs(4, 250, 10, 4.0, 1)?;
    let rows: Vec<usize> = (0..data.len()).collect();
    let (train, test) = local_split(&data, &rows, 0.2, 9);

    for spec in [
        ModelSpec::softmax(10, 4, 0),
        ModelSpec::mlp(10, vec![32], 4, 0),
    ] {
        let mut w = init_weights(&spec)?;
        println!("{:?}", spec.kind);
        for epoch in 0..5u64 {
            w = node_training(&w, &train, &TrainConfig::new(32, 1, 0.1, epoch))?;
            println!(
                "  epoch {epoch}: loss {:.4}, test accuracy {:.3}",
                loss(&w, &train)?,
                evaluate(&w, &test)?
            );
        }
    }
    Ok(())
}
