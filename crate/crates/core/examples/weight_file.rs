//! Writes a model to a binary file and reads it back.
//!
//! ```text
//! cargo run --example weight_file -- /tmp/model.efl
//! ```

use edgefl::trainer::{init_weights, ModelSpec};
use edgefl::weights::{deserialize, serialize};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "model.efl".into());
    let w = init_weights(&ModelSpec::mlp(8, vec![16], 3, 42))?.stamped("node-1", 1_700_000_000_000);
    let bytes = serialize(&w);
    std::fs::write(&path, &bytes)?;
    println!(
        "wrote {} bytes ({} parameters) to {path}",
        bytes.len(),
        w.param_count()
    );

    let back = deserialize(&std::fs::read(&path)?)?;
    assert_eq!(back, w);
    for t in back.entries() {
        println!("  {:<3} {:?}", t.name(), t.shape());
    }
    Ok(())
}
