//! Prints class histograms for uniform and skewed partitions.

use edgefl::partition::{generate_blobs, partition_normal, partition_uniform, PartitionPlan};

fn show(title: &str, plan: &PartitionPlan) {
    println!("{title}");
    for (k, h) in plan.class_histogram.iter().enumerate() {
        println!("  node-{:<2} {:?}", k + 1, h);
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_blobs(10, 100, 4, 3.0, 0)?;
    show("uniform", &partition_uniform(data.labels(), 10, 5, 7)?);
    for spread in [0.1, 0.3, 1.0] {
        show(
            &format!("normal, spread {spread}"),
            &partition_normal(data.labels(), 10, 5, 7, spread)?,
        );
    }
    Ok(())
}
