//! Averages three small models and shows the version rule.

use edgefl::weights::{average, Tensor, WeightSet};

fn model(version: u64, scale: f32) -> WeightSet {
    let w = Tensor::new(
        "W0",
        vec![2, 2],
        vec![1.0 * scale, 2.0 * scale, 3.0 * scale, 4.0 * scale],
    )
    .unwrap();
    let b = Tensor::new("b0", vec![2], vec![scale, -scale]).unwrap();
    WeightSet::new(vec![w, b], version, "demo", 0).unwrap()
}

fn main() {
    let inputs = [model(3, 1.0), model(5, 2.0), model(4, 3.0)];
    let avg = average(&inputs, None).unwrap();
    for t in avg.entries() {
        println!("{} {:?} = {:?}", t.name(), t.shape(), t.data());
    }
    println!("version {}", avg.version());

    let weighted = average(&inputs, Some(&[0.5, 0.25, 0.25])).unwrap();
    println!("weighted W0 = {:?}", weighted.entry("W0").unwrap().data());
}
