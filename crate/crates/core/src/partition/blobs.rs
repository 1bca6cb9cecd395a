use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::PartitionError;
use crate::trainer::Dataset;

/// Gaussian class clusters with unit per-coordinate noise.
///
/// Class means sit on a randomly rotated regular simplex with pairwise
/// distance `separation` (exact when `feature_dim >= classes`; with fewer
/// dimensions the means are random directions of the same norm). Rows are
/// grouped by class, `per_class` rows each.
pub fn generate_blobs(
    classes: usize,
    per_class: usize,
    feature_dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset, PartitionError> {
    if classes == 0 || feature_dim == 0 {
        return Err(PartitionError::InvalidArgument(
            "classes and feature_dim must be positive".into(),
        ));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(PartitionError::InvalidArgument(format!(
            "separation {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = separation / std::f64::consts::SQRT_2;
    let means: Vec<Vec<f64>> = random_directions(classes, feature_dim, &mut rng)
        .into_iter()
        .map(|d| d.into_iter().map(|v| v * radius).collect())
        .collect();

    let mut features = Vec::with_capacity(classes * per_class * feature_dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for &m in mean {
                let noise: f64 = StandardNormal.sample(&mut rng);
                features.push((m + noise) as f32);
            }
            labels.push(c);
        }
    }
    Dataset::new(features, feature_dim, labels, classes)
        .map_err(|e| PartitionError::InvalidArgument(e.to_string()))
}

/// `count` unit vectors; mutually orthogonal while `count <= dim`.
fn random_directions(count: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if out.len() < dim {
            for q in &out {
                let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            out.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    out
}
