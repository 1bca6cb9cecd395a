//! Local model training: softmax regression and ReLU MLPs trained with plain
//! mini-batch SGD on mean cross-entropy.

mod dataset;
mod network;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::Dataset;
use network::Network;

use crate::weights::{Tensor, WeightSet, WeightsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("weights do not fit the model: {0}")]
    ShapeMismatch(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Weights(#[from] WeightsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SoftmaxLinear,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub feature_dim: usize,
    pub class_count: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    #[serde(default)]
    pub init_seed: u64,
}

impl ModelSpec {
    pub fn softmax(feature_dim: usize, class_count: usize, init_seed: u64) -> Self {
        Self {
            kind: ModelKind::SoftmaxLinear,
            feature_dim,
            class_count,
            hidden_dims: vec![],
            init_seed,
        }
    }

    pub fn mlp(
        feature_dim: usize,
        hidden_dims: Vec<usize>,
        class_count: usize,
        init_seed: u64,
    ) -> Self {
        Self {
            kind: ModelKind::Mlp,
            feature_dim,
            class_count,
            hidden_dims,
            init_seed,
        }
    }

    /// Layer widths from input to logits.
    fn widths(&self) -> Vec<usize> {
        let mut widths = vec![self.feature_dim];
        if self.kind == ModelKind::Mlp {
            widths.extend(&self.hidden_dims);
        }
        widths.push(self.class_count);
        widths
    }

    /// The `(name, shape)` sequence of this model's weight set.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        self.widths()
            .windows(2)
            .enumerate()
            .flat_map(|(i, w)| {
                [
                    (format!("W{i}"), vec![w[0], w[1]]),
                    (format!("b{i}"), vec![w[1]]),
                ]
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.feature_dim == 0 || self.class_count == 0 {
            return Err(TrainError::InvalidConfig(
                "model dimensions must be positive".into(),
            ));
        }
        match self.kind {
            ModelKind::SoftmaxLinear if !self.hidden_dims.is_empty() => Err(
                TrainError::InvalidConfig("softmax_linear takes no hidden layers".into()),
            ),
            ModelKind::Mlp if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) => Err(
                TrainError::InvalidConfig("mlp needs positive hidden widths".into()),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub local_epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub shuffle_seed: u64,
}

impl TrainConfig {
    pub fn new(
        batch_size: usize,
        local_epochs: usize,
        learning_rate: f64,
        shuffle_seed: u64,
    ) -> Self {
        Self {
            batch_size,
            local_epochs,
            learning_rate,
            shuffle_seed,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.local_epochs == 0 {
            return Err(TrainError::InvalidConfig(
                "batch size and epochs must be at least 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(TrainError::InvalidConfig(format!(
                "learning rate {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    /// The config a given node uses in a given round: same hyperparameters,
    /// shuffle seed mixed from `(shuffle_seed, node, round)`. Both the
    /// peer round loop and the centralized baseline derive seeds this way.
    pub fn for_node_round(&self, node: u64, round: u64) -> TrainConfig {
        let mut s = self.shuffle_seed;
        for v in [node, round] {
            s = splitmix64(s ^ splitmix64(v));
        }
        TrainConfig {
            shuffle_seed: s,
            ..self.clone()
        }
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Glorot-uniform weights, zero biases, version 0.
pub fn init_weights(spec: &ModelSpec) -> Result<WeightSet, TrainError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
    let mut entries = Vec::new();
    for (name, shape) in spec.layout() {
        let n: usize = shape.iter().product();
        let data = if let [fan_in, fan_out] = shape[..] {
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| rng.random_range(-s..s) as f32).collect()
        } else {
            vec![0.0; n]
        };
        entries.push(Tensor::new(name, shape, data)?);
    }
    Ok(WeightSet::new(entries, 0, "", 0)?)
}

/// Mean cross-entropy of `batch` under `w` and its exact gradient.
pub fn loss_and_grad(w: &WeightSet, batch: &Dataset) -> Result<(f64, WeightSet), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let net = Network::from_weights(w, batch.feature_dim(), batch.class_count())?;
    let rows: Vec<usize> = (0..batch.len()).collect();
    let (loss, grads) = net.loss_and_grad(batch, &rows);
    let grad = Network { layers: grads }.to_weights(w, w.version());
    Ok((loss, grad))
}

/// Mean cross-entropy without the gradient.
pub fn loss(w: &WeightSet, data: &Dataset) -> Result<f64, TrainError> {
    loss_and_grad(w, data).map(|(l, _)| l)
}

/// `E` epochs of mini-batch SGD over `data`.
///
/// Each epoch visits the rows in an order drawn from
/// `shuffle_seed + epoch`; the final short batch is kept. Parameters are
/// updated in `f64` and rounded to `f32` once at the end. The result has
/// `version = w.version + 1`.
pub fn node_training(
    w: &WeightSet,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<WeightSet, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut net = Network::from_weights(w, data.feature_dim(), data.class_count())?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.local_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed.wrapping_add(epoch as u64));
        order.sort_unstable();
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (_, grads) = net.loss_and_grad(data, batch);
            net.sgd_step(&grads, cfg.learning_rate);
        }
    }
    Ok(net.to_weights(w, w.version() + 1))
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn evaluate(w: &WeightSet, data: &Dataset) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let net = Network::from_weights(w, data.feature_dim(), data.class_count())?;
    let correct = (0..data.len())
        .filter(|&i| net.predict(data.row(i)) == data.label(i))
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// Argmax predictions, ties toward the lowest class index.
pub fn predict(w: &WeightSet, data: &Dataset) -> Result<Vec<usize>, TrainError> {
    let net = Network::from_weights(w, data.feature_dim(), data.class_count())?;
    Ok((0..data.len()).map(|i| net.predict(data.row(i))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(name: &str, shape: Vec<usize>, data: Vec<f32>) -> Tensor {
        Tensor::new(name, shape, data).unwrap()
    }

    fn zero_model(dim: usize, classes: usize) -> WeightSet {
        let spec = ModelSpec::softmax(dim, classes, 0);
        let entries = spec
            .layout()
            .into_iter()
            .map(|(n, s)| Tensor::zeros(n, s).unwrap())
            .collect();
        WeightSet::new(entries, 0, "", 0).unwrap()
    }

    #[test]
    fn softmax_layout_and_zero_bias() {
        let w = init_weights(&ModelSpec::softmax(4, 3, 7)).unwrap();
        let names: Vec<_> = w
            .entries()
            .iter()
            .map(|e| (e.name(), e.shape().to_vec()))
            .collect();
        assert_eq!(names, vec![("W0", vec![4, 3]), ("b0", vec![3])]);
        assert!(w.entry("b0").unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(w.version(), 0);
    }

    #[test]
    fn init_is_deterministic() {
        let spec = ModelSpec::mlp(5, vec![7, 3], 2, 99);
        assert_eq!(init_weights(&spec).unwrap(), init_weights(&spec).unwrap());
        let other = ModelSpec {
            init_seed: 100,
            ..spec.clone()
        };
        assert_ne!(init_weights(&spec).unwrap(), init_weights(&other).unwrap());
    }

    #[test]
    fn mlp_layout_and_glorot_bound() {
        let w = init_weights(&ModelSpec::mlp(4, vec![8], 3, 1)).unwrap();
        let layout: Vec<_> = w
            .entries()
            .iter()
            .map(|e| (e.name(), e.shape().to_vec()))
            .collect();
        assert_eq!(
            layout,
            vec![
                ("W0", vec![4, 8]),
                ("b0", vec![8]),
                ("W1", vec![8, 3]),
                ("b1", vec![3])
            ]
        );
        // each matrix is bounded by its own fan: 4+8 for W0, 8+3 for W1
        let bound0 = (6.0f64 / 12.0).sqrt();
        assert!(w
            .entry("W0")
            .unwrap()
            .data()
            .iter()
            .all(|&v| (v as f64).abs() < bound0));
        let bound1 = (6.0f64 / 11.0).sqrt();
        assert!(w
            .entry("W1")
            .unwrap()
            .data()
            .iter()
            .all(|&v| (v as f64).abs() < bound1));
    }

    #[test]
    fn invalid_specs() {
        assert!(init_weights(&ModelSpec::mlp(4, vec![], 3, 1)).is_err());
        assert!(init_weights(&ModelSpec::mlp(4, vec![0], 3, 1)).is_err());
        assert!(init_weights(&ModelSpec::softmax(0, 3, 1)).is_err());
    }

    #[test]
    fn zero_step_keeps_weights() {
        let w = init_weights(&ModelSpec::mlp(3, vec![4], 2, 5))
            .unwrap()
            .with_version(4);
        let data = Dataset::new(vec![0.5, -1.0, 2.0, 1.0, 0.0, -0.5], 3, vec![0, 1], 2).unwrap();
        let out = node_training(&w, &data, &TrainConfig::new(1, 3, 0.0, 0)).unwrap();
        assert_eq!(out.entries(), w.entries());
        assert_eq!(out.version(), 5);
    }

    #[test]
    fn single_sample_step_matches_hand_gradient() {
        // logits [0, ln 3] give softmax [1/4, 3/4]; x = [1, 2], label 0.
        let ln3 = 3f32.ln();
        let w = WeightSet::new(
            vec![
                tensor("W0", vec![2, 2], vec![0.0; 4]),
                tensor("b0", vec![2], vec![0.0, ln3]),
            ],
            0,
            "",
            0,
        )
        .unwrap();
        let data = Dataset::new(vec![1.0, 2.0], 2, vec![0], 2).unwrap();
        let out = node_training(&w, &data, &TrainConfig::new(1, 1, 0.1, 0)).unwrap();
        let expected_w = [0.075, -0.075, 0.15, -0.15];
        for (a, e) in out.entry("W0").unwrap().data().iter().zip(expected_w) {
            assert!((*a as f64 - e).abs() < 1e-6, "{a} vs {e}");
        }
        let b = out.entry("b0").unwrap().data();
        assert!((b[0] as f64 - 0.075).abs() < 1e-6);
        assert!((b[1] as f64 - (ln3 as f64 - 0.075)).abs() < 1e-6);
    }

    #[test]
    fn fresh_zero_model_loss_is_ln_classes() {
        let w = zero_model(4, 3);
        let data = Dataset::new(
            vec![3.0, -1.0, 0.5, 9.0, 1.0, 1.0, 1.0, 1.0],
            4,
            vec![2, 0],
            3,
        )
        .unwrap();
        let l = loss(&w, &data).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
        assert!((l - 1.0986).abs() < 1e-4);
    }

    #[test]
    fn bias_gradient_closed_form() {
        let w = zero_model(2, 2);
        let data = Dataset::new(vec![0.3, -0.7], 2, vec![0], 2).unwrap();
        let (_, g) = loss_and_grad(&w, &data).unwrap();
        assert_eq!(g.entry("b0").unwrap().data(), &[-0.5, 0.5]);
    }

    #[test]
    fn loss_ignores_sample_order() {
        let w = init_weights(&ModelSpec::mlp(2, vec![3], 3, 2)).unwrap();
        let data = Dataset::new(vec![0.1, 0.2, -1.0, 0.4, 2.0, -0.3], 2, vec![0, 2, 1], 3).unwrap();
        let rev = data.subset(&[2, 1, 0]);
        let (a, b) = (loss(&w, &data).unwrap(), loss(&w, &rev).unwrap());
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn tie_break_prefers_lowest_class() {
        let w = zero_model(3, 4);
        let data = Dataset::new(vec![1.0; 9], 3, vec![0, 0, 0], 4).unwrap();
        assert_eq!(evaluate(&w, &data).unwrap(), 1.0);
        let mixed = Dataset::new(vec![1.0; 9], 3, vec![0, 1, 1], 4).unwrap();
        assert!((evaluate(&w, &mixed).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn error_paths() {
        let w = zero_model(2, 2);
        let empty = Dataset::new(vec![], 2, vec![], 2).unwrap();
        assert_eq!(evaluate(&w, &empty), Err(TrainError::EmptyDataset));
        assert_eq!(
            loss_and_grad(&w, &empty).unwrap_err(),
            TrainError::EmptyDataset
        );
        let cfg = TrainConfig::new(4, 1, 0.1, 0);
        assert_eq!(
            node_training(&w, &empty, &cfg),
            Err(TrainError::EmptyDataset)
        );
        let wrong_dim = Dataset::new(vec![0.0; 3], 3, vec![0], 2).unwrap();
        assert!(matches!(
            node_training(&w, &wrong_dim, &cfg),
            Err(TrainError::ShapeMismatch(_))
        ));
        let wrong_classes = Dataset::new(vec![0.0; 2], 2, vec![0], 3).unwrap();
        assert!(matches!(
            evaluate(&w, &wrong_classes),
            Err(TrainError::ShapeMismatch(_))
        ));
        let data = Dataset::new(vec![0.0; 2], 2, vec![0], 2).unwrap();
        assert!(node_training(&w, &data, &TrainConfig::new(0, 1, 0.1, 0)).is_err());
        assert!(node_training(&w, &data, &TrainConfig::new(1, 1, -0.1, 0)).is_err());
    }

    #[test]
    fn derived_seeds_differ_per_node_and_round() {
        let base = TrainConfig::new(8, 1, 0.1, 42);
        let a = base.for_node_round(1, 0).shuffle_seed;
        assert_eq!(a, base.for_node_round(1, 0).shuffle_seed);
        assert_ne!(a, base.for_node_round(2, 0).shuffle_seed);
        assert_ne!(a, base.for_node_round(1, 1).shuffle_seed);
    }
}
