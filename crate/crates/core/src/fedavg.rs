//! Centralized federated averaging, run in-process with no network.
//!
//! Used as the reference trajectory for lockstep peer runs and as the
//! comparison arm in experiments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::partition::{node_split, PartitionPlan};
use crate::peer::fetch_count;
use crate::trainer::{
    evaluate, init_weights, node_training, Dataset, ModelSpec, TrainConfig, TrainError,
};
use crate::weights::{average, WeightSet};

/// How the server weights client updates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Equal weight per client, as the peers do.
    #[default]
    Uniform,
    /// Weight by local training-set size.
    #[serde(rename = "weighted_average")]
    SampleCount,
}

#[derive(Debug, Clone)]
pub struct FedAvgConfig {
    pub node_count: usize,
    /// Fraction of clients selected per round, in (0, 1].
    pub client_fraction: f64,
    pub rounds: u64,
    pub train: TrainConfig,
    pub model: ModelSpec,
    pub partition: PartitionPlan,
    /// Seeds the local train/test splits and client selection.
    pub seed: u64,
    pub weighting: Weighting,
}

impl FedAvgConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.train.validate()?;
        self.model.validate()?;
        if self.node_count == 0 || self.partition.node_count < self.node_count {
            return Err(TrainError::InvalidConfig(format!(
                "{} clients but the partition covers {}",
                self.node_count, self.partition.node_count
            )));
        }
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(TrainError::InvalidConfig(format!(
                "client fraction {}",
                self.client_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FedAvgRound {
    pub round: u64,
    /// 1-based ids of the clients trained this round.
    pub selected: Vec<usize>,
    /// Test accuracy per client, in id order. Selected clients are scored
    /// on their locally trained model, the rest on the broadcast model.
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct FedAvgTrace {
    /// Global model broadcast at the start of each round, plus the final
    /// one: `rounds + 1` entries.
    pub globals: Vec<WeightSet>,
    pub rounds: Vec<FedAvgRound>,
}

/// Runs `cfg.rounds` rounds of broadcast, local training and averaging.
pub fn run_fedavg(cfg: &FedAvgConfig, data: &Dataset) -> Result<FedAvgTrace, TrainError> {
    cfg.validate()?;
    let clients: Vec<(Dataset, Dataset)> = (1..=cfg.node_count)
        .map(|k| {
            let (train, test) =
                node_split(data, &cfg.partition, k, cfg.seed).expect("validated node count");
            if train.is_empty() {
                return Err(TrainError::EmptyDataset);
            }
            Ok((train, test))
        })
        .collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut global = init_weights(&cfg.model)?;
    let mut globals = vec![global.clone()];
    let mut rounds = Vec::with_capacity(cfg.rounds as usize);

    for round in 0..cfg.rounds {
        let mut selected: Vec<usize> = if cfg.client_fraction >= 1.0 {
            (1..=cfg.node_count).collect()
        } else {
            let m = fetch_count(cfg.node_count, cfg.client_fraction);
            rand::seq::index::sample(&mut rng, cfg.node_count, m)
                .into_iter()
                .map(|i| i + 1)
                .collect()
        };
        selected.sort_unstable();

        let mut accuracies = Vec::with_capacity(cfg.node_count);
        for (k, (_, test)) in clients.iter().enumerate() {
            if !selected.contains(&(k + 1)) {
                accuracies.push(evaluate(&global, test)?);
            } else {
                accuracies.push(f64::NAN);
            }
        }
        let mut updates = Vec::with_capacity(selected.len());
        for &k in &selected {
            let (train, test) = &clients[k - 1];
            let local = node_training(&global, train, &cfg.train.for_node_round(k as u64, round))?;
            accuracies[k - 1] = evaluate(&local, test)?;
            updates.push(local);
        }
        let weights: Option<Vec<f64>> = match cfg.weighting {
            Weighting::Uniform => None,
            Weighting::SampleCount => {
                let sizes: Vec<f64> = selected
                    .iter()
                    .map(|&k| clients[k - 1].0.len() as f64)
                    .collect();
                let total: f64 = sizes.iter().sum();
                Some(sizes.iter().map(|s| s / total).collect())
            }
        };
        global = average(&updates, weights.as_deref())?;
        globals.push(global.clone());
        let mean_accuracy = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
        rounds.push(FedAvgRound {
            round,
            selected,
            accuracies,
            mean_accuracy,
        });
    }
    Ok(FedAvgTrace { globals, rounds })
}
