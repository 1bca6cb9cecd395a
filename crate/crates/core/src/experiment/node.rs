//! Everything one node needs to run, whether as a task in the orchestrator
//! or as an `edgefl peer` child process.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::metrics::EventLog;
use crate::partition::{node_split, DataSource, PartitionPlan};
use crate::peer::{LocalData, Peer, PeerConfig, PeerError, RunOptions, RunReport};
use crate::trainer::{Dataset, ModelKind, ModelSpec, TrainConfig};

/// Model choice without the data-dependent dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelChoice {
    #[serde(default = "default_kind")]
    pub kind: ModelKind,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    #[serde(default)]
    pub init_seed: u64,
}

fn default_kind() -> ModelKind {
    ModelKind::SoftmaxLinear
}

impl Default for ModelChoice {
    fn default() -> Self {
        Self {
            kind: ModelKind::SoftmaxLinear,
            hidden_dims: vec![],
            init_seed: 0,
        }
    }
}

impl ModelChoice {
    pub fn spec_for(&self, data: &Dataset) -> ModelSpec {
        ModelSpec {
            kind: self.kind,
            feature_dim: data.feature_dim(),
            class_count: data.class_count(),
            hidden_dims: self.hidden_dims.clone(),
            init_seed: self.init_seed,
        }
    }
}

/// Loads node `node_id`'s train/test split.
pub fn local_data(
    data: &Dataset,
    plan: &PartitionPlan,
    node_id: usize,
    split_seed: u64,
) -> Result<LocalData, ExperimentError> {
    let (train, test) = node_split(data, plan, node_id, split_seed).ok_or_else(|| {
        ExperimentError::InvalidConfig(format!("partition has no node {node_id}"))
    })?;
    Ok(LocalData { train, test })
}

/// A fully specified peer launch, serializable to `edgefl peer` arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLaunch {
    pub peer: PeerConfig,
    pub node_id: usize,
    pub data: DataSource,
    pub partition_file: PathBuf,
    pub split_seed: u64,
    pub model: ModelChoice,
    pub train: TrainConfig,
    pub start_round: u64,
    /// Rounds to run, counted from `start_round`.
    pub rounds: u64,
    pub pace_ms: u64,
    pub pace_origin_ms: Option<u64>,
    pub metrics_out: Option<PathBuf>,
}

impl NodeLaunch {
    /// Command-line arguments for the `peer` subcommand.
    pub fn to_args(&self) -> Vec<String> {
        let p = &self.peer;
        let mut args = vec![
            "peer".to_string(),
            format!("--hostname={}", p.hostname),
            format!("--port={}", p.serve_port),
            format!("--registry={}", p.registries.join(",")),
            format!("--alpha={}", p.alpha),
            format!("--epochs={}", self.train.local_epochs),
            format!("--batch-size={}", self.train.batch_size),
            format!("--lr={}", self.train.learning_rate),
            format!("--shuffle-seed={}", self.train.shuffle_seed),
            format!("--rounds={}", self.rounds),
            format!("--start-round={}", self.start_round),
            format!("--data={}", self.data),
            format!("--partition-file={}", self.partition_file.display()),
            format!("--node-id={}", self.node_id),
            format!("--seed={}", self.split_seed),
            format!("--rng-seed={}", p.rng_seed),
            format!("--aggregation={}", p.aggregation),
            format!("--fetch-timeout-ms={}", p.fetch_timeout_ms),
            format!("--link-delay-ms={}", p.link_delay_ms),
            format!("--pace-ms={}", self.pace_ms),
            format!("--init-seed={}", self.model.init_seed),
        ];
        if self.model.kind == ModelKind::Mlp {
            args.push("--model=mlp".into());
            let hidden: Vec<String> = self
                .model
                .hidden_dims
                .iter()
                .map(ToString::to_string)
                .collect();
            args.push(format!("--hidden={}", hidden.join(",")));
        }
        if let Some(o) = self.pace_origin_ms {
            args.push(format!("--pace-origin-ms={o}"));
        }
        if let Some(m) = &self.metrics_out {
            args.push(format!("--metrics-out={}", m.display()));
        }
        if !p.include_self {
            args.push("--no-include-self".into());
        }
        if p.stay_resident {
            args.push("--stay-resident".into());
        }
        args
    }

    /// Loads data and partition from disk and runs the node to completion.
    /// With `stay_resident` the returned peer is still serving.
    pub async fn run(self) -> Result<(Peer, RunReport), ExperimentError> {
        let data = self.data.load()?;
        let plan = PartitionPlan::load(&self.partition_file)?;
        let local = local_data(&data, &plan, self.node_id, self.split_seed)?;
        let model = self.model.spec_for(&data);
        let events = match &self.metrics_out {
            Some(path) => EventLog::with_file(path)?,
            None => EventLog::in_memory(),
        };
        let mut opts = RunOptions::new(self.node_id as u64, self.rounds);
        opts.start_round = self.start_round;
        opts.pace = Duration::from_millis(self.pace_ms);
        opts.pace_origin_ms = self.pace_origin_ms;
        let job = NodeJob {
            peer: self.peer,
            local: Arc::new(local),
            model,
            train: self.train,
            opts,
            events,
        };
        let mut peer = job
            .start()
            .await
            .map_err(|e| ExperimentError::LaunchFailure {
                node: job.peer.hostname.clone(),
                reason: e.to_string(),
            })?;
        let report = job.run(&mut peer).await?;
        Ok((peer, report))
    }
}

/// In-memory form of a node launch.
pub(crate) struct NodeJob {
    pub peer: PeerConfig,
    pub local: Arc<LocalData>,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub opts: RunOptions,
    pub events: EventLog,
}

impl NodeJob {
    pub async fn start(&self) -> Result<Peer, PeerError> {
        let mut peer = Peer::new(self.peer.clone())?.with_event_log(self.events.clone());
        peer.start().await?;
        Ok(peer)
    }

    /// Runs the rounds, then leaves the network.
    pub async fn run(&self, peer: &mut Peer) -> Result<RunReport, PeerError> {
        let report = peer
            .run_rounds(&self.local, &self.model, &self.train, &self.opts)
            .await?;
        peer.unregister_peer().await?;
        Ok(report)
    }
}
