//! Experiment orchestration: one registry, K peers (tasks or child
//! processes), join and leave schedules, event collection and reporting.

mod node;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::process::{Child, Command};
use tokio::task::JoinSet;

use node::NodeJob;
pub use node::{local_data, ModelChoice, NodeLaunch};

use crate::clock;
use crate::fedavg::{run_fedavg, FedAvgConfig, FedAvgTrace, Weighting};
use crate::metrics::{
    build_report, classification_report, EventKind, EventLog, MetricsError, Report, RoundEvent,
};
use crate::partition::{
    partition_normal, partition_uniform, DataSource, PartitionError, PartitionPlan, Scheme,
};
use crate::peer::{Peer, PeerConfig, PeerError, Phase, RoundBarrier, RunOptions, RunReport};
use crate::registry::RegistryServer;
use crate::trainer::{Dataset, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("failed to launch {node}: {reason}")]
    LaunchFailure { node: String, reason: String },
    #[error("experiment exceeded {0} s")]
    Timeout(u64),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Peer(#[from] PeerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Peers free-run at their own pace.
    #[default]
    Async,
    /// In-process peers synchronised by a per-round barrier.
    Lockstep,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Launcher {
    /// One `edgefl peer` child process per node.
    #[default]
    Process,
    /// Peers as tasks inside the orchestrator.
    InProcess,
}

fn default_alpha() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_base_port() -> u16 {
    7000
}
fn default_timeout() -> u64 {
    600
}
fn default_aggregation() -> String {
    "uniform_average".into()
}
fn default_fetch_timeout() -> u64 {
    2000
}
fn default_distribution() -> Scheme {
    Scheme::Uniform
}

/// A complete experiment description, loadable from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Incumbent nodes, ids `1..=nodes`.
    pub nodes: usize,
    pub rounds: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub model: ModelChoice,
    pub train: TrainConfig,
    pub dataset: DataSource,
    #[serde(default = "default_distribution")]
    pub distribution: Scheme,
    /// `(node_id, round)`: new node ids continuing after `nodes`, first
    /// round they take part in.
    #[serde(default)]
    pub join_schedule: Vec<(usize, u64)>,
    /// `(node_id, round)`: the node's last round is `round - 1`.
    #[serde(default)]
    pub leave_schedule: Vec<(usize, u64)>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_true")]
    pub include_self: bool,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Fixed spacing between round starts; 0 free-runs.
    #[serde(default)]
    pub pace_ms: u64,
    #[serde(default)]
    pub link_delay_ms: u64,
    /// Registry port; node k serves on `base_port + k`. 0 uses ephemeral
    /// ports throughout.
    #[serde(default = "default_base_port")]
    pub base_port: u16,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Ignored in lockstep mode, which always runs in process.
    #[serde(default)]
    pub launcher: Launcher,
    /// `edgefl` executable for process launches; defaults to the current
    /// executable.
    #[serde(default)]
    pub peer_binary: Option<PathBuf>,
    #[serde(default)]
    pub stay_resident: bool,
    #[serde(default = "default_aggregation")]
    pub aggregation: String,
    #[serde(default = "default_fetch_timeout")]
    pub fetch_timeout_ms: u64,
}

impl ExperimentConfig {
    /// An async, uniform-partition experiment with default settings for
    /// everything not given.
    pub fn new(
        nodes: usize,
        rounds: u64,
        train: TrainConfig,
        dataset: DataSource,
        out_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            nodes,
            rounds,
            alpha: default_alpha(),
            model: ModelChoice::default(),
            train,
            dataset,
            distribution: Scheme::Uniform,
            join_schedule: Vec::new(),
            leave_schedule: Vec::new(),
            mode: Mode::Async,
            include_self: true,
            seed: 0,
            out_dir: out_dir.into(),
            pace_ms: 0,
            link_delay_ms: 0,
            base_port: default_base_port(),
            timeout_secs: default_timeout(),
            launcher: Launcher::Process,
            peer_binary: None,
            stay_resident: false,
            aggregation: default_aggregation(),
            fetch_timeout_ms: default_fetch_timeout(),
        }
    }

    /// Parses `.json` files as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| ExperimentError::Parse(e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| ExperimentError::Parse(e.to_string()))
        }
    }

    /// Total node count including joiners.
    pub fn total_nodes(&self) -> usize {
        self.nodes + self.join_schedule.len()
    }

    /// `[start, end)` round range of each node, indexed by `id - 1`.
    pub fn schedule(&self) -> Vec<(u64, u64)> {
        let mut s = vec![(0, self.rounds); self.total_nodes()];
        for &(id, r) in &self.join_schedule {
            s[id - 1].0 = r;
        }
        for &(id, r) in &self.leave_schedule {
            s[id - 1].1 = r;
        }
        s
    }

    pub fn hostname(id: usize) -> String {
        format!("node-{id}")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidConfig(m));
        if self.nodes == 0 {
            return bad("at least one node is required".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must be in (0, 1], got {}", self.alpha));
        }
        self.train.validate()?;
        let mut joiners: Vec<usize> = self.join_schedule.iter().map(|&(id, _)| id).collect();
        joiners.sort_unstable();
        let expected: Vec<usize> = (self.nodes + 1..=self.total_nodes()).collect();
        if joiners != expected {
            return bad(format!(
                "joining node ids must be {expected:?}, got {joiners:?}"
            ));
        }
        for &(id, r) in &self.join_schedule {
            if r >= self.rounds {
                return bad(format!("node {id} joins at round {r}, past the last round"));
            }
        }
        let mut leavers = BTreeSet::new();
        for &(id, r) in &self.leave_schedule {
            if id == 0 || id > self.total_nodes() || !leavers.insert(id) {
                return bad(format!("bad or duplicate leaving node id {id}"));
            }
            if r > self.rounds {
                return bad(format!(
                    "node {id} leaves at round {r}, past the last round"
                ));
            }
        }
        for (i, &(s, e)) in self.schedule().iter().enumerate() {
            if e <= s {
                return bad(format!("node {} leaves before running any round", i + 1));
            }
        }
        if self.schedule().iter().all(|&(s, _)| s > 0) {
            return bad("no node runs round 0".into());
        }
        if self.base_port != 0
            && usize::from(self.base_port) + self.total_nodes() > usize::from(u16::MAX)
        {
            return bad("port range overflows".into());
        }
        Ok(())
    }

    pub fn plan(&self, data: &Dataset) -> Result<PartitionPlan, PartitionError> {
        let k = self.total_nodes();
        match self.distribution {
            Scheme::Uniform => partition_uniform(data.labels(), data.class_count(), k, self.seed),
            Scheme::Normal { spread } => {
                partition_normal(data.labels(), data.class_count(), k, self.seed, spread)
            }
        }
    }

    fn port_for(&self, id: usize) -> u16 {
        if self.base_port == 0 {
            0
        } else {
            self.base_port + id as u16
        }
    }

    fn peer_config(&self, id: usize, registry: &str) -> PeerConfig {
        let mut p = PeerConfig::new(Self::hostname(id), vec![registry.to_string()]);
        p.serve_port = self.port_for(id);
        p.alpha = self.alpha;
        p.aggregation = self.aggregation.clone();
        p.include_self = self.include_self;
        p.fetch_timeout_ms = self.fetch_timeout_ms;
        p.rng_seed = self.seed;
        p.stay_resident = self.stay_resident;
        p.link_delay_ms = self.link_delay_ms;
        p
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeOutcome {
    pub node_id: usize,
    pub hostname: String,
    pub start_round: u64,
    pub end_round: u64,
    pub completed: bool,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub out_dir: PathBuf,
    pub outcomes: Vec<NodeOutcome>,
    /// Merged events of every node, ordered by timestamp.
    pub events: Vec<RoundEvent>,
    pub report: Report,
    /// Per-node round summaries; filled for in-process runs only.
    pub trajectories: BTreeMap<usize, RunReport>,
}

impl ExperimentReport {
    pub fn all_completed(&self) -> bool {
        self.outcomes.iter().all(|o| o.completed)
    }

    /// Mean test accuracy of all nodes evaluated in `round`.
    pub fn mean_accuracy(&self, round: u64) -> Option<f64> {
        self.report
            .summary
            .mean_accuracy_by_round
            .get(&round)
            .copied()
    }

    /// Accuracy of one node in one round.
    pub fn accuracy(&self, round: u64, node_id: usize) -> Option<f64> {
        let host = ExperimentConfig::hostname(node_id);
        self.events
            .iter()
            .find(|e| e.kind == EventKind::Evaluate && e.round == round && e.node == host)
            .and_then(|e| e.accuracy)
    }
}

fn events_path(out_dir: &Path, id: usize) -> PathBuf {
    out_dir
        .join("events")
        .join(format!("{}.jsonl", ExperimentConfig::hostname(id)))
}

/// Reads complete lines of a file still being appended to.
fn read_partial_events(path: &Path) -> Vec<RoundEvent> {
    let Ok(file) = std::fs::File::open(path) else {
        return Vec::new();
    };
    BufReader::new(file)
        .lines()
        .map_while(Result::ok)
        .filter_map(|l| serde_json::from_str(&l).ok())
        .collect()
}

/// Highest round each node has deployed a model for, from its event file.
fn deployed_rounds(
    out_dir: &Path,
    ids: impl Iterator<Item = usize>,
) -> BTreeMap<usize, Option<u64>> {
    ids.map(|id| {
        let last = read_partial_events(&events_path(out_dir, id))
            .iter()
            .filter(|e| e.kind == EventKind::Deploy)
            .map(|e| e.round)
            .max();
        (id, last)
    })
    .collect()
}

/// Whether a node starting at `round` may launch: every node active in the
/// previous round has deployed for it (or finished).
fn join_ready(out_dir: &Path, schedule: &[(u64, u64)], round: u64) -> bool {
    let prev = round - 1;
    let waiting_on: Vec<usize> = (1..=schedule.len())
        .filter(|&id| schedule[id - 1].0 <= prev && prev < schedule[id - 1].1)
        .collect();
    deployed_rounds(out_dir, waiting_on.into_iter())
        .values()
        .all(|r| r.is_some_and(|r| r >= prev))
}

struct Prepared {
    data: Arc<Dataset>,
    plan: PartitionPlan,
    registry: RegistryServer,
    pace_origin: Option<u64>,
}

async fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, ExperimentError> {
    cfg.validate()?;
    std::fs::create_dir_all(cfg.out_dir.join("events"))?;
    for id in 1..=cfg.total_nodes() {
        let p = events_path(&cfg.out_dir, id);
        if p.exists() {
            std::fs::remove_file(p)?;
        }
    }
    std::fs::write(
        cfg.out_dir.join("config.json"),
        serde_json::to_string_pretty(cfg).expect("config serializes"),
    )?;
    let data = cfg.dataset.load()?;
    let plan = cfg.plan(&data)?;
    plan.save(&cfg.out_dir.join("partition.json"))?;
    let bind: SocketAddr = ([127, 0, 0, 1], cfg.base_port).into();
    let registry =
        RegistryServer::start(bind)
            .await
            .map_err(|e| ExperimentError::LaunchFailure {
                node: "registry".into(),
                reason: e.to_string(),
            })?;
    // a short lead so that processes are up before round 0's slot
    let pace_origin = (cfg.pace_ms > 0).then(|| clock::monotonic_ms() + 200);
    Ok(Prepared {
        data: Arc::new(data),
        plan,
        registry,
        pace_origin,
    })
}

/// Runs the experiment and writes events and reports into `cfg.out_dir`.
pub async fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let prepared = prepare(cfg).await?;
    let cap = Duration::from_secs(cfg.timeout_secs);
    let run = async {
        match (cfg.mode, cfg.launcher) {
            (Mode::Async, Launcher::Process) => run_processes(cfg, &prepared).await,
            _ => run_in_process(cfg, &prepared).await,
        }
    };
    let result = tokio::time::timeout(cap, run).await;
    prepared.registry.shutdown().await;
    let (outcomes, trajectories) =
        result.map_err(|_| ExperimentError::Timeout(cfg.timeout_secs))??;

    let mut events = Vec::new();
    for id in 1..=cfg.total_nodes() {
        events.extend(read_partial_events(&events_path(&cfg.out_dir, id)));
    }
    events.sort_by_key(|e| e.timestamp_ms);
    crate::metrics::write_events(&cfg.out_dir.join("events.jsonl"), &events)?;
    let report = build_report(&events);
    report.write(&cfg.out_dir)?;
    std::fs::write(
        cfg.out_dir.join("nodes.json"),
        serde_json::to_string_pretty(&outcomes).expect("serializes"),
    )?;
    Ok(ExperimentReport {
        out_dir: cfg.out_dir.clone(),
        outcomes,
        events,
        report,
        trajectories,
    })
}

type RunResult = (Vec<NodeOutcome>, BTreeMap<usize, RunReport>);

fn outcome(cfg: &ExperimentConfig, id: usize, error: Option<String>) -> NodeOutcome {
    let (start_round, end_round) = cfg.schedule()[id - 1];
    NodeOutcome {
        node_id: id,
        hostname: ExperimentConfig::hostname(id),
        start_round,
        end_round,
        completed: error.is_none(),
        error,
    }
}

/// The flag is set when the node failed before it started serving.
type NodeResult = Result<(Peer, RunReport), (bool, PeerError)>;

async fn run_in_process(
    cfg: &ExperimentConfig,
    prep: &Prepared,
) -> Result<RunResult, ExperimentError> {
    let schedule = cfg.schedule();
    let lockstep = cfg.mode == Mode::Lockstep;
    let barrier = lockstep.then(|| Arc::new(RoundBarrier::new(schedule.clone())));
    let registry_url = prep.registry.url();
    let mut set: JoinSet<(usize, NodeResult)> = JoinSet::new();

    for id in 1..=cfg.total_nodes() {
        let (start, end) = schedule[id - 1];
        let mut opts = RunOptions::new(id as u64, end - start);
        opts.start_round = start;
        opts.pace = Duration::from_millis(cfg.pace_ms);
        opts.pace_origin_ms = prep.pace_origin;
        opts.barrier = barrier.clone();
        opts.leave_after = end < cfg.rounds;
        opts.final_aggregation = lockstep && end == cfg.rounds;
        let job = NodeJob {
            peer: cfg.peer_config(id, &registry_url),
            local: Arc::new(local_data(&prep.data, &prep.plan, id, cfg.seed)?),
            model: cfg.model.spec_for(&prep.data),
            train: cfg.train.clone(),
            opts,
            events: EventLog::with_file(&events_path(&cfg.out_dir, id))?,
        };
        let out_dir = cfg.out_dir.clone();
        let sched = schedule.clone();
        set.spawn(async move {
            if start > 0 {
                match &job.opts.barrier {
                    Some(b) => b.wait_complete(start - 1, Phase::Aggregated).await,
                    None => {
                        while !join_ready(&out_dir, &sched, start) {
                            tokio::time::sleep(Duration::from_millis(20)).await;
                        }
                    }
                }
            }
            let mut peer = match job.start().await {
                Ok(p) => p,
                Err(e) => return (id, Err((true, e))),
            };
            if start > 0 {
                if let Some(b) = &job.opts.barrier {
                    b.arrive(start - 1, Phase::Published).await;
                }
            }
            match job.run(&mut peer).await {
                Ok(r) => (id, Ok((peer, r))),
                Err(e) => (id, Err((false, e))),
            }
        });
    }

    let mut peers = Vec::new();
    let mut errors = BTreeMap::new();
    let mut trajectories = BTreeMap::new();
    while let Some(joined) = set.join_next().await {
        let (id, result) = joined
            .map_err(|e| ExperimentError::InvalidConfig(format!("node task panicked: {e}")))?;
        match result {
            Ok((peer, report)) => {
                peers.push(peer);
                trajectories.insert(id, report);
            }
            Err((true, e)) => {
                set.abort_all();
                return Err(ExperimentError::LaunchFailure {
                    node: ExperimentConfig::hostname(id),
                    reason: e.to_string(),
                });
            }
            Err((false, e)) => {
                log::error!("node {id} failed: {e}");
                errors.insert(id, e.to_string());
            }
        }
    }
    for mut p in peers {
        p.shutdown().await;
    }
    let outcomes = (1..=cfg.total_nodes())
        .map(|id| outcome(cfg, id, errors.remove(&id)))
        .collect();
    Ok((outcomes, trajectories))
}

fn spawn_child(cfg: &ExperimentConfig, launch: &NodeLaunch) -> Result<Child, ExperimentError> {
    let binary = match &cfg.peer_binary {
        Some(p) => p.clone(),
        None => std::env::current_exe()?,
    };
    let logs = cfg.out_dir.join("logs");
    std::fs::create_dir_all(&logs)?;
    let log_file = std::fs::File::create(logs.join(format!("{}.log", launch.peer.hostname)))?;
    Command::new(&binary)
        .args(launch.to_args())
        .stdin(Stdio::null())
        .stdout(log_file.try_clone()?)
        .stderr(log_file)
        .kill_on_drop(true)
        .spawn()
        .map_err(|e| ExperimentError::LaunchFailure {
            node: launch.peer.hostname.clone(),
            reason: format!("{}: {e}", binary.display()),
        })
}

async fn run_processes(
    cfg: &ExperimentConfig,
    prep: &Prepared,
) -> Result<RunResult, ExperimentError> {
    let schedule = cfg.schedule();
    let registry_url = prep.registry.url();
    let launch_for = |id: usize| {
        let (start, end) = schedule[id - 1];
        NodeLaunch {
            peer: cfg.peer_config(id, &registry_url),
            node_id: id,
            data: cfg.dataset.clone(),
            partition_file: cfg.out_dir.join("partition.json"),
            split_seed: cfg.seed,
            model: cfg.model.clone(),
            train: cfg.train.clone(),
            start_round: start,
            rounds: end - start,
            pace_ms: cfg.pace_ms,
            pace_origin_ms: prep.pace_origin,
            metrics_out: Some(events_path(&cfg.out_dir, id)),
        }
    };

    let mut children: BTreeMap<usize, Child> = BTreeMap::new();
    let mut pending: Vec<usize> = Vec::new();
    for id in 1..=cfg.total_nodes() {
        if schedule[id - 1].0 == 0 {
            children.insert(id, spawn_child(cfg, &launch_for(id))?);
        } else {
            pending.push(id);
        }
    }
    let mut results: BTreeMap<usize, Option<String>> = BTreeMap::new();
    loop {
        let mut launched = Vec::new();
        for &id in &pending {
            if join_ready(&cfg.out_dir, &schedule, schedule[id - 1].0) {
                children.insert(id, spawn_child(cfg, &launch_for(id))?);
                launched.push(id);
            }
        }
        pending.retain(|id| !launched.contains(id));

        for (&id, child) in children.iter_mut() {
            if results.contains_key(&id) {
                continue;
            }
            if let Some(status) = child.try_wait()? {
                let err = (!status.success()).then(|| format!("exited with {status}"));
                if let Some(e) = &err {
                    log::error!("{}: {e}", ExperimentConfig::hostname(id));
                }
                results.insert(id, err);
            } else if cfg.stay_resident {
                let last = schedule[id - 1].1 - 1;
                let done = read_partial_events(&events_path(&cfg.out_dir, id))
                    .iter()
                    .any(|e| e.kind == EventKind::Evaluate && e.round == last);
                if done {
                    results.insert(id, None);
                }
            }
        }
        if pending.is_empty() && results.len() == children.len() {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    for child in children.values_mut() {
        if child.try_wait()?.is_none() {
            // resident peers run until told to stop
            let _ = child.kill().await;
        }
    }
    let outcomes = (1..=cfg.total_nodes())
        .map(|id| outcome(cfg, id, results.remove(&id).flatten()))
        .collect();
    Ok((outcomes, BTreeMap::new()))
}

/// One row of the side-by-side accuracy comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub round: u64,
    pub edgefl_mean_accuracy: Option<f64>,
    pub fedavg_mean_accuracy: f64,
}

#[derive(Debug)]
pub struct ComparisonReport {
    pub experiment: ExperimentReport,
    pub fedavg: FedAvgTrace,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,edgefl_mean_accuracy,fedavg_mean_accuracy\n");
        for r in &self.rows {
            let e = r
                .edgefl_mean_accuracy
                .map(|v| v.to_string())
                .unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", r.round, e, r.fedavg_mean_accuracy));
        }
        out
    }
}

/// Runs the experiment and the centralized baseline on the same data,
/// partition and seeds, and writes `comparison.csv` and `comparison.json`.
pub async fn run_comparison(cfg: &ExperimentConfig) -> Result<ComparisonReport, ExperimentError> {
    let experiment = run_experiment(cfg).await?;
    let data = cfg.dataset.load()?;
    let plan = PartitionPlan::load(&cfg.out_dir.join("partition.json"))?;
    let fcfg = FedAvgConfig {
        node_count: cfg.nodes,
        client_fraction: 1.0,
        rounds: cfg.rounds,
        train: cfg.train.clone(),
        model: cfg.model.spec_for(&data),
        partition: plan,
        seed: cfg.seed,
        weighting: Weighting::Uniform,
    };
    let fedavg = tokio::task::spawn_blocking(move || run_fedavg(&fcfg, &data))
        .await
        .map_err(|e| ExperimentError::InvalidConfig(format!("baseline task failed: {e}")))??;
    let means = classification_report(&experiment.events).round_means;
    let rows: Vec<ComparisonRow> = fedavg
        .rounds
        .iter()
        .map(|f| ComparisonRow {
            round: f.round,
            edgefl_mean_accuracy: means.get(&f.round).copied(),
            fedavg_mean_accuracy: f.mean_accuracy,
        })
        .collect();
    let report = ComparisonReport {
        experiment,
        fedavg,
        rows,
    };
    std::fs::write(cfg.out_dir.join("comparison.csv"), report.to_csv())?;
    let json = serde_json::json!({
        "rows": report.rows,
        "edgefl": report.experiment.report.summary,
        "fedavg_rounds": report.fedavg.rounds,
    });
    std::fs::write(
        cfg.out_dir.join("comparison.json"),
        serde_json::to_string_pretty(&json).expect("serializes"),
    )?;
    Ok(report)
}
