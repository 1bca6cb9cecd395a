//! The edge node.
//!
//! A [`Peer`] follows a four-call life cycle: [`Peer::new`], [`Peer::start`]
//! (register and begin serving `/latest_model` in the background), repeated
//! [`Peer::aggregation_func`] calls between local training steps, and
//! [`Peer::unregister_peer`]. [`Peer::run_rounds`] drives the whole loop.

mod aggregation;
mod rounds;
mod select;
mod server;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use arc_swap::ArcSwapOption;
use bytes::Bytes;
use futures::stream::{self, StreamExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use aggregation::{
    policy_by_id, AggregationPolicy, CoordinateMedian, TrimmedMean, UniformAverage, POLICY_IDS,
};
pub use rounds::{LocalData, Phase, RoundBarrier, RoundSummary, RunOptions, RunReport};
pub use select::{fetch_count, select_peers};
pub use server::{PRODUCER_HEADER, VERSION_HEADER};

use crate::clock;
use crate::metrics::{EventKind, EventLog, RoundEvent};
use crate::registry::{validate_hostname, PeerRecord, RegistryClient, RegistryError};
use crate::trainer::{splitmix64, TrainError};
use crate::weights::{deserialize, serialize, WeightSet, WeightsError};

/// Upper bound on concurrent model fetches within one aggregation.
pub const MAX_PARALLEL_FETCHES: usize = 16;

#[derive(Debug, Error)]
pub enum PeerError {
    #[error("invalid peer config: {0}")]
    InvalidConfig(String),
    #[error("unknown aggregation policy `{0}`")]
    UnknownPolicy(String),
    #[error("peer is not started")]
    NotStarted,
    #[error("peer already started or left")]
    AlreadyStarted,
    #[error("no registry reachable: {0}")]
    NoRegistryReachable(String),
    #[error("port in use: {0}")]
    PortInUse(SocketAddr),
    #[error("no model published yet")]
    NoModelYet,
    #[error("no peer models fetched and no local model")]
    NoPeersAvailable,
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn default_bind_host() -> String {
    "127.0.0.1".into()
}
fn default_alpha() -> f64 {
    1.0
}
fn default_aggregation() -> String {
    "uniform_average".into()
}
fn default_true() -> bool {
    true
}
fn default_fetch_timeout_ms() -> u64 {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerConfig {
    pub hostname: String,
    /// 0 picks an ephemeral port.
    #[serde(default)]
    pub serve_port: u16,
    #[serde(default = "default_bind_host")]
    pub bind_host: String,
    /// Host put into the registered address; defaults to `bind_host`.
    #[serde(default)]
    pub advertise_host: Option<String>,
    pub registries: Vec<String>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_aggregation")]
    pub aggregation: String,
    #[serde(default = "default_true")]
    pub include_self: bool,
    #[serde(default = "default_fetch_timeout_ms")]
    pub fetch_timeout_ms: u64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Keep serving `/latest_model` after unregistering.
    #[serde(default)]
    pub stay_resident: bool,
    /// Artificial delay inserted between the send stamp and the response.
    #[serde(default)]
    pub link_delay_ms: u64,
}

impl PeerConfig {
    pub fn new(hostname: impl Into<String>, registries: Vec<String>) -> Self {
        Self {
            hostname: hostname.into(),
            serve_port: 0,
            bind_host: default_bind_host(),
            advertise_host: None,
            registries,
            alpha: default_alpha(),
            aggregation: default_aggregation(),
            include_self: true,
            fetch_timeout_ms: default_fetch_timeout_ms(),
            rng_seed: 0,
            stay_resident: false,
            link_delay_ms: 0,
        }
    }

    pub fn validate(&self) -> Result<(), PeerError> {
        validate_hostname(&self.hostname).map_err(|e| PeerError::InvalidConfig(e.to_string()))?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(PeerError::InvalidConfig(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.registries.is_empty() {
            return Err(PeerError::InvalidConfig(
                "at least one registry is required".into(),
            ));
        }
        if self.fetch_timeout_ms == 0 {
            return Err(PeerError::InvalidConfig(
                "fetch_timeout_ms must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeerState {
    Created,
    Started,
    Left,
}

/// A published model together with its encoding, swapped in as one unit.
#[derive(Debug)]
pub struct Published {
    pub weights: WeightSet,
    pub bytes: Bytes,
}

/// State shared with the background serving task.
pub(crate) struct Shared {
    pub hostname: String,
    pub latest: ArcSwapOption<Published>,
    pub events: EventLog,
    pub link_delay: Duration,
}

struct Serving {
    shutdown: oneshot::Sender<()>,
    task: JoinHandle<()>,
}

/// Outcome of one aggregation call.
#[derive(Debug, Clone)]
pub struct Aggregation {
    pub weights: WeightSet,
    pub selected: usize,
    pub fetched: usize,
}

pub struct Peer {
    config: PeerConfig,
    policy: Arc<dyn AggregationPolicy>,
    shared: Arc<Shared>,
    state: PeerState,
    registry: RegistryClient,
    http: reqwest::Client,
    rng: ChaCha8Rng,
    serving: Option<Serving>,
    local_addr: Option<SocketAddr>,
    round: u64,
}

fn query_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.' | b'~') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

fn hostname_seed(seed: u64, hostname: &str) -> u64 {
    hostname
        .bytes()
        .fold(splitmix64(seed), |acc, b| splitmix64(acc ^ u64::from(b)))
}

impl Peer {
    /// Builds a peer using the policy named in `config.aggregation`.
    pub fn new(config: PeerConfig) -> Result<Self, PeerError> {
        let policy = policy_by_id(&config.aggregation)
            .ok_or_else(|| PeerError::UnknownPolicy(config.aggregation.clone()))?;
        Self::with_policy(config, policy)
    }

    /// Builds a peer with a caller-supplied aggregation policy.
    pub fn with_policy(
        config: PeerConfig,
        policy: Arc<dyn AggregationPolicy>,
    ) -> Result<Self, PeerError> {
        config.validate()?;
        let timeout = Duration::from_millis(config.fetch_timeout_ms);
        let registry = RegistryClient::new(&config.registries, timeout)?;
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .connect_timeout(timeout)
            .no_proxy()
            .build()
            .map_err(|e| PeerError::InvalidConfig(e.to_string()))?;
        let shared = Arc::new(Shared {
            hostname: config.hostname.clone(),
            latest: ArcSwapOption::empty(),
            events: EventLog::in_memory(),
            link_delay: Duration::from_millis(config.link_delay_ms),
        });
        let rng = ChaCha8Rng::seed_from_u64(hostname_seed(config.rng_seed, &config.hostname));
        Ok(Self {
            config,
            policy,
            shared,
            state: PeerState::Created,
            registry,
            http,
            rng,
            serving: None,
            local_addr: None,
            round: 0,
        })
    }

    /// Routes this peer's events to `log` (e.g. a JSON Lines file). Call
    /// before `start`.
    pub fn with_event_log(mut self, log: EventLog) -> Self {
        let shared = Arc::get_mut(&mut self.shared).expect("event log set before start");
        shared.events = log;
        self
    }

    pub fn config(&self) -> &PeerConfig {
        &self.config
    }

    pub fn hostname(&self) -> &str {
        &self.config.hostname
    }

    pub fn state(&self) -> PeerState {
        self.state
    }

    pub fn events(&self) -> &EventLog {
        &self.shared.events
    }

    pub fn policy_id(&self) -> &str {
        self.policy.id()
    }

    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.local_addr
    }

    /// Address registered for model serving, once started.
    pub fn address(&self) -> Option<String> {
        let addr = self.local_addr?;
        let host = self
            .config
            .advertise_host
            .clone()
            .unwrap_or_else(|| self.config.bind_host.clone());
        Some(format!("{host}:{}", addr.port()))
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Sets the round number attached to subsequent events.
    pub fn set_round(&mut self, round: u64) {
        self.round = round;
    }

    /// Begins serving models and registers with the first reachable
    /// registry. On failure the peer stays in `Created`.
    pub async fn start(&mut self) -> Result<(), PeerError> {
        if self.state != PeerState::Created {
            return Err(PeerError::AlreadyStarted);
        }
        let bind: SocketAddr = format!("{}:{}", self.config.bind_host, self.config.serve_port)
            .parse()
            .map_err(|e| PeerError::InvalidConfig(format!("bind address: {e}")))?;
        let listener = match TcpListener::bind(bind).await {
            Ok(l) => l,
            Err(e) if e.kind() == std::io::ErrorKind::AddrInUse => {
                return Err(PeerError::PortInUse(bind))
            }
            Err(e) => return Err(e.into()),
        };
        let local_addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = server::model_router(Arc::clone(&self.shared));
        let task = tokio::spawn(async move {
            let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = serve.await {
                log::error!("model server failed: {e}");
            }
        });
        self.serving = Some(Serving { shutdown: tx, task });
        self.local_addr = Some(local_addr);

        let address = self.address().expect("bound");
        match self
            .registry
            .register(&self.config.hostname, &address)
            .await
        {
            Ok(url) => {
                log::info!(
                    "{} registered at {url}, serving on {address}",
                    self.config.hostname
                );
                self.state = PeerState::Started;
                Ok(())
            }
            Err(e) => {
                self.stop_serving().await;
                self.local_addr = None;
                Err(match e {
                    RegistryError::Unreachable(msg) => PeerError::NoRegistryReachable(msg),
                    other => PeerError::Registry(other),
                })
            }
        }
    }

    /// Atomically replaces the served model and logs a deploy event. The
    /// version is raised if needed so that it strictly increases.
    pub fn publish(&self, w: WeightSet) -> Result<u64, PeerError> {
        if self.state != PeerState::Started {
            return Err(PeerError::NotStarted);
        }
        let prev = self
            .shared
            .latest
            .load()
            .as_ref()
            .map(|p| p.weights.version());
        let version = match prev {
            Some(p) if w.version() <= p => p + 1,
            _ => w.version(),
        };
        let weights = w
            .with_version(version)
            .stamped(&self.config.hostname, clock::wall_ms());
        let bytes = Bytes::from(serialize(&weights));
        self.shared
            .latest
            .store(Some(Arc::new(Published { weights, bytes })));
        self.shared.events.record(
            RoundEvent::new(
                &self.config.hostname,
                self.round,
                EventKind::Deploy,
                clock::monotonic_ms(),
            )
            .with_version(version),
        );
        Ok(version)
    }

    /// The currently served snapshot, if any.
    pub fn latest(&self) -> Option<Arc<Published>> {
        self.shared.latest.load_full()
    }

    /// Encoded bytes that `/latest_model` is serving right now.
    pub fn serve_latest_model(&self) -> Result<Bytes, PeerError> {
        if self.state == PeerState::Created {
            return Err(PeerError::NotStarted);
        }
        self.latest()
            .map(|p| p.bytes.clone())
            .ok_or(PeerError::NoModelYet)
    }

    async fn fetch_one(&self, peer: &PeerRecord) -> Option<WeightSet> {
        let url = format!(
            "http://{}/latest_model?round={}&requester={}",
            peer.address,
            self.round,
            query_escape(&self.config.hostname)
        );
        let resp = match self.http.get(&url).send().await {
            Ok(r) => r,
            Err(e) => {
                log::debug!(
                    "{}: fetch from {} failed: {e}",
                    self.config.hostname,
                    peer.hostname
                );
                return None;
            }
        };
        if !resp.status().is_success() {
            log::debug!(
                "{}: {} answered {}",
                self.config.hostname,
                peer.hostname,
                resp.status()
            );
            return None;
        }
        let body = resp.bytes().await.ok()?;
        let received_at = clock::monotonic_ms();
        let weights = match deserialize(&body) {
            Ok(w) => w,
            Err(e) => {
                log::warn!(
                    "{}: undecodable model from {}: {e}",
                    self.config.hostname,
                    peer.hostname
                );
                return None;
            }
        };
        self.shared.events.record(
            RoundEvent::new(
                &self.config.hostname,
                self.round,
                EventKind::Receive,
                received_at,
            )
            .with_counterpart(&peer.hostname, weights.version()),
        );
        Some(weights)
    }

    /// Pulls models from a random subset of active peers and combines them.
    ///
    /// Unreachable peers, peers with nothing published, and undecodable or
    /// layout-incompatible models are skipped. When nothing is fetched the
    /// node's own latest model is returned; with no own model either the
    /// call fails with `NoPeersAvailable`.
    pub async fn aggregation_func(&mut self) -> Result<WeightSet, PeerError> {
        self.aggregate().await.map(|a| a.weights)
    }

    pub async fn aggregate(&mut self) -> Result<Aggregation, PeerError> {
        if self.state != PeerState::Started {
            return Err(PeerError::NotStarted);
        }
        let own = self.latest().map(|p| p.weights.clone());
        let active: Vec<PeerRecord> = match self.registry.peers().await {
            Ok(list) => list
                .into_iter()
                .filter(|p| p.hostname != self.config.hostname)
                .collect(),
            Err(e) => {
                log::warn!("{}: peer list unavailable: {e}", self.config.hostname);
                Vec::new()
            }
        };
        let selected = select_peers(&active, self.config.alpha, &mut self.rng);
        let fetches: Vec<_> = selected.iter().map(|p| self.fetch_one(p)).collect();
        let results: Vec<Option<WeightSet>> = stream::iter(fetches)
            .buffered(MAX_PARALLEL_FETCHES)
            .collect()
            .await;
        let mut fetched: Vec<WeightSet> = results.into_iter().flatten().collect();
        if let Some(reference) = own.as_ref().or(fetched.first()).cloned() {
            fetched.retain(|w| {
                let ok = reference.is_shape_compatible(w) && w.ensure_finite().is_ok();
                if !ok {
                    log::warn!(
                        "{}: dropping incompatible model from {}",
                        self.config.hostname,
                        w.producer()
                    );
                }
                ok
            });
        }
        let count = fetched.len();
        let weights = if fetched.is_empty() {
            own.ok_or(PeerError::NoPeersAvailable)?
        } else {
            let own_part = if self.config.include_self {
                own.as_ref()
            } else {
                None
            };
            self.policy
                .combine(own_part, &fetched)?
                .stamped(&self.config.hostname, clock::wall_ms())
        };
        Ok(Aggregation {
            weights,
            selected: selected.len(),
            fetched: count,
        })
    }

    /// Leaves the network. Registry failures are logged and the peer still
    /// moves to `Left`. Serving continues only with `stay_resident`.
    pub async fn unregister_peer(&mut self) -> Result<(), PeerError> {
        match self.state {
            PeerState::Created => return Err(PeerError::NotStarted),
            PeerState::Left => return Ok(()),
            PeerState::Started => {}
        }
        if let Err(e) = self.registry.unregister(&self.config.hostname).await {
            log::warn!("{}: unregister failed: {e}", self.config.hostname);
        }
        self.state = PeerState::Left;
        if !self.config.stay_resident {
            self.stop_serving().await;
        }
        Ok(())
    }

    async fn stop_serving(&mut self) {
        if let Some(s) = self.serving.take() {
            let _ = s.shutdown.send(());
            let _ = s.task.await;
        }
    }

    /// Stops the model server regardless of `stay_resident`.
    pub async fn shutdown(&mut self) {
        self.stop_serving().await;
    }
}

impl Drop for Peer {
    fn drop(&mut self) {
        if let Some(s) = self.serving.take() {
            let _ = s.shutdown.send(());
        }
    }
}
