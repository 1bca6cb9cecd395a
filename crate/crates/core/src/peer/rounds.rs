//! The per-node training loop and the optional lockstep barrier.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use tokio::sync::watch;

use super::{Peer, PeerError};
use crate::clock;
use crate::metrics::{EventKind, RoundEvent};
use crate::trainer::{
    evaluate, init_weights, node_training, Dataset, ModelSpec, TrainConfig, TrainError,
};
use crate::weights::WeightSet;

/// A node's local train and test split.
#[derive(Debug, Clone)]
pub struct LocalData {
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    /// Every active node has finished aggregating for the round.
    Aggregated,
    /// Every active node has published (and leavers have unregistered).
    Published,
    /// Every node that stays to the end has done its closing aggregation.
    Final,
}

/// Synchronises in-process peers so that rounds proceed in lockstep.
///
/// Built from each participant's `[start, end)` round range. Phase
/// `Aggregated` of round `r` waits for nodes active in `r`; `Published`
/// additionally waits for nodes joining at `r + 1`, which register and then
/// arrive there so the incumbents see them in their next aggregation.
#[derive(Debug)]
pub struct RoundBarrier {
    schedule: Vec<(u64, u64)>,
    counts: watch::Sender<BTreeMap<(u64, Phase), usize>>,
}

impl RoundBarrier {
    pub fn new(schedule: Vec<(u64, u64)>) -> Self {
        Self {
            schedule,
            counts: watch::Sender::new(BTreeMap::new()),
        }
    }

    fn last_round(&self) -> u64 {
        self.schedule.iter().map(|&(_, e)| e).max().unwrap_or(0)
    }

    pub fn expected(&self, round: u64, phase: Phase) -> usize {
        let active = |r: u64| {
            self.schedule
                .iter()
                .filter(|&&(s, e)| s <= r && r < e)
                .count()
        };
        match phase {
            Phase::Aggregated => active(round),
            Phase::Published => {
                active(round)
                    + self
                        .schedule
                        .iter()
                        .filter(|&&(s, _)| s == round + 1)
                        .count()
            }
            Phase::Final => {
                let last = self.last_round();
                self.schedule.iter().filter(|&&(_, e)| e == last).count()
            }
        }
    }

    /// Records an arrival and waits for the rest of the cohort.
    pub async fn arrive(&self, round: u64, phase: Phase) {
        self.counts
            .send_modify(|m| *m.entry((round, phase)).or_default() += 1);
        self.wait_complete(round, phase).await;
    }

    /// Waits without arriving.
    pub async fn wait_complete(&self, round: u64, phase: Phase) {
        let expected = self.expected(round, phase);
        let mut rx = self.counts.subscribe();
        let _ = rx
            .wait_for(|m| m.get(&(round, phase)).copied().unwrap_or(0) >= expected)
            .await;
    }
}

#[derive(Debug, Clone)]
pub struct RoundSummary {
    pub round: u64,
    /// Model the round started from, after aggregation.
    pub aggregated: WeightSet,
    /// Model published at the end of the round.
    pub trained: WeightSet,
    /// Accuracy of `trained` on the local test split.
    pub accuracy: f64,
    pub fetched: usize,
    /// The node had nothing to aggregate and started from fresh weights.
    pub bootstrapped: bool,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Number of rounds to run.
    pub rounds: u64,
    pub start_round: u64,
    /// 1-based node id used to derive shuffle seeds.
    pub node_id: u64,
    /// Minimum spacing between round starts.
    pub pace: Duration,
    /// Monotonic timestamp (ms) of round 0 for paced runs; defaults to now.
    pub pace_origin_ms: Option<u64>,
    pub barrier: Option<Arc<RoundBarrier>>,
    /// Unregister after the last round.
    pub leave_after: bool,
    /// Aggregate once more after the last round.
    pub final_aggregation: bool,
}

impl RunOptions {
    pub fn new(node_id: u64, rounds: u64) -> Self {
        Self {
            rounds,
            start_round: 0,
            node_id,
            pace: Duration::ZERO,
            pace_origin_ms: None,
            barrier: None,
            leave_after: false,
            final_aggregation: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub rounds: Vec<RoundSummary>,
    pub final_aggregate: Option<WeightSet>,
}

async fn pace_until(origin_ms: u64, pace: Duration, index: u64) {
    if pace.is_zero() {
        return;
    }
    let target = origin_ms + index * pace.as_millis() as u64;
    let now = clock::monotonic_ms();
    if target > now {
        tokio::time::sleep(Duration::from_millis(target - now)).await;
    }
}

impl Peer {
    /// Aggregates, falling back to fresh weights when nothing is available.
    async fn aggregate_or_init(
        &mut self,
        model: &ModelSpec,
    ) -> Result<(WeightSet, usize, bool), PeerError> {
        match self.aggregate().await {
            Ok(a) => Ok((a.weights, a.fetched, false)),
            Err(PeerError::NoPeersAvailable) => Ok((init_weights(model)?, 0, true)),
            Err(e) => Err(e),
        }
    }

    /// Runs `opts.rounds` rounds of aggregate, train, publish, evaluate.
    /// The peer must be started.
    pub async fn run_rounds(
        &mut self,
        data: &LocalData,
        model: &ModelSpec,
        cfg: &TrainConfig,
        opts: &RunOptions,
    ) -> Result<RunReport, PeerError> {
        model.validate()?;
        cfg.validate()?;
        let origin = opts.pace_origin_ms.unwrap_or_else(clock::monotonic_ms);
        let train = Arc::new(data.train.clone());
        let mut rounds = Vec::with_capacity(opts.rounds as usize);
        let end = opts.start_round + opts.rounds;

        for round in opts.start_round..end {
            pace_until(origin, opts.pace, round).await;
            self.set_round(round);
            let (aggregated, fetched, bootstrapped) = self.aggregate_or_init(model).await?;
            if let Some(b) = &opts.barrier {
                b.arrive(round, Phase::Aggregated).await;
            }

            self.events().record(RoundEvent::new(
                self.hostname(),
                round,
                EventKind::TrainStart,
                clock::monotonic_ms(),
            ));
            let round_cfg = cfg.for_node_round(opts.node_id, round);
            let start = aggregated.clone();
            let shard = Arc::clone(&train);
            let trained =
                tokio::task::spawn_blocking(move || node_training(&start, &shard, &round_cfg))
                    .await
                    .map_err(|e| {
                        PeerError::Train(TrainError::InvalidConfig(format!(
                            "training task failed: {e}"
                        )))
                    })??;
            let version = self.publish(trained.clone())?;
            let accuracy = evaluate(&trained, &data.test)?;
            self.events().record(
                RoundEvent::new(
                    self.hostname(),
                    round,
                    EventKind::Evaluate,
                    clock::monotonic_ms(),
                )
                .with_version(version)
                .with_accuracy(accuracy),
            );
            log::info!(
                "{} round {round}: accuracy {accuracy:.4}, fetched {fetched}",
                self.hostname()
            );

            if opts.leave_after && round + 1 == end {
                self.unregister_peer().await?;
            }
            if let Some(b) = &opts.barrier {
                b.arrive(round, Phase::Published).await;
            }
            rounds.push(RoundSummary {
                round,
                aggregated,
                trained,
                accuracy,
                fetched,
                bootstrapped,
            });
        }

        let mut final_aggregate = None;
        if opts.final_aggregation && !opts.leave_after {
            self.set_round(end);
            let (w, _, _) = self.aggregate_or_init(model).await?;
            final_aggregate = Some(w);
            if let Some(b) = &opts.barrier {
                b.arrive(end, Phase::Final).await;
            }
        }
        Ok(RunReport {
            rounds,
            final_aggregate,
        })
    }
}
