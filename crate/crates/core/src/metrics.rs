//! Round events and the metrics derived from them: weights update latency,
//! model evolution time and per-round classification accuracy.
//!
//! Every peer appends its own events to a JSON Lines file; analysis merges
//! those files offline. All timestamps come from [`crate::clock::monotonic_ms`].

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no matched send/receive pairs in round {round}")]
    NoPairs { round: u64 },
    #[error("node {node} has fewer than two deploy events")]
    InsufficientDeploys { node: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error("bad glob pattern: {0}")]
    Pattern(#[from] glob::PatternError),
}

fn io_err(path: &Path, source: std::io::Error) -> MetricsError {
    MetricsError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Send,
    Receive,
    TrainStart,
    Deploy,
    Evaluate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEvent {
    pub node: String,
    pub round: u64,
    pub kind: EventKind,
    pub timestamp_ms: u64,
    #[serde(default)]
    pub counterpart: Option<String>,
    #[serde(default)]
    pub payload_version: Option<u64>,
    #[serde(default)]
    pub accuracy: Option<f64>,
}

impl RoundEvent {
    pub fn new(node: impl Into<String>, round: u64, kind: EventKind, timestamp_ms: u64) -> Self {
        Self {
            node: node.into(),
            round,
            kind,
            timestamp_ms,
            counterpart: None,
            payload_version: None,
            accuracy: None,
        }
    }

    pub fn with_counterpart(mut self, counterpart: impl Into<String>, version: u64) -> Self {
        self.counterpart = Some(counterpart.into());
        self.payload_version = Some(version);
        self
    }

    pub fn with_version(mut self, version: u64) -> Self {
        self.payload_version = Some(version);
        self
    }

    pub fn with_accuracy(mut self, accuracy: f64) -> Self {
        self.accuracy = Some(accuracy);
        self
    }
}

/// Append-only event sink shared by a peer's tasks. Events are kept in memory
/// and, when a path is set, also written through to a JSON Lines file one
/// flushed line at a time.
#[derive(Clone, Default)]
pub struct EventLog {
    inner: Arc<Mutex<LogInner>>,
}

#[derive(Default)]
struct LogInner {
    events: Vec<RoundEvent>,
    file: Option<BufWriter<File>>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_file(path: &Path) -> Result<Self, MetricsError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        Ok(Self {
            inner: Arc::new(Mutex::new(LogInner {
                events: Vec::new(),
                file: Some(BufWriter::new(file)),
            })),
        })
    }

    pub fn record(&self, event: RoundEvent) {
        let mut inner = self.inner.lock().unwrap();
        if let Some(f) = inner.file.as_mut() {
            let line = serde_json::to_string(&event).expect("event serializes");
            if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
                log::warn!("failed to persist event: {e}");
            }
        }
        inner.events.push(event);
    }

    pub fn snapshot(&self) -> Vec<RoundEvent> {
        self.inner.lock().unwrap().events.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventLog")
            .field("len", &self.len())
            .finish()
    }
}

pub fn read_events(path: &Path) -> Result<Vec<RoundEvent>, MetricsError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|source| MetricsError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        out.push(ev);
    }
    Ok(out)
}

/// Reads and concatenates every event file matching a glob pattern, in
/// sorted path order.
pub fn read_events_glob(pattern: &str) -> Result<Vec<RoundEvent>, MetricsError> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)?.filter_map(Result::ok).collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_events(&p)?);
    }
    Ok(out)
}

pub fn write_events(path: &Path, events: &[RoundEvent]) -> Result<(), MetricsError> {
    let mut f = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    for ev in events {
        writeln!(f, "{}", serde_json::to_string(ev).unwrap()).map_err(|e| io_err(path, e))?;
    }
    f.flush().map_err(|e| io_err(path, e))
}

/// Transmission times of every matched send/receive pair in `round`.
///
/// A receive on node R from S matches a send on node S to R with the same
/// payload version and round. Repeated keys pair up in timestamp order.
pub fn latency_pairs(events: &[RoundEvent], round: u64) -> Vec<u64> {
    type Key<'a> = (&'a str, &'a str, u64);
    let mut sends: HashMap<Key, VecDeque<u64>> = HashMap::new();
    let mut in_round: Vec<&RoundEvent> = events.iter().filter(|e| e.round == round).collect();
    in_round.sort_by_key(|e| e.timestamp_ms);
    for e in &in_round {
        if let (EventKind::Send, Some(to), Some(v)) = (e.kind, &e.counterpart, e.payload_version) {
            sends
                .entry((&e.node, to, v))
                .or_default()
                .push_back(e.timestamp_ms);
        }
    }
    let mut out = Vec::new();
    for e in &in_round {
        if let (EventKind::Receive, Some(from), Some(v)) =
            (e.kind, &e.counterpart, e.payload_version)
        {
            if let Some(sent) = sends
                .get_mut(&(from.as_str(), e.node.as_str(), v))
                .and_then(VecDeque::pop_front)
            {
                out.push(e.timestamp_ms.saturating_sub(sent));
            }
        }
    }
    out
}

/// Mean send-to-receive time over all matched pairs in `round`.
pub fn weights_update_latency(events: &[RoundEvent], round: u64) -> Result<f64, MetricsError> {
    let pairs = latency_pairs(events, round);
    if pairs.is_empty() {
        return Err(MetricsError::NoPairs { round });
    }
    Ok(pairs.iter().sum::<u64>() as f64 / pairs.len() as f64)
}

/// Mean gap between consecutive deploys of `node`.
pub fn model_evolution_time(events: &[RoundEvent], node: &str) -> Result<f64, MetricsError> {
    let mut ts: Vec<u64> = events
        .iter()
        .filter(|e| e.kind == EventKind::Deploy && e.node == node)
        .map(|e| e.timestamp_ms)
        .collect();
    if ts.len() < 2 {
        return Err(MetricsError::InsufficientDeploys {
            node: node.to_string(),
        });
    }
    ts.sort_unstable();
    Ok((ts[ts.len() - 1] - ts[0]) as f64 / (ts.len() - 1) as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClassificationReport {
    /// Accuracy keyed by `(round, node)`; a later event for the same key wins.
    pub table: BTreeMap<(u64, String), f64>,
    pub round_means: BTreeMap<u64, f64>,
}

impl ClassificationReport {
    pub fn accuracy(&self, round: u64, node: &str) -> Option<f64> {
        self.table.get(&(round, node.to_string())).copied()
    }

    /// Accuracies recorded in `round`, keyed by node.
    pub fn round(&self, round: u64) -> BTreeMap<&str, f64> {
        self.table
            .iter()
            .filter(|((r, _), _)| *r == round)
            .map(|((_, n), &a)| (n.as_str(), a))
            .collect()
    }
}

pub fn classification_report(events: &[RoundEvent]) -> ClassificationReport {
    let mut table = BTreeMap::new();
    for e in events.iter().filter(|e| e.kind == EventKind::Evaluate) {
        if let Some(acc) = e.accuracy {
            table.insert((e.round, e.node.clone()), acc);
        }
    }
    let mut sums: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for ((round, _), acc) in &table {
        let s = sums.entry(*round).or_default();
        s.0 += acc;
        s.1 += 1;
    }
    let round_means = sums
        .into_iter()
        .map(|(r, (sum, n))| (r, sum / n as f64))
        .collect();
    ClassificationReport { table, round_means }
}

/// One CSV row. `round` is empty for per-node aggregates and `node` is `*`
/// for network-wide values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub round: Option<u64>,
    pub node: String,
    pub metric: String,
    pub value: f64,
}

pub const CLOCK_NOTE: &str =
    "timestamps share one host monotonic clock; cross-host latencies are not valid without clock sync";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub event_count: usize,
    pub nodes: Vec<String>,
    pub rounds: Vec<u64>,
    pub mean_accuracy_by_round: BTreeMap<u64, f64>,
    pub final_mean_accuracy: Option<f64>,
    pub weights_update_latency_ms_by_round: BTreeMap<u64, f64>,
    pub mean_weights_update_latency_ms: Option<f64>,
    pub model_evolution_time_ms_by_node: BTreeMap<String, f64>,
    pub mean_model_evolution_time_ms: Option<f64>,
    pub clock_note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub summary: ReportSummary,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Computes every metric the event log supports. Pure in the log.
pub fn build_report(events: &[RoundEvent]) -> Report {
    let nodes: BTreeSet<String> = events.iter().map(|e| e.node.clone()).collect();
    let rounds: BTreeSet<u64> = events.iter().map(|e| e.round).collect();
    let cls = classification_report(events);
    let mut rows = Vec::new();
    for ((round, node), acc) in &cls.table {
        rows.push(ReportRow {
            round: Some(*round),
            node: node.clone(),
            metric: "accuracy".into(),
            value: *acc,
        });
    }
    for (round, m) in &cls.round_means {
        rows.push(ReportRow {
            round: Some(*round),
            node: "*".into(),
            metric: "mean_accuracy".into(),
            value: *m,
        });
    }
    let latency: BTreeMap<u64, f64> = rounds
        .iter()
        .filter_map(|&r| weights_update_latency(events, r).ok().map(|l| (r, l)))
        .collect();
    for (round, l) in &latency {
        rows.push(ReportRow {
            round: Some(*round),
            node: "*".into(),
            metric: "weights_update_latency_ms".into(),
            value: *l,
        });
    }
    let evolution: BTreeMap<String, f64> = nodes
        .iter()
        .filter_map(|n| model_evolution_time(events, n).ok().map(|t| (n.clone(), t)))
        .collect();
    for (node, t) in &evolution {
        rows.push(ReportRow {
            round: None,
            node: node.clone(),
            metric: "model_evolution_time_ms".into(),
            value: *t,
        });
    }
    let summary = ReportSummary {
        event_count: events.len(),
        nodes: nodes.into_iter().collect(),
        rounds: rounds.into_iter().collect(),
        final_mean_accuracy: cls.round_means.values().last().copied(),
        mean_accuracy_by_round: cls.round_means,
        mean_weights_update_latency_ms: mean(latency.values().copied()),
        weights_update_latency_ms_by_round: latency,
        mean_model_evolution_time_ms: mean(evolution.values().copied()),
        model_evolution_time_ms_by_node: evolution,
        clock_note: CLOCK_NOTE.into(),
    };
    Report { rows, summary }
}

pub const REPORT_CSV_HEADER: &str = "round,node,metric,value";

impl Report {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let round = r.round.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{},{}\n", round, r.node, r.metric, r.value));
        }
        s
    }

    /// Writes `report.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), MetricsError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let csv = dir.join("report.csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| io_err(&csv, e))?;
        let json = dir.join("summary.json");
        let body = serde_json::to_string_pretty(&self.summary).unwrap();
        std::fs::write(&json, body).map_err(|e| io_err(&json, e))
    }
}
