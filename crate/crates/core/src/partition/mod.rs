//! Assigning dataset rows to nodes, plus the desk-scale data sources the
//! partitions are cut from.
//!
//! Two schemes are provided. `uniform` deals every class round-robin so each
//! node sees the same class mix. `normal` skews node `k` (1-based) toward
//! classes near `mu_k = k * N / K` with spread `sigma = spread * N`.

mod blobs;
mod idx;
mod source;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blobs::generate_blobs;
pub use idx::{load_idx, parse_idx};
pub use source::{BlobsSpec, DataSource};

use crate::trainer::{splitmix64, Dataset};

pub const DEFAULT_SPREAD: f64 = 0.2;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("label {label} at index {index} is not below class count {class_count}")]
    BadLabel {
        index: usize,
        label: usize,
        class_count: usize,
    },
    #[error("{total} samples cannot fill {nodes} nodes")]
    InsufficientSamples { total: usize, nodes: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{file}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        file: String,
        found: u32,
        expected: u32,
    },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{file}: truncated at byte offset {offset}")]
    Truncated { file: String, offset: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed partition file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Scheme {
    Uniform,
    Normal { spread: f64 },
}

/// Disjoint per-node row assignments. Node `k` (1-based) owns
/// `assignments[k - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    #[serde(flatten)]
    pub scheme: Scheme,
    pub node_count: usize,
    pub seed: u64,
    pub assignments: Vec<Vec<usize>>,
    pub class_histogram: Vec<Vec<usize>>,
}

impl PartitionPlan {
    fn build(
        scheme: Scheme,
        seed: u64,
        mut assignments: Vec<Vec<usize>>,
        labels: &[usize],
        n: usize,
    ) -> Self {
        let class_histogram = assignments
            .iter_mut()
            .map(|rows| {
                rows.sort_unstable();
                let mut h = vec![0; n];
                rows.iter().for_each(|&i| h[labels[i]] += 1);
                h
            })
            .collect();
        Self {
            scheme,
            node_count: assignments.len(),
            seed,
            assignments,
            class_histogram,
        }
    }

    /// Rows for node `k`, 1-based.
    pub fn node(&self, k: usize) -> Option<&[usize]> {
        k.checked_sub(1)
            .and_then(|i| self.assignments.get(i))
            .map(Vec::as_slice)
    }

    pub fn total_assigned(&self) -> usize {
        self.assignments.iter().map(Vec::len).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, PartitionError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), PartitionError> {
        std::fs::write(path, self.to_json()).map_err(|source| io_err(path, source))
    }

    pub fn load(path: &Path) -> Result<Self, PartitionError> {
        let s = std::fs::read_to_string(path).map_err(|source| io_err(path, source))?;
        Self::from_json(&s)
    }
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> PartitionError {
    PartitionError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn check_args(labels: &[usize], n: usize, k: usize) -> Result<(), PartitionError> {
    if n == 0 || k == 0 {
        return Err(PartitionError::InvalidArgument(
            "class and node counts must be positive".into(),
        ));
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= n) {
        return Err(PartitionError::BadLabel {
            index,
            label,
            class_count: n,
        });
    }
    Ok(())
}

/// Per-class index pools, each shuffled by the seeded stream.
fn class_pools(labels: &[usize], n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut pools = vec![Vec::new(); n];
    for (i, &l) in labels.iter().enumerate() {
        pools[l].push(i);
    }
    pools.iter_mut().for_each(|p| p.shuffle(rng));
    pools
}

/// Deals every class round-robin across `k` nodes. The dealing position
/// carries over between classes, so both per-class and total node counts
/// differ by at most one.
pub fn partition_uniform(
    labels: &[usize],
    n: usize,
    k: usize,
    seed: u64,
) -> Result<PartitionPlan, PartitionError> {
    check_args(labels, n, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![Vec::new(); k];
    let mut next = 0;
    for pool in class_pools(labels, n, &mut rng) {
        for idx in pool {
            assignments[next].push(idx);
            next = (next + 1) % k;
        }
    }
    Ok(PartitionPlan::build(
        Scheme::Uniform,
        seed,
        assignments,
        labels,
        n,
    ))
}

/// `(mu, sigma)` of node `k` (1-based).
pub fn normal_params(k: usize, n: usize, nodes: usize, spread: f64) -> (f64, f64) {
    (k as f64 * n as f64 / nodes as f64, spread * n as f64)
}

/// Class proportions of node `k`: the normal density at integer class
/// coordinates, normalized to sum to one.
pub fn normal_proportions(k: usize, n: usize, nodes: usize, spread: f64) -> Vec<f64> {
    let (mu, sigma) = normal_params(k, n, nodes, spread);
    let dens: Vec<f64> = (0..n)
        .map(|c| (-0.5 * ((c as f64 - mu) / sigma).powi(2)).exp())
        .collect();
    let total: f64 = dens.iter().sum();
    dens.into_iter().map(|d| d / total).collect()
}

/// Integer apportionment of `total` by the largest-remainder method. Ties on
/// the remainder go to the lower index.
pub fn largest_remainder(shares: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = shares.iter().sum();
    if sum <= 0.0 {
        return vec![0; shares.len()];
    }
    let exact: Vec<f64> = shares.iter().map(|s| s / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Per-node class requests before any availability capping: node `k`'s
/// proportions apportioned over its quota.
pub fn normal_requests(n: usize, nodes: usize, spread: f64, quota: usize) -> Vec<Vec<usize>> {
    (1..=nodes)
        .map(|k| largest_remainder(&normal_proportions(k, n, nodes, spread), quota))
        .collect()
}

/// Class-skewed split with an exact per-node quota of `floor(total / K)`.
///
/// When a class is oversubscribed its supply is shared among the requesting
/// nodes in proportion to their requests; any node still short of its quota
/// is then filled one sample at a time from the class with the most
/// remaining supply (lowest index on ties).
pub fn partition_normal(
    labels: &[usize],
    n: usize,
    k: usize,
    seed: u64,
    spread: f64,
) -> Result<PartitionPlan, PartitionError> {
    check_args(labels, n, k)?;
    if !(spread.is_finite() && spread > 0.0) {
        return Err(PartitionError::InvalidArgument(format!(
            "spread must be positive, got {spread}"
        )));
    }
    let total = labels.len();
    if total < k {
        return Err(PartitionError::InsufficientSamples { total, nodes: k });
    }
    let quota = total / k;
    let requested = normal_requests(n, k, spread, quota);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools = class_pools(labels, n, &mut rng);
    let supply: Vec<usize> = pools.iter().map(Vec::len).collect();

    let mut alloc = requested.clone();
    for c in 0..n {
        let demand: usize = requested.iter().map(|r| r[c]).sum();
        if demand > supply[c] {
            let shares: Vec<f64> = requested.iter().map(|r| r[c] as f64).collect();
            for (row, got) in alloc.iter_mut().zip(largest_remainder(&shares, supply[c])) {
                row[c] = got;
            }
        }
    }
    let mut remaining: Vec<usize> = (0..n)
        .map(|c| supply[c] - alloc.iter().map(|r| r[c]).sum::<usize>())
        .collect();
    for row in &mut alloc {
        let short = quota - row.iter().sum::<usize>();
        for _ in 0..short {
            let c = (0..n)
                .max_by(|&a, &b| remaining[a].cmp(&remaining[b]).then(b.cmp(&a)))
                .unwrap();
            row[c] += 1;
            remaining[c] -= 1;
        }
    }

    let assignments = alloc
        .iter()
        .map(|row| {
            let mut rows = Vec::with_capacity(quota);
            for (c, &count) in row.iter().enumerate() {
                let start = pools[c].len() - count;
                rows.extend(pools[c].drain(start..));
            }
            rows
        })
        .collect();
    Ok(PartitionPlan::build(
        Scheme::Normal { spread },
        seed,
        assignments,
        labels,
        n,
    ))
}

/// Splits one node's rows into train and test sets, holding out
/// `round(len * test_fraction)` rows (at most `len - 1`) chosen by `seed`.
pub fn local_split(
    data: &Dataset,
    rows: &[usize],
    test_fraction: f64,
    seed: u64,
) -> (Dataset, Dataset) {
    let mut shuffled = rows.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test =
        ((rows.len() as f64 * test_fraction).round() as usize).min(rows.len().saturating_sub(1));
    let (test, train) = shuffled.split_at(n_test);
    (data.subset(train), data.subset(test))
}

/// The train/test split every node (and the baseline's client `k`) uses.
pub fn node_split(
    data: &Dataset,
    plan: &PartitionPlan,
    k: usize,
    seed: u64,
) -> Option<(Dataset, Dataset)> {
    let rows = plan.node(k)?;
    Some(local_split(
        data,
        rows,
        DEFAULT_TEST_FRACTION,
        splitmix64(seed ^ splitmix64(k as u64)),
    ))
}
