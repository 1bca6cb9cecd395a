//! Pluggable aggregation policies, selected by identifier.

use std::sync::Arc;

use crate::weights::{average, Tensor, WeightSet, WeightsError};

/// Combines the node's own model (when it takes part) with fetched models.
/// Output has the common layout and `version = max(input versions) + 1`.
pub trait AggregationPolicy: Send + Sync {
    fn id(&self) -> &str;
    fn combine(
        &self,
        own: Option<&WeightSet>,
        fetched: &[WeightSet],
    ) -> Result<WeightSet, WeightsError>;
}

fn gather(own: Option<&WeightSet>, fetched: &[WeightSet]) -> Vec<WeightSet> {
    own.into_iter().chain(fetched).cloned().collect()
}

/// Element-wise arithmetic mean with equal weight per input.
#[derive(Debug, Default, Clone, Copy)]
pub struct UniformAverage;

impl AggregationPolicy for UniformAverage {
    fn id(&self) -> &str {
        "uniform_average"
    }

    fn combine(
        &self,
        own: Option<&WeightSet>,
        fetched: &[WeightSet],
    ) -> Result<WeightSet, WeightsError> {
        average(&gather(own, fetched), None)
    }
}

/// Coordinate-wise mean after dropping the `floor(n * trim)` smallest and
/// largest values of each coordinate.
#[derive(Debug, Clone, Copy)]
pub struct TrimmedMean {
    pub trim: f64,
}

impl Default for TrimmedMean {
    fn default() -> Self {
        Self { trim: 0.2 }
    }
}

/// Coordinate-wise median (mean of the two middle values for even counts).
#[derive(Debug, Default, Clone, Copy)]
pub struct CoordinateMedian;

fn coordinatewise(
    inputs: &[WeightSet],
    reduce: impl Fn(&mut [f64]) -> f64,
) -> Result<WeightSet, WeightsError> {
    let first = inputs.first().ok_or(WeightsError::EmptyInput)?;
    for w in inputs {
        first.check_compatible(w)?;
        w.ensure_finite()?;
    }
    let mut column = vec![0f64; inputs.len()];
    let mut entries = Vec::with_capacity(first.entries().len());
    for (e, proto) in first.entries().iter().enumerate() {
        let data = (0..proto.len())
            .map(|j| {
                for (slot, w) in column.iter_mut().zip(inputs) {
                    *slot = f64::from(w.entries()[e].data()[j]);
                }
                column.sort_by(|a, b| a.partial_cmp(b).unwrap());
                reduce(&mut column) as f32
            })
            .collect();
        entries.push(Tensor::new(proto.name(), proto.shape().to_vec(), data)?);
    }
    let version = inputs.iter().map(WeightSet::version).max().unwrap_or(0) + 1;
    WeightSet::new(entries, version, "", 0)
}

impl AggregationPolicy for TrimmedMean {
    fn id(&self) -> &str {
        "trimmed_mean"
    }

    fn combine(
        &self,
        own: Option<&WeightSet>,
        fetched: &[WeightSet],
    ) -> Result<WeightSet, WeightsError> {
        let inputs = gather(own, fetched);
        let cut = (inputs.len() as f64 * self.trim).floor() as usize;
        let cut = cut.min(inputs.len().saturating_sub(1) / 2);
        coordinatewise(&inputs, |col| {
            let kept = &col[cut..col.len() - cut];
            kept.iter().sum::<f64>() / kept.len() as f64
        })
    }
}

impl AggregationPolicy for CoordinateMedian {
    fn id(&self) -> &str {
        "median"
    }

    fn combine(
        &self,
        own: Option<&WeightSet>,
        fetched: &[WeightSet],
    ) -> Result<WeightSet, WeightsError> {
        coordinatewise(&gather(own, fetched), |col| {
            let n = col.len();
            if n % 2 == 1 {
                col[n / 2]
            } else {
                (col[n / 2 - 1] + col[n / 2]) / 2.0
            }
        })
    }
}

pub const POLICY_IDS: &[&str] = &["uniform_average", "trimmed_mean", "median"];

pub fn policy_by_id(id: &str) -> Option<Arc<dyn AggregationPolicy>> {
    match id {
        "uniform_average" => Some(Arc::new(UniformAverage)),
        "trimmed_mean" => Some(Arc::new(TrimmedMean::default())),
        "median" => Some(Arc::new(CoordinateMedian)),
        _ => None,
    }
}
