//! Model parameters as an ordered list of named `f32` tensors, the averaging
//! operator shared by every aggregation path, and the binary model format.

mod codec;

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

pub use codec::{deserialize, serialize, MAGIC};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightsError {
    #[error("no input weight sets")]
    EmptyInput,
    #[error("shape mismatch at entry `{entry}`")]
    ShapeMismatch { entry: String },
    #[error("bad averaging weights: {0}")]
    BadWeights(String),
    #[error("non-finite value in entry `{entry}`")]
    NonFiniteInput { entry: String },
    #[error("duplicate entry name `{0}`")]
    DuplicateName(String),
    #[error("entry `{name}`: shape {shape:?} does not match {len} data elements")]
    ShapeDataMismatch {
        name: String,
        shape: Vec<usize>,
        len: usize,
    },
    #[error("entry `{name}`: invalid shape {shape:?}")]
    InvalidShape { name: String, shape: Vec<usize> },
    #[error("bad magic bytes")]
    BadMagic,
    #[error("truncated input at byte offset {offset}")]
    Truncated { offset: usize },
    #[error("invalid UTF-8 string at byte offset {offset}")]
    InvalidUtf8 { offset: usize },
    #[error("{count} trailing bytes after offset {offset}")]
    TrailingBytes { offset: usize, count: usize },
    #[error("field too large to encode: {0}")]
    TooLarge(String),
}

/// One named parameter tensor stored as a flat row-major `f32` buffer.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(
        name: impl Into<String>,
        shape: Vec<usize>,
        data: Vec<f32>,
    ) -> Result<Self, WeightsError> {
        let name = name.into();
        if name.len() > u16::MAX as usize {
            return Err(WeightsError::TooLarge(format!(
                "entry name of {} bytes",
                name.len()
            )));
        }
        if shape.iter().any(|&d| d == 0 || d > u32::MAX as usize) || shape.len() > u8::MAX as usize
        {
            return Err(WeightsError::InvalidShape { name, shape });
        }
        let expected = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| WeightsError::InvalidShape {
                name: name.clone(),
                shape: shape.clone(),
            })?;
        if expected != data.len() {
            let len = data.len();
            return Err(WeightsError::ShapeDataMismatch { name, shape, len });
        }
        Ok(Self { name, shape, data })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Result<Self, WeightsError> {
        let len = shape.iter().product();
        Self::new(name, shape, vec![0.0; len])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn same_layout(&self, other: &Tensor) -> bool {
        self.name == other.name && self.shape == other.shape
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("name", &self.name)
            .field("shape", &self.shape)
            .field("len", &self.data.len())
            .finish()
    }
}

/// A complete model snapshot together with its provenance.
///
/// `version` is a per-producer counter; `produced_at` is wall-clock
/// milliseconds since the Unix epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    entries: Vec<Tensor>,
    version: u64,
    producer: String,
    produced_at: u64,
}

impl WeightSet {
    pub fn new(
        entries: Vec<Tensor>,
        version: u64,
        producer: impl Into<String>,
        produced_at: u64,
    ) -> Result<Self, WeightsError> {
        let producer = producer.into();
        if producer.len() > u16::MAX as usize {
            return Err(WeightsError::TooLarge(format!(
                "producer of {} bytes",
                producer.len()
            )));
        }
        if entries.len() > u32::MAX as usize {
            return Err(WeightsError::TooLarge(format!("{} entries", entries.len())));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(e.name.as_str()) {
                return Err(WeightsError::DuplicateName(e.name.clone()));
            }
        }
        Ok(Self {
            entries,
            version,
            producer,
            produced_at,
        })
    }

    pub fn entries(&self) -> &[Tensor] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Mutable access to the tensor buffers. Names and shapes stay fixed.
    pub fn entries_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn producer(&self) -> &str {
        &self.producer
    }

    pub fn produced_at(&self) -> u64 {
        self.produced_at
    }

    pub fn with_version(mut self, version: u64) -> Self {
        self.version = version;
        self
    }

    /// Sets producer and timestamp. Producers longer than the format's
    /// 65535-byte limit are cut at a character boundary.
    pub fn stamped(mut self, producer: impl Into<String>, produced_at: u64) -> Self {
        let mut producer = producer.into();
        if producer.len() > u16::MAX as usize {
            let mut cut = u16::MAX as usize;
            while !producer.is_char_boundary(cut) {
                cut -= 1;
            }
            producer.truncate(cut);
        }
        self.producer = producer;
        self.produced_at = produced_at;
        self
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.entries.iter().map(Tensor::len).sum()
    }

    pub fn is_shape_compatible(&self, other: &WeightSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.same_layout(b))
    }

    /// Name of the first entry where `other` diverges from this layout.
    fn first_divergence(&self, other: &WeightSet) -> Option<String> {
        for (i, a) in self.entries.iter().enumerate() {
            match other.entries.get(i) {
                Some(b) if a.same_layout(b) => {}
                Some(b) if a.name == b.name => return Some(a.name.clone()),
                Some(b) => return Some(b.name.clone()),
                None => return Some(a.name.clone()),
            }
        }
        other
            .entries
            .get(self.entries.len())
            .map(|b| b.name.clone())
    }

    pub fn check_compatible(&self, other: &WeightSet) -> Result<(), WeightsError> {
        match self.first_divergence(other) {
            None => Ok(()),
            Some(entry) => Err(WeightsError::ShapeMismatch { entry }),
        }
    }

    pub fn ensure_finite(&self) -> Result<(), WeightsError> {
        for e in &self.entries {
            if e.data.iter().any(|v| !v.is_finite()) {
                return Err(WeightsError::NonFiniteInput {
                    entry: e.name.clone(),
                });
            }
        }
        Ok(())
    }

    /// Iterates all scalar parameters in entry order.
    pub fn values(&self) -> impl Iterator<Item = f32> + '_ {
        self.entries.iter().flat_map(|e| e.data.iter().copied())
    }

    /// Largest absolute element-wise difference to a shape-compatible set.
    pub fn max_abs_diff(&self, other: &WeightSet) -> Result<f64, WeightsError> {
        self.check_compatible(other)?;
        Ok(self
            .values()
            .zip(other.values())
            .map(|(a, b)| (f64::from(a) - f64::from(b)).abs())
            .fold(0.0, f64::max))
    }
}

/// Weighted element-wise mean of shape-compatible weight sets.
///
/// Without explicit weights every element is `sum / n`, accumulated in `f64`,
/// which makes the result independent of input order. The output carries the
/// common layout, `version = max(input versions) + 1`, and an empty producer
/// for the caller to stamp.
pub fn average(inputs: &[WeightSet], weights: Option<&[f64]>) -> Result<WeightSet, WeightsError> {
    let first = inputs.first().ok_or(WeightsError::EmptyInput)?;
    for w in &inputs[1..] {
        first.check_compatible(w)?;
    }
    if let Some(ws) = weights {
        if ws.len() != inputs.len() {
            return Err(WeightsError::BadWeights(format!(
                "{} weights for {} inputs",
                ws.len(),
                inputs.len()
            )));
        }
        if ws.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
            return Err(WeightsError::BadWeights(
                "negative or non-finite weight".into(),
            ));
        }
        let total: f64 = ws.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(WeightsError::BadWeights(format!(
                "weights sum to {total}, not 1"
            )));
        }
    }
    for w in inputs {
        w.ensure_finite()?;
    }

    let n = inputs.len() as f64;
    let entries = first
        .entries
        .iter()
        .enumerate()
        .map(|(i, proto)| {
            let mut acc = vec![0f64; proto.data.len()];
            match weights {
                None => {
                    for w in inputs {
                        for (a, &v) in acc.iter_mut().zip(&w.entries[i].data) {
                            *a += f64::from(v);
                        }
                    }
                    acc.iter_mut().for_each(|a| *a /= n);
                }
                Some(ws) => {
                    for (w, &c) in inputs.iter().zip(ws) {
                        for (a, &v) in acc.iter_mut().zip(&w.entries[i].data) {
                            *a += c * f64::from(v);
                        }
                    }
                }
            }
            Tensor {
                name: proto.name.clone(),
                shape: proto.shape.clone(),
                data: acc.into_iter().map(|a| a as f32).collect(),
            }
        })
        .collect();
    let version = inputs.iter().map(|w| w.version).max().unwrap_or(0) + 1;
    Ok(WeightSet {
        entries,
        version,
        producer: String::new(),
        produced_at: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ws(vals: &[f32]) -> WeightSet {
        let t = Tensor::new("w", vec![vals.len()], vals.to_vec()).unwrap();
        WeightSet::new(vec![t], 0, "t", 0).unwrap()
    }

    fn random_set(rng: &mut ChaCha8Rng, layout: &[(&str, Vec<usize>)], version: u64) -> WeightSet {
        let entries = layout
            .iter()
            .map(|(name, shape)| {
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-10.0f32..10.0)).collect();
                Tensor::new(*name, shape.clone(), data).unwrap()
            })
            .collect();
        WeightSet::new(entries, version, "r", 0).unwrap()
    }

    #[test]
    fn midpoint_of_two_sets() {
        let avg = average(&[ws(&[1.0, 2.0]), ws(&[3.0, 4.0])], None).unwrap();
        assert_eq!(avg.entries()[0].data(), &[2.0, 3.0]);
    }

    #[test]
    fn single_input_is_identity() {
        let x = ws(&[0.1, -7.25, 3.3e38]);
        let avg = average(std::slice::from_ref(&x), None).unwrap();
        assert_eq!(avg.entries(), x.entries());
        assert_eq!(avg.version(), 1);
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layout = [("W0", vec![3, 4]), ("b0", vec![4]), ("W1", vec![4, 2])];
        let inputs: Vec<_> = (0..5).map(|v| random_set(&mut rng, &layout, v)).collect();
        let avg = average(&inputs, None).unwrap();
        for (e, entry) in avg.entries().iter().enumerate() {
            for j in 0..entry.len() {
                let mut sum = 0.0f64;
                for input in &inputs {
                    sum += input.entries()[e].data()[j] as f64;
                }
                let expected = (sum / 5.0) as f32;
                assert_eq!(entry.data()[j], expected);
            }
        }
        assert_eq!(avg.version(), 5);
    }

    #[test]
    fn explicit_weights() {
        let avg = average(&[ws(&[0.0, 10.0]), ws(&[4.0, 0.0])], Some(&[0.75, 0.25])).unwrap();
        assert_eq!(avg.entries()[0].data(), &[1.0, 7.5]);
    }

    #[test]
    fn error_paths() {
        assert_eq!(average(&[], None), Err(WeightsError::EmptyInput));
        let a = ws(&[1.0, 2.0]);
        let b = ws(&[1.0, 2.0, 3.0]);
        assert_eq!(
            average(&[a.clone(), b], None),
            Err(WeightsError::ShapeMismatch { entry: "w".into() })
        );
        assert!(matches!(
            average(&[a.clone(), a.clone()], Some(&[0.5, 0.6])),
            Err(WeightsError::BadWeights(_))
        ));
        assert!(matches!(
            average(&[a.clone(), a.clone()], Some(&[1.5, -0.5])),
            Err(WeightsError::BadWeights(_))
        ));
        assert!(matches!(
            average(std::slice::from_ref(&a), Some(&[0.5, 0.5])),
            Err(WeightsError::BadWeights(_))
        ));
        let nan = ws(&[f32::NAN, 0.0]);
        assert_eq!(
            average(&[a.clone(), nan], None),
            Err(WeightsError::NonFiniteInput { entry: "w".into() })
        );
        let inf = ws(&[f32::INFINITY, 0.0]);
        assert!(average(&[inf], None).is_err());
    }

    #[test]
    fn mismatch_names_first_divergent_entry() {
        let t = |n: &str, s: Vec<usize>| Tensor::zeros(n, s).unwrap();
        let a = WeightSet::new(vec![t("W0", vec![2, 2]), t("b0", vec![2])], 0, "", 0).unwrap();
        let b = WeightSet::new(vec![t("W0", vec![2, 2]), t("b0", vec![3])], 0, "", 0).unwrap();
        let c = WeightSet::new(vec![t("W0", vec![2, 2])], 0, "", 0).unwrap();
        assert_eq!(
            a.check_compatible(&b),
            Err(WeightsError::ShapeMismatch { entry: "b0".into() })
        );
        assert_eq!(
            a.check_compatible(&c),
            Err(WeightsError::ShapeMismatch { entry: "b0".into() })
        );
        assert_eq!(
            c.check_compatible(&a),
            Err(WeightsError::ShapeMismatch { entry: "b0".into() })
        );
    }

    #[test]
    fn construction_invariants() {
        assert!(matches!(
            Tensor::new("x", vec![2, 3], vec![0.0; 5]),
            Err(WeightsError::ShapeDataMismatch { .. })
        ));
        assert!(matches!(
            Tensor::new("x", vec![0], vec![]),
            Err(WeightsError::InvalidShape { .. })
        ));
        let t = Tensor::zeros("x", vec![1]).unwrap();
        assert_eq!(
            WeightSet::new(vec![t.clone(), t], 0, "", 0),
            Err(WeightsError::DuplicateName("x".into()))
        );
    }
}
