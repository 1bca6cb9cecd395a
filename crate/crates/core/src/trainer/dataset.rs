use super::TrainError;

/// Dense labelled samples: `len x feature_dim` row-major features and one
/// class index per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f32>,
    feature_dim: usize,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f32>,
        feature_dim: usize,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self, TrainError> {
        if feature_dim == 0 || class_count == 0 {
            return Err(TrainError::InvalidDataset(
                "feature_dim and class_count must be positive".into(),
            ));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(TrainError::InvalidDataset(format!(
                "{} feature values for {} rows of dim {}",
                features.len(),
                labels.len(),
                feature_dim
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count) {
            return Err(TrainError::InvalidDataset(format!(
                "label {l} at row {i} not below class count {class_count}"
            )));
        }
        Ok(Self {
            features,
            feature_dim,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Rows at `indices`, in that order. Panics on an out-of-range index.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.feature_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            feature_dim: self.feature_dim,
            labels,
            class_count: self.class_count,
        }
    }

    /// Number of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(Dataset::new(vec![0.0; 4], 2, vec![0, 1], 2).is_ok());
        assert!(Dataset::new(vec![0.0; 3], 2, vec![0, 1], 2).is_err());
        assert!(Dataset::new(vec![0.0; 4], 2, vec![0, 2], 2).is_err());
        assert!(Dataset::new(vec![], 2, vec![], 2).unwrap().is_empty());
    }

    #[test]
    fn subset_keeps_order() {
        let d = Dataset::new(vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], 2, vec![0, 1, 2], 3).unwrap();
        let s = d.subset(&[2, 0]);
        assert_eq!(s.features(), &[4.0, 5.0, 0.0, 1.0]);
        assert_eq!(s.labels(), &[2, 0]);
        assert_eq!(d.class_counts(), vec![1, 1, 1]);
    }
}
