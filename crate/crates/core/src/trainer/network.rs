//! Dense ReLU network evaluated in `f64`.
//!
//! Parameters are taken from a `WeightSet` laid out as `W0, b0, W1, b1, ...`
//! with `Wi: [in, out]` row-major and `bi: [out]`. One layer is softmax
//! regression; more layers form an MLP with ReLU between layers.

use super::{Dataset, TrainError};
use crate::weights::{Tensor, WeightSet};

#[derive(Debug, Clone)]
pub(crate) struct Layer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub inputs: usize,
    pub outputs: usize,
}

impl Layer {
    fn zeros_like(&self) -> Layer {
        Layer {
            w: vec![0.0; self.w.len()],
            b: vec![0.0; self.b.len()],
            inputs: self.inputs,
            outputs: self.outputs,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Network {
    pub layers: Vec<Layer>,
}

fn mismatch(msg: String) -> TrainError {
    TrainError::ShapeMismatch(msg)
}

impl Network {
    /// Builds the network and checks it maps `feature_dim` inputs onto
    /// `class_count` logits.
    pub fn from_weights(
        ws: &WeightSet,
        feature_dim: usize,
        class_count: usize,
    ) -> Result<Network, TrainError> {
        let entries = ws.entries();
        if entries.is_empty() || !entries.len().is_multiple_of(2) {
            return Err(mismatch(format!(
                "expected W/b pairs, found {} entries",
                entries.len()
            )));
        }
        let mut layers = Vec::with_capacity(entries.len() / 2);
        let mut width = feature_dim;
        for (i, pair) in entries.chunks_exact(2).enumerate() {
            let (w, b) = (&pair[0], &pair[1]);
            let (wn, bn) = (format!("W{i}"), format!("b{i}"));
            if w.name() != wn || b.name() != bn {
                return Err(mismatch(format!(
                    "expected entries {wn}, {bn}, found {}, {}",
                    w.name(),
                    b.name()
                )));
            }
            let &[rows, cols] = w.shape() else {
                return Err(mismatch(format!(
                    "{wn} must be rank 2, got {:?}",
                    w.shape()
                )));
            };
            if rows != width || b.shape() != [cols] {
                return Err(mismatch(format!(
                    "{wn}{:?}/{bn}{:?} do not follow input width {width}",
                    w.shape(),
                    b.shape()
                )));
            }
            layers.push(Layer {
                w: w.data().iter().map(|&v| f64::from(v)).collect(),
                b: b.data().iter().map(|&v| f64::from(v)).collect(),
                inputs: rows,
                outputs: cols,
            });
            width = cols;
        }
        if width != class_count {
            return Err(mismatch(format!(
                "model emits {width} logits for {class_count} classes"
            )));
        }
        Ok(Network { layers })
    }

    /// Writes parameters back into the layout of `template`.
    pub fn to_weights(&self, template: &WeightSet, version: u64) -> WeightSet {
        let mut entries = Vec::with_capacity(self.layers.len() * 2);
        for (i, l) in self.layers.iter().enumerate() {
            let w = l.w.iter().map(|&v| v as f32).collect();
            let b = l.b.iter().map(|&v| v as f32).collect();
            entries.push(Tensor::new(format!("W{i}"), vec![l.inputs, l.outputs], w).unwrap());
            entries.push(Tensor::new(format!("b{i}"), vec![l.outputs], b).unwrap());
        }
        WeightSet::new(
            entries,
            version,
            template.producer(),
            template.produced_at(),
        )
        .unwrap()
    }

    /// Per-layer pre-activations for one input row; the last one holds logits.
    fn forward(&self, x: &[f32]) -> Vec<Vec<f64>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        for (li, l) in self.layers.iter().enumerate() {
            let mut z = l.b.clone();
            for (i, &a) in act.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let row = &l.w[i * l.outputs..(i + 1) * l.outputs];
                for (zj, &wij) in z.iter_mut().zip(row) {
                    *zj += a * wij;
                }
            }
            if li + 1 < self.layers.len() {
                act = z.iter().map(|&v| v.max(0.0)).collect();
            }
            pre.push(z);
        }
        pre
    }

    pub fn logits(&self, x: &[f32]) -> Vec<f64> {
        self.forward(x).pop().unwrap()
    }

    /// Mean cross-entropy over `rows` of `data` and its gradient.
    pub fn loss_and_grad(&self, data: &Dataset, rows: &[usize]) -> (f64, Vec<Layer>) {
        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        let mut loss = 0.0;
        let depth = self.layers.len();
        for &r in rows {
            let x = data.row(r);
            let y = data.label(r);
            let pre = self.forward(x);
            let logits = &pre[depth - 1];
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            loss += sum.ln() + max - logits[y];

            let mut delta: Vec<f64> = exps.iter().map(|&e| e / sum).collect();
            delta[y] -= 1.0;
            for li in (0..depth).rev() {
                let layer = &self.layers[li];
                let input: Vec<f64> = if li == 0 {
                    x.iter().map(|&v| f64::from(v)).collect()
                } else {
                    pre[li - 1].iter().map(|&v| v.max(0.0)).collect()
                };
                let g = &mut grads[li];
                for (gb, &d) in g.b.iter_mut().zip(&delta) {
                    *gb += d;
                }
                for (i, &a) in input.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let row = &mut g.w[i * layer.outputs..(i + 1) * layer.outputs];
                    for (gw, &d) in row.iter_mut().zip(&delta) {
                        *gw += a * d;
                    }
                }
                if li > 0 {
                    let below = &pre[li - 1];
                    delta = (0..layer.inputs)
                        .map(|i| {
                            if below[i] <= 0.0 {
                                return 0.0;
                            }
                            let row = &layer.w[i * layer.outputs..(i + 1) * layer.outputs];
                            row.iter().zip(&delta).map(|(w, d)| w * d).sum()
                        })
                        .collect();
                }
            }
        }
        let n = rows.len() as f64;
        for g in &mut grads {
            g.w.iter_mut().for_each(|v| *v /= n);
            g.b.iter_mut().for_each(|v| *v /= n);
        }
        (loss / n, grads)
    }

    pub fn sgd_step(&mut self, grads: &[Layer], lr: f64) {
        for (l, g) in self.layers.iter_mut().zip(grads) {
            for (w, gw) in l.w.iter_mut().zip(&g.w) {
                *w -= lr * gw;
            }
            for (b, gb) in l.b.iter_mut().zip(&g.b) {
                *b -= lr * gb;
            }
        }
    }

    /// Predicted class with ties resolved toward the lowest index.
    pub fn predict(&self, x: &[f32]) -> usize {
        let logits = self.logits(x);
        let mut best = 0;
        for (c, &z) in logits.iter().enumerate().skip(1) {
            if z > logits[best] {
                best = c;
            }
        }
        best
    }
}
