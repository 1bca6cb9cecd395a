//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use edgefl::trainer::Dataset;
use edgefl::weights::WeightSet;

/// Parameters as `(inputs, outputs, W row-major [inputs x outputs], b)`.
pub type Layers = Vec<(usize, usize, Vec<f64>, Vec<f64>)>;

pub fn layers_of(w: &WeightSet) -> Layers {
    let e = w.entries();
    e.chunks(2)
        .map(|pair| {
            let (wm, b) = (&pair[0], &pair[1]);
            let shape = wm.shape();
            (
                shape[0],
                shape[1],
                wm.data().iter().map(|&v| f64::from(v)).collect(),
                b.data().iter().map(|&v| f64::from(v)).collect(),
            )
        })
        .collect()
}

/// Mean cross-entropy of a ReLU network, plus the sign pattern of every
/// hidden pre-activation.
pub fn loss_with_pattern(layers: &Layers, data: &Dataset) -> (f64, Vec<bool>) {
    let mut total = 0.0;
    let mut pattern = Vec::new();
    for i in 0..data.len() {
        let mut h: Vec<f64> = data.row(i).iter().map(|&v| f64::from(v)).collect();
        for (l, (inp, out, w, b)) in layers.iter().enumerate() {
            let mut z = b.clone();
            for (a, &x) in h.iter().enumerate().take(*inp) {
                for (j, zj) in z.iter_mut().enumerate().take(*out) {
                    *zj += x * w[a * out + j];
                }
            }
            if l + 1 < layers.len() {
                pattern.extend(z.iter().map(|&v| v > 0.0));
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = z;
        }
        let m = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + h.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - h[data.label(i)];
    }
    (total / data.len() as f64, pattern)
}

pub fn loss(layers: &Layers, data: &Dataset) -> f64 {
    loss_with_pattern(layers, data).0
}

/// Outcome of comparing an analytic gradient to central differences.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub worst_relative: f64,
    pub failures: Vec<String>,
    /// `(analytic, numeric)` for every checked element.
    pub pairs: Vec<(f64, f64)>,
}

/// Checks every element of `grad` against central differences of the
/// reference loss with step `h`.
pub fn check_gradient(
    w: &WeightSet,
    grad: &WeightSet,
    data: &Dataset,
    h: f64,
    tol: f64,
) -> GradCheck {
    let base = layers_of(w);
    let analytic = layers_of(grad);
    let mut out = GradCheck::default();
    for l in 0..base.len() {
        for which in 0..2 {
            let len = if which == 0 {
                base[l].2.len()
            } else {
                base[l].3.len()
            };
            for i in 0..len {
                let at = |delta: f64| {
                    let mut p = base.clone();
                    if which == 0 {
                        p[l].2[i] += delta;
                    } else {
                        p[l].3[i] += delta;
                    }
                    loss_with_pattern(&p, data)
                };
                let (up, pat_up) = at(h);
                let (down, pat_down) = at(-h);
                if pat_up != pat_down {
                    out.skipped_kinks += 1;
                    continue;
                }
                let numeric = (up - down) / (2.0 * h);
                let a = if which == 0 {
                    analytic[l].2[i]
                } else {
                    analytic[l].3[i]
                };
                let scale = a.abs().max(numeric.abs());
                let rel = if scale < 1e-10 {
                    0.0
                } else {
                    (a - numeric).abs() / scale
                };
                out.checked += 1;
                out.pairs.push((a, numeric));
                out.worst_relative = out.worst_relative.max(rel);
                if rel > tol {
                    let name = if which == 0 {
                        format!("W{l}")
                    } else {
                        format!("b{l}")
                    };
                    out.failures.push(format!(
                        "{name}[{i}]: analytic {a:e} numeric {numeric:e} rel {rel:e}"
                    ));
                }
            }
        }
    }
    out
}

pub mod strategies {
    use edgefl::weights::{Tensor, WeightSet};
    use proptest::collection::{btree_set, vec};
    use proptest::prelude::*;

    pub fn tensor(name: String) -> impl Strategy<Value = Tensor> {
        vec(1usize..5, 0..4).prop_flat_map(move |shape| {
            let n: usize = shape.iter().product();
            let name = name.clone();
            vec(any::<u32>().prop_map(f32::from_bits), n)
                .prop_map(move |data| Tensor::new(name.clone(), shape.clone(), data).unwrap())
        })
    }

    /// Arbitrary weight sets, including non-finite values.
    pub fn weight_set() -> impl Strategy<Value = WeightSet> {
        (
            btree_set("[a-zA-Z0-9_.]{1,12}", 0..6),
            any::<u64>(),
            "[a-z0-9-]{0,16}",
            any::<u64>(),
        )
            .prop_flat_map(|(names, version, producer, at)| {
                let tensors: Vec<_> = names.into_iter().map(tensor).collect();
                tensors.prop_map(move |entries| {
                    WeightSet::new(entries, version, producer.clone(), at).unwrap()
                })
            })
    }

    /// Bitwise equality, so NaN payloads count.
    pub fn bit_identical(a: &WeightSet, b: &WeightSet) -> bool {
        a.version() == b.version()
            && a.producer() == b.producer()
            && a.produced_at() == b.produced_at()
            && a.entries().len() == b.entries().len()
            && a.entries().iter().zip(b.entries()).all(|(x, y)| {
                x.name() == y.name()
                    && x.shape() == y.shape()
                    && x.data()
                        .iter()
                        .map(|v| v.to_bits())
                        .eq(y.data().iter().map(|v| v.to_bits()))
            })
    }
}

pub mod registry_model {
    use std::collections::BTreeMap;

    use edgefl::registry::Registry;
    use proptest::prelude::*;

    #[derive(Debug, Clone)]
    pub enum Op {
        Register(String, String),
        Unregister(String),
        Peers,
    }

    pub fn op() -> impl Strategy<Value = Op> {
        let host = prop_oneof!["[a-d]", Just(String::new()), Just("bad host".to_string())];
        let addr = prop_oneof![
            (1u16..4).prop_map(|p| format!("10.0.0.1:{p}")),
            Just("nope".to_string()),
            Just("h:0".to_string())
        ];
        prop_oneof![
            (host.clone(), addr).prop_map(|(h, a)| Op::Register(h, a)),
            host.prop_map(Op::Unregister),
            Just(Op::Peers),
        ]
    }

    fn valid_host(h: &str) -> bool {
        !h.is_empty() && !h.contains(' ')
    }

    fn valid_addr(a: &str) -> bool {
        a.rsplit_once(':')
            .and_then(|(h, p)| (!h.is_empty()).then_some(p))
            .and_then(|p| p.parse::<u16>().ok())
            .is_some_and(|p| p > 0)
    }

    /// Replays `ops` against a registry and a plain map; returns the first
    /// disagreement.
    pub fn run(ops: &[Op]) -> Result<(), String> {
        let reg = Registry::new();
        let mut model: BTreeMap<String, String> = BTreeMap::new();
        for (i, op) in ops.iter().enumerate() {
            match op {
                Op::Register(h, a) => {
                    let ok = reg.register(h, a).is_ok();
                    let expect = valid_host(h) && valid_addr(a);
                    if ok != expect {
                        return Err(format!("step {i}: register({h:?}, {a:?}) ok={ok}"));
                    }
                    if expect {
                        model.insert(h.clone(), a.clone());
                    }
                }
                Op::Unregister(h) => {
                    let ok = reg.unregister(h).is_ok();
                    if ok != !h.is_empty() {
                        return Err(format!("step {i}: unregister({h:?}) ok={ok}"));
                    }
                    model.remove(h);
                }
                Op::Peers => {
                    let got: Vec<(String, String)> = reg
                        .peers()
                        .into_iter()
                        .map(|p| (p.hostname, p.address))
                        .collect();
                    let want: Vec<(String, String)> =
                        model.iter().map(|(h, a)| (h.clone(), a.clone())).collect();
                    if got != want {
                        return Err(format!("step {i}: peers {got:?} != {want:?}"));
                    }
                }
            }
        }
        Ok(())
    }
}
