//! Minimal MLP with named parameters (W1, b1, ..., WL, bL). Weights are
//! row-major [in, out]; hidden layers use ReLU, the output layer is linear.
//! Training is plain minibatch SGD with cross-entropy, gradients accumulated
//! in f64 and applied single-threaded so runs are bit-reproducible.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::TrainConfig;
use super::suite::Dataset;
use crate::error::{Error, Result};
use crate::tensorstore::{NamedTensorSet, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    dims: Vec<usize>,
}

impl MlpSpec {
    /// dims = [input, hidden..., classes]; at least one layer, no zero widths.
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::usage(
                "an MLP needs at least input and output widths",
            ));
        }
        if dims.contains(&0) {
            return Err(Error::usage("layer widths must be nonzero"));
        }
        Ok(Self { dims })
    }

    pub fn from_layer_sizes(input: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input);
        dims.extend_from_slice(hidden);
        dims.push(classes);
        Self::new(dims)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn classes(&self) -> usize {
        *self.dims.last().unwrap()
    }

    fn weight_name(l: usize) -> String {
        format!("W{l}")
    }

    fn bias_name(l: usize) -> String {
        format!("b{l}")
    }

    /// W ~ N(0, 1/fan_in), b = 0, insertion order W1, b1, W2, b2, ...
    pub fn init_params(&self, seed: u64) -> NamedTensorSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = NamedTensorSet::new();
        for l in 1..=self.layers() {
            let (nin, nout) = (self.dims[l - 1], self.dims[l]);
            let scale = 1.0 / (nin as f64).sqrt();
            let w: Vec<f32> = (0..nin * nout)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    (z * scale) as f32
                })
                .collect();
            set.insert(
                Self::weight_name(l),
                Tensor::new(vec![nin, nout], w).unwrap(),
            )
            .unwrap();
            set.insert(
                Self::bias_name(l),
                Tensor::new(vec![nout], vec![0.0; nout]).unwrap(),
            )
            .unwrap();
        }
        set
    }

    /// Recovers the architecture from a parameter set. The set must contain
    /// exactly W1..WL and b1..bL with a consistent dimension chain.
    pub fn from_params(set: &NamedTensorSet) -> Result<Self> {
        use std::collections::BTreeMap;
        let mut ws: BTreeMap<usize, &Tensor> = BTreeMap::new();
        let mut bs: BTreeMap<usize, &Tensor> = BTreeMap::new();
        for (name, t) in set.iter() {
            let (map, rest) = if let Some(r) = name.strip_prefix('W') {
                (&mut ws, r)
            } else if let Some(r) = name.strip_prefix('b') {
                (&mut bs, r)
            } else {
                return Err(Error::usage(format!(
                    "unexpected tensor {name:?}; expected W1..WL and b1..bL"
                )));
            };
            let idx: usize = rest
                .parse()
                .ok()
                .filter(|&i| i >= 1)
                .ok_or_else(|| Error::usage(format!("unexpected tensor {name:?}")))?;
            if map.insert(idx, t).is_some() {
                return Err(Error::usage(format!("layer {idx} appears twice")));
            }
        }
        let layers = ws.len();
        if layers == 0 {
            return Err(Error::usage("parameter set has no weight matrices"));
        }
        for l in 1..=layers {
            if !ws.contains_key(&l) {
                return Err(Error::usage(format!("missing tensor W{l}")));
            }
            if !bs.contains_key(&l) {
                return Err(Error::usage(format!("missing tensor b{l}")));
            }
        }
        if bs.len() != layers {
            return Err(Error::usage("bias layers do not match weight layers"));
        }
        let mut dims = Vec::with_capacity(layers + 1);
        for l in 1..=layers {
            let w = ws[&l];
            if w.shape().len() != 2 {
                return Err(Error::DimMismatch {
                    what: format!("W{l} must be rank 2, got rank {}", w.shape().len()),
                });
            }
            let b = bs[&l];
            if b.shape() != [w.shape()[1]] {
                return Err(Error::DimMismatch {
                    what: format!("b{l} must have shape [{}]", w.shape()[1]),
                });
            }
            if l == 1 {
                dims.push(w.shape()[0]);
            } else if dims[l - 1] != w.shape()[0] {
                return Err(Error::DimMismatch {
                    what: format!(
                        "W{l} expects {} inputs, previous layer emits {}",
                        w.shape()[0],
                        dims[l - 1]
                    ),
                });
            }
            dims.push(w.shape()[1]);
        }
        Self::new(dims)
    }

    /// Borrowed, shape-checked view of one parameter set.
    pub fn view<'a>(&'a self, params: &'a NamedTensorSet) -> Result<ModelView<'a>> {
        let mut weights = Vec::with_capacity(self.layers());
        let mut biases = Vec::with_capacity(self.layers());
        for l in 1..=self.layers() {
            let (nin, nout) = (self.dims[l - 1], self.dims[l]);
            let w = params
                .get(&Self::weight_name(l))
                .ok_or_else(|| Error::usage(format!("missing tensor W{l}")))?;
            if w.shape() != [nin, nout] {
                return Err(Error::DimMismatch {
                    what: format!("W{l} must have shape [{nin}, {nout}]"),
                });
            }
            let b = params
                .get(&Self::bias_name(l))
                .ok_or_else(|| Error::usage(format!("missing tensor b{l}")))?;
            if b.shape() != [nout] {
                return Err(Error::DimMismatch {
                    what: format!("b{l} must have shape [{nout}]"),
                });
            }
            weights.push(w.data());
            biases.push(b.data());
        }
        Ok(ModelView {
            dims: &self.dims,
            weights,
            biases,
        })
    }
}

pub struct ModelView<'a> {
    dims: &'a [usize],
    weights: Vec<&'a [f32]>,
    biases: Vec<&'a [f32]>,
}

impl ModelView<'_> {
    fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    fn layer_forward(&self, l: usize, input: &[f32], relu: bool) -> Vec<f32> {
        let (nin, nout) = (self.dims[l], self.dims[l + 1]);
        let w = self.weights[l];
        let mut out = self.biases[l].to_vec();
        for i in 0..nin {
            let xi = input[i];
            let row = &w[i * nout..(i + 1) * nout];
            for j in 0..nout {
                out[j] += xi * row[j];
            }
        }
        if relu {
            for v in &mut out {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        out
    }

    pub fn logits(&self, x: &[f32]) -> Vec<f32> {
        assert_eq!(x.len(), self.dims[0], "input width mismatch");
        let mut act = x.to_vec();
        let layers = self.layers();
        for l in 0..layers {
            act = self.layer_forward(l, &act, l + 1 < layers);
        }
        act
    }

    /// Post-ReLU activations of the last hidden layer, the representation
    /// routing operates on.
    pub fn feature(&self, x: &[f32]) -> Result<Vec<f32>> {
        let layers = self.layers();
        if layers < 2 {
            return Err(Error::usage(
                "feature extraction needs at least one hidden layer",
            ));
        }
        assert_eq!(x.len(), self.dims[0], "input width mismatch");
        let mut act = x.to_vec();
        for l in 0..layers - 1 {
            act = self.layer_forward(l, &act, true);
        }
        Ok(act)
    }
}

/// First index holding the maximum value.
pub(crate) fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOpts {
    pub lr: f32,
    pub epochs: usize,
    pub batch: usize,
}

impl From<&TrainConfig> for TrainOpts {
    fn from(c: &TrainConfig) -> Self {
        Self {
            lr: c.lr,
            epochs: c.epochs,
            batch: c.batch,
        }
    }
}

fn check_dataset(spec: &MlpSpec, data: &Dataset, what: &'static str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyInput { what });
    }
    if data.xs.len() != data.ys.len() {
        return Err(Error::DimMismatch {
            what: "dataset inputs and labels differ in length".to_string(),
        });
    }
    let input = spec.dims()[0];
    let classes = spec.classes();
    for (x, &y) in data.xs.iter().zip(&data.ys) {
        if x.len() != input {
            return Err(Error::DimMismatch {
                what: format!("sample has {} features, model expects {input}", x.len()),
            });
        }
        if y >= classes {
            return Err(Error::usage(format!(
                "label {y} out of range for {classes} classes"
            )));
        }
    }
    Ok(())
}

/// Minibatch SGD with softmax cross-entropy. Epoch order is reshuffled from
/// the given seed; updates run sequentially, so training is bit-deterministic.
pub fn train(
    spec: &MlpSpec,
    params: &mut NamedTensorSet,
    data: &Dataset,
    opts: &TrainOpts,
    seed: u64,
) -> Result<()> {
    check_dataset(spec, data, "training dataset")?;
    if opts.batch == 0 {
        return Err(Error::usage("batch size must be at least 1"));
    }
    if !opts.lr.is_finite() || opts.lr < 0.0 {
        return Err(Error::usage("learning rate must be finite and >= 0"));
    }
    let layers = spec.layers();
    let dims = spec.dims().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let mut gw: Vec<Vec<f64>> = (0..layers)
        .map(|l| vec![0.0; dims[l] * dims[l + 1]])
        .collect();
    let mut gb: Vec<Vec<f64>> = (0..layers).map(|l| vec![0.0; dims[l + 1]]).collect();

    for epoch in 0..opts.epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(opts.batch) {
            for g in gw.iter_mut().chain(gb.iter_mut()) {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            {
                let view = spec.view(params)?;
                for &idx in chunk {
                    let x = &data.xs[idx];
                    let y = data.ys[idx];
                    let mut acts: Vec<Vec<f32>> = Vec::with_capacity(layers + 1);
                    acts.push(x.clone());
                    for l in 0..layers {
                        let a = view.layer_forward(l, &acts[l], l + 1 < layers);
                        acts.push(a);
                    }
                    let logits = &acts[layers];
                    let maxv = logits
                        .iter()
                        .fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
                    let exps: Vec<f64> = logits.iter().map(|&v| (v as f64 - maxv).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    let mut delta: Vec<f64> = exps.iter().map(|&e| e / z).collect();
                    delta[y] -= 1.0;
                    for l in (0..layers).rev() {
                        let (nin, nout) = (dims[l], dims[l + 1]);
                        let input = &acts[l];
                        for i in 0..nin {
                            let xi = input[i] as f64;
                            if xi != 0.0 {
                                let grow = &mut gw[l][i * nout..(i + 1) * nout];
                                for j in 0..nout {
                                    grow[j] += xi * delta[j];
                                }
                            }
                        }
                        for j in 0..nout {
                            gb[l][j] += delta[j];
                        }
                        if l > 0 {
                            let w = view.weights[l];
                            let mut prev = vec![0.0f64; nin];
                            for (i, p) in prev.iter_mut().enumerate() {
                                // ReLU gate: post-activation > 0 iff pre-activation > 0.
                                if input[i] > 0.0 {
                                    let row = &w[i * nout..(i + 1) * nout];
                                    *p =
                                        row.iter().zip(&delta).map(|(&wv, &d)| wv as f64 * d).sum();
                                }
                            }
                            delta = prev;
                        }
                    }
                }
            }
            let scale = opts.lr as f64 / chunk.len() as f64;
            for l in 1..=layers {
                let w = params.get_mut(&MlpSpec::weight_name(l)).unwrap().data_mut();
                for (p, &g) in w.iter_mut().zip(&gw[l - 1]) {
                    *p = (*p as f64 - scale * g) as f32;
                }
                let b = params.get_mut(&MlpSpec::bias_name(l)).unwrap().data_mut();
                for (p, &g) in b.iter_mut().zip(&gb[l - 1]) {
                    *p = (*p as f64 - scale * g) as f32;
                }
            }
        }
        let finite = params
            .iter()
            .all(|(_, t)| t.data().iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Divergence {
                what: format!("non-finite parameters after epoch {epoch}"),
            });
        }
    }
    Ok(())
}

/// Fraction of samples whose argmax logit matches the label. Evaluation is a
/// parallel integer reduction, so the result is thread-count independent.
pub fn evaluate(spec: &MlpSpec, params: &NamedTensorSet, data: &Dataset) -> Result<f64> {
    check_dataset(spec, data, "evaluation dataset")?;
    let view = spec.view(params)?;
    let correct: u64 = data
        .xs
        .par_iter()
        .zip(data.ys.par_iter())
        .map(|(x, &y)| u64::from(argmax(&view.logits(x)) == y))
        .sum();
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_params() -> (MlpSpec, NamedTensorSet) {
        let spec = MlpSpec::new(vec![2, 2, 2]).unwrap();
        let mut set = NamedTensorSet::new();
        set.insert(
            "W1",
            Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, -1.0]).unwrap(),
        )
        .unwrap();
        set.insert("b1", Tensor::new(vec![2], vec![0.0, 0.5]).unwrap())
            .unwrap();
        set.insert(
            "W2",
            Tensor::new(vec![2, 2], vec![2.0, 1.0, 1.0, 1.0]).unwrap(),
        )
        .unwrap();
        set.insert("b2", Tensor::new(vec![2], vec![0.25, -0.25]).unwrap())
            .unwrap();
        (spec, set)
    }

    #[test]
    fn forward_matches_hand_computation() {
        let (spec, set) = worked_params();
        let view = spec.view(&set).unwrap();
        // h = relu([1*1 + 2*0, 1*0 + 2*(-1) + 0.5]) = relu([1, -1.5]) = [1, 0]
        assert_eq!(view.feature(&[1.0, 2.0]).unwrap(), vec![1.0, 0.0]);
        // logits = [1*2 + 0.25, 1*1 - 0.25]
        assert_eq!(view.logits(&[1.0, 2.0]), vec![2.25, 0.75]);
        assert_eq!(argmax(&view.logits(&[1.0, 2.0])), 0);
    }

    #[test]
    fn feature_requires_a_hidden_layer() {
        let spec = MlpSpec::new(vec![3, 2]).unwrap();
        let set = spec.init_params(0);
        let view = spec.view(&set).unwrap();
        assert!(view.feature(&[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn argmax_prefers_first_maximum() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[-1.0]), 0);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn init_is_seed_deterministic_with_zero_biases() {
        let spec = MlpSpec::new(vec![4, 8, 3]).unwrap();
        let a = spec.init_params(9);
        let b = spec.init_params(9);
        let bits = |s: &NamedTensorSet| -> Vec<u32> {
            s.iter()
                .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&spec.init_params(10)));
        assert!(a.get("b1").unwrap().data().iter().all(|&v| v == 0.0));
        assert!(a.get("W1").unwrap().data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn from_params_recovers_dims_and_rejects_malformed_sets() {
        let spec = MlpSpec::new(vec![5, 7, 3]).unwrap();
        let set = spec.init_params(1);
        assert_eq!(MlpSpec::from_params(&set).unwrap(), spec);

        let mut extra = set.clone();
        extra.insert("gamma", Tensor::vector(vec![1.0])).unwrap();
        assert!(MlpSpec::from_params(&extra).is_err());

        let mut missing = NamedTensorSet::new();
        missing
            .insert("W1", Tensor::new(vec![5, 7], vec![0.0; 35]).unwrap())
            .unwrap();
        assert!(MlpSpec::from_params(&missing).is_err());

        let mut chain = set.clone();
        chain
            .insert("W3", Tensor::new(vec![4, 2], vec![0.0; 8]).unwrap())
            .unwrap();
        chain
            .insert("b3", Tensor::new(vec![2], vec![0.0; 2]).unwrap())
            .unwrap();
        assert!(matches!(
            MlpSpec::from_params(&chain).unwrap_err(),
            Error::DimMismatch { .. }
        ));
    }

    fn blob_dataset(n_per: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for c in 0..2usize {
            let cx = if c == 0 { -3.0 } else { 3.0 };
            for _ in 0..n_per {
                xs.push(vec![
                    cx + rng.random_range(-0.3f32..0.3),
                    rng.random_range(-0.3f32..0.3),
                ]);
                ys.push(c);
            }
        }
        Dataset { xs, ys }
    }

    #[test]
    fn sgd_fits_separable_blobs() {
        let spec = MlpSpec::new(vec![2, 8, 2]).unwrap();
        let mut params = spec.init_params(3);
        let data = blob_dataset(50, 11);
        let opts = TrainOpts {
            lr: 0.1,
            epochs: 20,
            batch: 8,
        };
        train(&spec, &mut params, &data, &opts, 5).unwrap();
        let acc = evaluate(&spec, &params, &blob_dataset(50, 12)).unwrap();
        assert!(acc >= 0.99, "accuracy {acc}");
    }

    #[test]
    fn training_is_bit_deterministic() {
        let spec = MlpSpec::new(vec![2, 6, 2]).unwrap();
        let data = blob_dataset(20, 2);
        let opts = TrainOpts {
            lr: 0.05,
            epochs: 4,
            batch: 7,
        };
        let mut a = spec.init_params(1);
        let mut b = spec.init_params(1);
        train(&spec, &mut a, &data, &opts, 9).unwrap();
        train(&spec, &mut b, &data, &opts, 9).unwrap();
        let bits = |s: &NamedTensorSet| -> Vec<u32> {
            s.iter()
                .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_untouched() {
        let spec = MlpSpec::new(vec![2, 4, 2]).unwrap();
        let mut params = spec.init_params(4);
        let before: Vec<u32> = params
            .iter()
            .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect();
        let opts = TrainOpts {
            lr: 0.0,
            epochs: 3,
            batch: 4,
        };
        train(&spec, &mut params, &blob_dataset(10, 0), &opts, 0).unwrap();
        let after: Vec<u32> = params
            .iter()
            .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn absurd_learning_rate_reports_divergence() {
        let spec = MlpSpec::new(vec![2, 4, 2]).unwrap();
        let data = blob_dataset(10, 0);

        // Params can sit at ~1e18 without overflowing f32; Ok must mean
        // every parameter is still finite.
        let mut params = spec.init_params(4);
        let opts = TrainOpts {
            lr: 1e18,
            epochs: 4,
            batch: 4,
        };
        train(&spec, &mut params, &data, &opts, 0).unwrap();
        params.validate_finite().unwrap();

        // At 1e30 the layer products overflow and softmax turns NaN.
        let mut params = spec.init_params(4);
        let opts = TrainOpts {
            lr: 1e30,
            epochs: 4,
            batch: 4,
        };
        let err = train(&spec, &mut params, &data, &opts, 0).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn sgd_step_matches_finite_differences() {
        let spec = MlpSpec::new(vec![2, 3, 2]).unwrap();
        let params = spec.init_params(7);
        let data = blob_dataset(4, 3);
        let lr = 1e-3f32;

        let mean_loss = |set: &NamedTensorSet| -> f64 {
            let view = spec.view(set).unwrap();
            let mut total = 0.0f64;
            for (x, &y) in data.xs.iter().zip(&data.ys) {
                let logits = view.logits(x);
                let maxv = logits
                    .iter()
                    .fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
                let z: f64 = logits.iter().map(|&v| (v as f64 - maxv).exp()).sum();
                total += z.ln() + maxv - logits[y] as f64;
            }
            total / data.len() as f64
        };

        let mut stepped = params.clone();
        let opts = TrainOpts {
            lr,
            epochs: 1,
            batch: data.len(),
        };
        train(&spec, &mut stepped, &data, &opts, 0).unwrap();

        for name in ["W1", "b1", "W2", "b2"] {
            let n = params.get(name).unwrap().len();
            for i in 0..n {
                let before = params.get(name).unwrap().data()[i] as f64;
                let after = stepped.get(name).unwrap().data()[i] as f64;
                let g_step = (before - after) / lr as f64;

                let h = 1e-2f32;
                let mut plus = params.clone();
                plus.get_mut(name).unwrap().data_mut()[i] += h;
                let mut minus = params.clone();
                minus.get_mut(name).unwrap().data_mut()[i] -= h;
                let g_fd = (mean_loss(&plus) - mean_loss(&minus)) / (2.0 * h as f64);
                assert!(
                    (g_step - g_fd).abs() <= 1e-3 + 0.02 * g_fd.abs(),
                    "{name}[{i}]: step {g_step} vs fd {g_fd}"
                );
            }
        }
    }

    #[test]
    fn evaluate_validates_inputs() {
        let spec = MlpSpec::new(vec![2, 4, 2]).unwrap();
        let params = spec.init_params(0);
        let empty = Dataset {
            xs: vec![],
            ys: vec![],
        };
        assert!(matches!(
            evaluate(&spec, &params, &empty).unwrap_err(),
            Error::EmptyInput { .. }
        ));
        let bad_label = Dataset {
            xs: vec![vec![0.0, 0.0]],
            ys: vec![5],
        };
        assert!(evaluate(&spec, &params, &bad_label).is_err());
        let bad_width = Dataset {
            xs: vec![vec![0.0]],
            ys: vec![0],
        };
        assert!(matches!(
            evaluate(&spec, &params, &bad_width).unwrap_err(),
            Error::DimMismatch { .. }
        ));
    }
}
