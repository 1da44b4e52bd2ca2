//! Layered spiking networks with backpropagation through time.
//!
//! Activations move through the network layer by layer with time folded into
//! the batch axis (`[T * B, ...]`, row `t * B + b`). Only spiking layers
//! iterate over `t`; every other layer treats the steps as extra samples.

mod layers;
mod loss;
mod spiking;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::{format_architecture, parse_architecture, LayerSpec, NeuronKind};
use crate::error::{Error, Result};
use crate::neuron::{model_for, NeuronModel, NeuronParams, NeuronRegistry, ParamOverrides, SpikeMode};
use crate::real::Real;
use crate::tensor::Tensor;

pub use layers::{spiking_dropout_mask, AvgPool1d, BatchNorm, BatchNormCache, Conv2d, Linear, MaxPool2d};
pub use loss::{argmax, firing_rates, mse_rate_loss, voting_decode};
pub use spiking::{SpikingCache, SpikingLayer};

pub const DEFAULT_DROPOUT: f64 = 0.5;

/// The neuron model behind each architecture token.
#[derive(Clone, Debug)]
pub struct NeuronBank {
    models: BTreeMap<NeuronKind, Arc<dyn NeuronModel>>,
}

impl NeuronBank {
    /// Registry defaults for every token.
    pub fn builtin() -> Self {
        Self::configured(&BTreeMap::new(), None).expect("builtin neuron defaults are valid")
    }

    /// Registry defaults with per-model overrides keyed by registry name
    /// (`lif`, `sit`, ...). `tau` applies wherever an override does not set it.
    pub fn configured(
        overrides: &BTreeMap<String, ParamOverrides>,
        tau: Option<f64>,
    ) -> Result<Self> {
        if let Some(unknown) = overrides
            .keys()
            .find(|k| !NeuronKind::ALL.iter().any(|kind| kind.registry_name() == k.as_str()))
        {
            return Err(Error::UnknownModel(unknown.clone()));
        }
        let registry = NeuronRegistry::builtin();
        let mut models = BTreeMap::new();
        for kind in NeuronKind::ALL {
            let mut ov = overrides
                .get(kind.registry_name())
                .cloned()
                .unwrap_or_default();
            if ov.tau.is_none() {
                ov.tau = tau;
            }
            models.insert(kind, registry.create_with(kind.registry_name(), &ov)?);
        }
        Ok(Self { models })
    }

    pub fn from_params(params: &BTreeMap<NeuronKind, NeuronParams>) -> Result<Self> {
        let mut bank = Self::builtin();
        for (&kind, p) in params {
            bank.insert(kind, model_for(kind.registry_name(), p.clone())?);
        }
        Ok(bank)
    }

    pub fn get(&self, kind: NeuronKind) -> Arc<dyn NeuronModel> {
        Arc::clone(&self.models[&kind])
    }

    pub fn insert(&mut self, kind: NeuronKind, model: Arc<dyn NeuronModel>) {
        self.models.insert(kind, model);
    }

    pub fn params(&self) -> BTreeMap<NeuronKind, NeuronParams> {
        self.models
            .iter()
            .map(|(&k, m)| (k, m.params().clone()))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub enum Layer<F: Real> {
    Conv(Conv2d<F>),
    BatchNorm(BatchNorm<F>),
    Spiking(SpikingLayer),
    MaxPool(MaxPool2d),
    Dropout { rate: f64 },
    Linear(Linear<F>),
    Voting(AvgPool1d),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions {
    /// Batch statistics in normalization and active dropout.
    pub train: bool,
    pub spike_mode: SpikeMode,
    /// Seeds the dropout masks of this pass.
    pub seed: u64,
}

impl ForwardOptions {
    pub fn eval() -> Self {
        Self {
            train: false,
            spike_mode: SpikeMode::Hard,
            seed: 0,
        }
    }

    pub fn train(seed: u64) -> Self {
        Self {
            train: true,
            spike_mode: SpikeMode::Hard,
            seed,
        }
    }

    pub fn with_spike_mode(mut self, mode: SpikeMode) -> Self {
        self.spike_mode = mode;
        self
    }
}

#[derive(Clone, Debug)]
enum LayerCache<F: Real> {
    Input(Tensor<F>),
    BatchNorm(BatchNormCache<F>),
    Spiking(SpikingCache<F>),
    MaxPool(Vec<u32>),
    Dropout(Option<Tensor<F>>),
    Voting,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct Caches<F: Real> {
    timesteps: usize,
    batch: usize,
    layers: Vec<LayerCache<F>>,
}

impl<F: Real> Caches<F> {
    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Spike traces `[T * B, ...]` of layer `index` if it is a spiking layer.
    pub fn spikes(&self, index: usize) -> Option<&[F]> {
        match self.layers.get(index)? {
            LayerCache::Spiking(c) => Some(&c.s),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ForwardPass<F: Real> {
    /// `[T, B, features]`.
    pub output: Tensor<F>,
    pub caches: Caches<F>,
}

/// One gradient tensor per network parameter, in [`Network::params`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet<F: Real> {
    pub tensors: Vec<Tensor<F>>,
}

impl<F: Real> GradientSet<F> {
    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data())
            .fold(0.0, |m, v| m.max(v.as_f64().abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }
}

#[derive(Clone, Debug)]
pub struct Network<F: Real = f32> {
    specs: Vec<LayerSpec>,
    input_shape: Vec<usize>,
    layers: Vec<Layer<F>>,
    /// Per-sample output shape of every layer.
    shapes: Vec<Vec<usize>>,
    neurons: NeuronBank,
    dropout_rate: f64,
}

fn spatial(shape: &[usize], index: usize, spec: &LayerSpec) -> Result<[usize; 3]> {
    match *shape {
        [c, h, w] => Ok([c, h, w]),
        _ => Err(Error::InvalidParameter(format!(
            "layer {index} ({spec}) needs a [C, H, W] input, got {shape:?}"
        ))),
    }
}

impl<F: Real> Network<F> {
    /// Builds a network with freshly initialized parameters.
    ///
    /// `input_shape` is the per-sample frame shape, `[C, H, W]` or
    /// `[features]`. `dropout_rate` is used by `DP` layers without a rate.
    pub fn build(
        specs: &[LayerSpec],
        input_shape: &[usize],
        neurons: &NeuronBank,
        dropout_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "invalid input shape {input_shape:?}"
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidParameter(format!(
                "dropout rate must lie in [0, 1), got {dropout_rate}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        let mut shapes = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let layer = match *spec {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                } => {
                    let conv = Conv2d::new(spatial(&shape, i, spec)?, out_channels, kernel, stride, &mut rng)?;
                    shape = conv.out_shape().to_vec();
                    Layer::Conv(conv)
                }
                LayerSpec::BatchNorm => Layer::BatchNorm(BatchNorm::new(shape[0])),
                LayerSpec::Spiking(kind) => Layer::Spiking(SpikingLayer::new(kind, neurons.get(kind))),
                LayerSpec::MaxPool { kernel, stride } => {
                    let pool = MaxPool2d::new(spatial(&shape, i, spec)?, kernel, stride)?;
                    shape = pool.out_shape().to_vec();
                    Layer::MaxPool(pool)
                }
                LayerSpec::Dropout(rate) => {
                    let rate = rate.unwrap_or(dropout_rate);
                    if !(0.0..1.0).contains(&rate) {
                        return Err(Error::InvalidParameter(format!(
                            "dropout rate must lie in [0, 1), got {rate}"
                        )));
                    }
                    Layer::Dropout { rate }
                }
                LayerSpec::FullyConnected { features } => {
                    let fc = Linear::new(shape.iter().product(), features, &mut rng)?;
                    shape = vec![features];
                    Layer::Linear(fc)
                }
                LayerSpec::AvgPoolVoting { kernel, stride } => {
                    let pool = AvgPool1d::new(shape.iter().product(), kernel, stride)?;
                    shape = vec![pool.out_features()];
                    Layer::Voting(pool)
                }
            };
            layers.push(layer);
            shapes.push(shape.clone());
        }
        Ok(Self {
            specs: specs.to_vec(),
            input_shape: input_shape.to_vec(),
            layers,
            shapes,
            neurons: neurons.clone(),
            dropout_rate,
        })
    }

    pub fn from_architecture(
        architecture: &str,
        input_shape: &[usize],
        neurons: &NeuronBank,
        dropout_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        Self::build(&parse_architecture(architecture)?, input_shape, neurons, dropout_rate, seed)
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn architecture(&self) -> String {
        format_architecture(&self.specs)
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-sample output shape of layer `index`.
    pub fn layer_shape(&self, index: usize) -> Option<&[usize]> {
        self.shapes.get(index).map(Vec::as_slice)
    }

    pub fn output_features(&self) -> usize {
        self.shapes
            .last()
            .unwrap_or(&self.input_shape)
            .iter()
            .product()
    }

    pub fn neurons(&self) -> &NeuronBank {
        &self.neurons
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    /// At least one SIT-family layer and one LIF layer.
    pub fn is_hybrid(&self) -> bool {
        let has = |pred: fn(NeuronKind) -> bool| {
            self.specs
                .iter()
                .any(|s| matches!(s, LayerSpec::Spiking(k) if pred(*k)))
        };
        has(|k| matches!(k, NeuronKind::Sit | NeuronKind::SitBursting)) && has(|k| k == NeuronKind::Lif)
    }

    pub fn params(&self) -> Vec<&Tensor<F>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => out.extend([&c.weight, &c.bias]),
                Layer::BatchNorm(b) => out.extend([&b.gamma, &b.beta]),
                Layer::Linear(l) => out.extend([&l.weight, &l.bias]),
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => out.extend([&mut c.weight, &mut c.bias]),
                Layer::BatchNorm(b) => out.extend([&mut b.gamma, &mut b.beta]),
                Layer::Linear(l) => out.extend([&mut l.weight, &mut l.bias]),
                _ => {}
            }
        }
        out
    }

    /// `"<layer>.<name>"` for every entry of [`Network::params`].
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let names: &[&str] = match layer {
                Layer::Conv(_) | Layer::Linear(_) => &["weight", "bias"],
                Layer::BatchNorm(_) => &["gamma", "beta"],
                _ => &[],
            };
            out.extend(names.iter().map(|n| format!("{i}.{n}")));
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Running normalization statistics, mean then variance per layer.
    pub fn buffers(&self) -> Vec<&Tensor<F>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::BatchNorm(b) = layer {
                out.extend([&b.running_mean, &b.running_var]);
            }
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Layer::BatchNorm(b) = layer {
                out.extend([&mut b.running_mean, &mut b.running_var]);
            }
        }
        out
    }

    /// The same network in another element type.
    pub fn cast<G: Real>(&self) -> Network<G> {
        let layers = self
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Conv(c) => Layer::Conv(c.cast()),
                Layer::BatchNorm(b) => Layer::BatchNorm(b.cast()),
                Layer::Spiking(s) => Layer::Spiking(s.clone()),
                Layer::MaxPool(p) => Layer::MaxPool(*p),
                Layer::Dropout { rate } => Layer::Dropout { rate: *rate },
                Layer::Linear(l) => Layer::Linear(l.cast()),
                Layer::Voting(v) => Layer::Voting(*v),
            })
            .collect();
        Network {
            specs: self.specs.clone(),
            input_shape: self.input_shape.clone(),
            layers,
            shapes: self.shapes.clone(),
            neurons: self.neurons.clone(),
            dropout_rate: self.dropout_rate,
        }
    }

    fn check_frames(&self, frames: &Tensor<F>) -> Result<(usize, usize)> {
        let shape = frames.shape();
        if shape.len() != self.input_shape.len() + 2 || shape[2..] != self.input_shape[..] {
            let mut expected = vec![shape.first().copied().unwrap_or(0), shape.get(1).copied().unwrap_or(0)];
            expected.extend_from_slice(&self.input_shape);
            return Err(Error::ShapeMismatch {
                layer: 0,
                expected,
                actual: shape.to_vec(),
            });
        }
        let (t, b) = (shape[0], shape[1]);
        if t == 0 {
            return Err(Error::InvalidParameter("T must be at least 1".into()));
        }
        Ok((t, b))
    }

    /// Runs the first `stop` layers; returns the activation and, if asked,
    /// the caches of those layers.
    fn run(
        &self,
        frames: &Tensor<F>,
        opts: ForwardOptions,
        stop: usize,
        keep: bool,
    ) -> Result<(Tensor<F>, Caches<F>)> {
        let (timesteps, batch) = self.check_frames(frames)?;
        let n = timesteps * batch;
        let mut shape = vec![n];
        shape.extend_from_slice(&self.input_shape);
        let mut x = frames.clone().reshape(shape)?;
        let mut caches = Vec::with_capacity(if keep { stop } else { 0 });
        for (i, layer) in self.layers.iter().enumerate().take(stop) {
            let (y, cache) = match layer {
                Layer::Conv(conv) => {
                    let y = conv.forward(&x);
                    (y, LayerCache::Input(x))
                }
                Layer::BatchNorm(bn) => {
                    let (y, c) = bn.forward(&x, opts.train);
                    (y, LayerCache::BatchNorm(c))
                }
                Layer::Spiking(s) => {
                    let (y, c) = s.forward(&x, timesteps, opts.spike_mode);
                    (y, LayerCache::Spiking(c))
                }
                Layer::MaxPool(p) => {
                    let (y, arg) = p.forward(&x);
                    (y, LayerCache::MaxPool(arg))
                }
                Layer::Dropout { rate } => {
                    if opts.train && *rate > 0.0 {
                        let per = x.row_len();
                        let seed = opts.seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                        let mask = spiking_dropout_mask::<F>(*rate, &[batch, per], seed)?;
                        let mut y = x;
                        for (r, row) in y.data_mut().chunks_mut(per).enumerate() {
                            let m = &mask.data()[(r % batch) * per..][..per];
                            row.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
                        }
                        (y, LayerCache::Dropout(Some(mask)))
                    } else {
                        (x, LayerCache::Dropout(None))
                    }
                }
                Layer::Linear(fc) => {
                    let flat = x.reshape(vec![n, fc.in_features()])?;
                    let y = fc.forward(&flat);
                    (y, LayerCache::Input(flat))
                }
                Layer::Voting(v) => {
                    let per = x.row_len();
                    let flat = x.reshape(vec![n, per])?;
                    (v.forward(&flat), LayerCache::Voting)
                }
            };
            if cfg!(debug_assertions) {
                if let Some(bad) = y.data().iter().find(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        context: format!("output of layer {i} ({})", self.specs[i]),
                        value: bad.as_f64(),
                    });
                }
            }
            x = y;
            if keep {
                caches.push(cache);
            }
        }
        Ok((
            x,
            Caches {
                timesteps,
                batch,
                layers: caches,
            },
        ))
    }

    /// Runs a `[T, B, ...input_shape]` frame sequence through the network.
    /// Spiking state starts from rest on every call.
    pub fn forward_sequence(&self, frames: &Tensor<F>, opts: ForwardOptions) -> Result<ForwardPass<F>> {
        let (y, caches) = self.run(frames, opts, self.layers.len(), true)?;
        let output = y.reshape(vec![caches.timesteps, caches.batch, self.output_features()])?;
        Ok(ForwardPass { output, caches })
    }

    /// Output of layer `layer` as `[T * B, ...]`, without keeping caches.
    pub fn forward_to(&self, frames: &Tensor<F>, opts: ForwardOptions, layer: usize) -> Result<Tensor<F>> {
        if layer >= self.layers.len() {
            return Err(Error::InvalidParameter(format!(
                "layer {layer} out of range for {} layers",
                self.layers.len()
            )));
        }
        Ok(self.run(frames, opts, layer + 1, false)?.0)
    }

    /// Folds the batch statistics of a training pass into the running
    /// normalization estimates.
    pub fn commit_batch_statistics(&mut self, caches: &Caches<F>) {
        for (layer, cache) in self.layers.iter_mut().zip(&caches.layers) {
            if let (Layer::BatchNorm(bn), LayerCache::BatchNorm(c)) = (layer, cache) {
                if let Some((mean, var)) = &c.batch_stats {
                    bn.update_running(mean, var);
                }
            }
        }
    }

    /// Gradients of the loss with respect to every parameter, given
    /// `dL/d output` for every step (`[T, B, features]`).
    pub fn backward_bptt(&self, caches: &Caches<F>, loss_grad: &Tensor<F>) -> Result<GradientSet<F>> {
        if caches.layers.len() != self.layers.len() {
            return Err(Error::MissingCache(format!(
                "{} of {} layers cached",
                caches.layers.len(),
                self.layers.len()
            )));
        }
        let (t, b) = (caches.timesteps, caches.batch);
        let expected = vec![t, b, self.output_features()];
        if loss_grad.shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                layer: self.layers.len(),
                expected,
                actual: loss_grad.shape().to_vec(),
            });
        }
        let n = t * b;
        let first_param = self
            .layers
            .iter()
            .position(|l| matches!(l, Layer::Conv(_) | Layer::BatchNorm(_) | Layer::Linear(_)));
        let mut per_layer: Vec<Vec<Tensor<F>>> = vec![Vec::new(); self.layers.len()];
        let Some(first_param) = first_param else {
            return Ok(GradientSet { tensors: Vec::new() });
        };
        let mut g = loss_grad.clone().reshape(vec![n, self.output_features()])?;
        for i in (first_param..self.layers.len()).rev() {
            let mut in_shape = vec![n];
            in_shape.extend_from_slice(if i == 0 { &self.input_shape } else { &self.shapes[i - 1] });
            let need_input = i > first_param;
            let grad_in = match (&self.layers[i], &caches.layers[i]) {
                (Layer::Conv(conv), LayerCache::Input(x)) => {
                    let (dx, dw, db) = conv.backward(x, &g, need_input);
                    per_layer[i] = vec![dw, db];
                    dx
                }
                (Layer::Linear(fc), LayerCache::Input(x)) => {
                    let (dx, dw, db) = fc.backward(x, &g, need_input);
                    per_layer[i] = vec![dw, db];
                    dx
                }
                (Layer::BatchNorm(bn), LayerCache::BatchNorm(c)) => {
                    let (dx, dgamma, dbeta) = bn.backward(c, &g);
                    per_layer[i] = vec![dgamma, dbeta];
                    Some(dx)
                }
                (Layer::Spiking(s), LayerCache::Spiking(c)) => Some(s.backward(c, &g, t)),
                (Layer::MaxPool(p), LayerCache::MaxPool(arg)) => Some(p.backward(arg, &g)),
                (Layer::Dropout { .. }, LayerCache::Dropout(mask)) => {
                    if let Some(mask) = mask {
                        let per = g.row_len();
                        for (r, row) in g.data_mut().chunks_mut(per).enumerate() {
                            let m = &mask.data()[(r % b) * per..][..per];
                            row.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
                        }
                    }
                    Some(g)
                }
                (Layer::Voting(v), LayerCache::Voting) => {
                    Some(v.backward(&g, &[n, in_shape[1..].iter().product()]))
                }
                _ => return Err(Error::MissingCache(format!("layer {i} cache does not match its kind"))),
            };
            if !need_input {
                break;
            }
            g = grad_in
                .expect("input gradient requested")
                .reshape(in_shape)?;
        }
        Ok(GradientSet {
            tensors: per_layer.into_iter().flatten().collect(),
        })
    }
}

/// Repeats a static `[B, ...]` batch at every step, giving `[T, B, ...]`.
pub fn repeat_frames<F: Real>(images: &Tensor<F>, timesteps: usize) -> Tensor<F> {
    let mut shape = vec![timesteps];
    shape.extend_from_slice(images.shape());
    Tensor::new(shape, images.data().repeat(timesteps)).expect("repeated frames")
}
