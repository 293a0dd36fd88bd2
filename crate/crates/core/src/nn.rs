//! Dense feed-forward networks trained by SGD with one dropout mask per step.
//!
//! Masks gate weights and biases alike. There is no inverted-dropout
//! rescaling during training; weight scaling at evaluation time is the
//! separate [`crate::metrics::scaled_output`].

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::mask::{apply_mask, sample_mask, Mask, SeededRng};

/// Loss above which training is considered diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Rectified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    SquaredError,
}

#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Class(usize),
    Vector(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    n_in: usize,
    n_out: usize,
    /// Row-major `n_out x n_in`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    pub fn new(n_in: usize, n_out: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::Shape("layer dimensions must be positive".into()));
        }
        if weights.len() != n_in * n_out || bias.len() != n_out {
            return Err(Error::Shape(format!(
                "layer {n_in}->{n_out} needs {} weights and {n_out} biases, got {} and {}",
                n_in * n_out,
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("layer parameters must be finite".into()));
        }
        Ok(Layer {
            n_in,
            n_out,
            weights,
            bias,
        })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.n_in)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
    activation: Activation,
}

impl Network {
    pub fn new(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].n_out != pair[1].n_in {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].n_out,
                    i + 1,
                    pair[1].n_in
                )));
            }
        }
        Ok(Network { layers, activation })
    }

    /// Uniform `±sqrt(6 / (in + out))` initialization for layer sizes
    /// `[input, hidden.., output]`.
    pub fn init(sizes: &[usize], activation: Activation, rng: &mut SeededRng) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Shape("need at least input and output sizes".into()));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let limit = (6.0 / (n_in + n_out) as f64).sqrt();
                let weights = (0..n_in * n_out).map(|_| rng.random_range(-limit..=limit)).collect();
                let bias = (0..n_out).map(|_| rng.random_range(-limit..=limit)).collect();
                Layer::new(n_in, n_out, weights, bias)
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(layers, activation)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    /// Total parameter count `d`.
    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    /// Flattened parameters in mask order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("parameters must be finite".into()));
        }
        self.map_params(|i, _| params[i]);
        Ok(())
    }

    /// Rewrites every parameter through `f(flat_index, value)`.
    pub(crate) fn map_params(&mut self, mut f: impl FnMut(usize, f64) -> f64) {
        let mut i = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = f(i, *w);
                i += 1;
            }
        }
    }

    /// `f_{s·θ}`: every parameter multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Network {
        let mut out = self.clone();
        out.map_params(|_, w| w * s);
        out
    }

    fn act(&self, v: &mut [f64]) {
        if self.activation == Activation::Rectified {
            for x in v {
                *x = x.max(0.0);
            }
        }
    }

    /// Unchecked forward pass; callers validate `x`.
    pub(crate) fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut h = self.layers[0].apply(x);
        for l in &self.layers[1..] {
            self.act(&mut h);
            h = l.apply(&h);
        }
        h
    }

    pub(crate) fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input length {} but network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("input contains non-finite values".into()));
        }
        Ok(())
    }
}

/// Logits of `f_{θ⊙M}(x)`, or `f_θ(x)` when `mask` is `None`.
pub fn forward(net: &Network, x: &[f64], mask: Option<&Mask>) -> Result<Vec<f64>> {
    net.check_input(x)?;
    match mask {
        Some(m) => Ok(apply_mask(net, m)?.logits(x)),
        None => Ok(net.logits(x)),
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn one_hot(k: usize, class: usize) -> Vec<f64> {
    let mut t = vec![0.0; k];
    t[class] = 1.0;
    t
}

fn target_vector(logits: &[f64], target: Target<'_>) -> Result<Vec<f64>> {
    match target {
        Target::Class(c) if c < logits.len() => Ok(one_hot(logits.len(), c)),
        Target::Class(c) => Err(Error::Domain(format!(
            "class {c} out of range for {} outputs",
            logits.len()
        ))),
        Target::Vector(t) if t.len() == logits.len() => Ok(t.to_vec()),
        Target::Vector(t) => Err(Error::Shape(format!(
            "target length {} but {} outputs",
            t.len(),
            logits.len()
        ))),
    }
}

/// CrossEntropy: `-Σ t_k log softmax(z)_k` (a class target is one-hot).
/// SquaredError: mean over outputs of `(z_k - t_k)^2`.
pub fn loss(logits: &[f64], target: Target<'_>, kind: LossKind) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::Shape("empty logits".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("logits contain non-finite values".into()));
    }
    Ok(loss_and_delta(logits, target, kind)?.0)
}

/// Loss and its gradient with respect to the logits.
fn loss_and_delta(logits: &[f64], target: Target<'_>, kind: LossKind) -> Result<(f64, Vec<f64>)> {
    match (kind, target) {
        (LossKind::CrossEntropy, Target::Class(c)) => {
            if c >= logits.len() {
                return Err(Error::Domain(format!(
                    "class {c} out of range for {} outputs",
                    logits.len()
                )));
            }
            let ls = log_softmax(logits);
            let mut delta: Vec<f64> = ls.iter().map(|l| l.exp()).collect();
            delta[c] -= 1.0;
            Ok((-ls[c], delta))
        }
        _ => {
            let t = target_vector(logits, target)?;
            let k = logits.len() as f64;
            match kind {
                LossKind::CrossEntropy => {
                    let ls = log_softmax(logits);
                    let total: f64 = t.iter().sum();
                    let l = -t.iter().zip(&ls).map(|(t, l)| t * l).sum::<f64>();
                    let delta = ls.iter().zip(&t).map(|(l, t)| total * l.exp() - t).collect();
                    Ok((l, delta))
                }
                LossKind::SquaredError => {
                    let l = logits.iter().zip(&t).map(|(z, t)| (z - t).powi(2)).sum::<f64>() / k;
                    let delta = logits.iter().zip(&t).map(|(z, t)| 2.0 * (z - t) / k).collect();
                    Ok((l, delta))
                }
            }
        }
    }
}

/// Mean loss over `examples` and its gradient with respect to the flattened
/// parameters, evaluated at `θ⊙M` when a mask is given. Masked coordinates of
/// the gradient are zero.
pub fn loss_and_gradient(
    net: &Network,
    examples: &[(&[f64], Target<'_>)],
    kind: LossKind,
    mask: Option<&Mask>,
) -> Result<(f64, Vec<f64>)> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let masked;
    let eval = match mask {
        Some(m) => {
            masked = apply_mask(net, m)?;
            &masked
        }
        None => net,
    };
    let n_layers = eval.layers.len();
    let mut grads: Vec<(Vec<f64>, Vec<f64>)> = eval
        .layers
        .iter()
        .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
        .collect();
    let mut total = 0.0;

    for (x, target) in examples {
        eval.check_input(x)?;
        // inputs[l] is the input seen by layer l; pre[l] its pre-activation output
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut h = x.to_vec();
        for (i, l) in eval.layers.iter().enumerate() {
            let z = l.apply(&h);
            inputs.push(h);
            h = z.clone();
            if i + 1 < n_layers {
                eval.act(&mut h);
            }
            pre.push(z);
        }
        let (l, mut delta) = loss_and_delta(&h, *target, kind)?;
        total += l;

        for i in (0..n_layers).rev() {
            let layer = &eval.layers[i];
            let (gw, gb) = &mut grads[i];
            for (o, &dz) in delta.iter().enumerate() {
                gb[o] += dz;
                let row = &mut gw[o * layer.n_in..(o + 1) * layer.n_in];
                for (g, a) in row.iter_mut().zip(&inputs[i]) {
                    *g += dz * a;
                }
            }
            if i > 0 {
                let mut back = vec![0.0; layer.n_in];
                for (o, &dz) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (b, w) in back.iter_mut().zip(row) {
                        *b += w * dz;
                    }
                }
                if eval.activation == Activation::Rectified {
                    for (b, z) in back.iter_mut().zip(&pre[i - 1]) {
                        if *z <= 0.0 {
                            *b = 0.0;
                        }
                    }
                }
                delta = back;
            }
        }
    }

    let n = examples.len() as f64;
    let mut flat = Vec::with_capacity(net.num_params());
    for (gw, gb) in grads {
        flat.extend(gw.into_iter().map(|g| g / n));
        flat.extend(gb.into_iter().map(|g| g / n));
    }
    if let Some(m) = mask {
        for (i, g) in flat.iter_mut().enumerate() {
            if !m.get(i) {
                *g = 0.0;
            }
        }
    }
    Ok((total / n, flat))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub retain_p: f64,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            batch_size: 128,
            epochs: 10,
            retain_p: 0.8,
            seed: 0,
            loss: LossKind::CrossEntropy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Domain(format!(
                "learning_rate {} must be > 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch_size must be >= 1".into()));
        }
        if !(self.retain_p > 0.0 && self.retain_p <= 1.0) {
            return Err(Error::Domain(format!("retain_p {} must be in (0, 1]", self.retain_p)));
        }
        Ok(())
    }
}

/// Mini-batch SGD where every step draws a fresh `Bernoulli(retain_p)^d` mask;
/// dropped parameters are zero in the forward pass and unchanged by the
/// update.
pub fn train(net: &Network, data: &LabeledDataset, cfg: &TrainConfig, rng: &mut SeededRng) -> Result<Network> {
    run_sgd(net, data, cfg, rng, true)
}

/// Plain SGD with the same batching and RNG use as [`train`] but no masks.
pub fn train_without_dropout(
    net: &Network,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<Network> {
    run_sgd(net, data, cfg, rng, false)
}

fn run_sgd(
    net: &Network,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
    dropout: bool,
) -> Result<Network> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != net.input_dim() || data.num_classes() > net.output_dim() {
        return Err(Error::Shape(format!(
            "dataset ({} features, {} classes) incompatible with network {}->{}",
            data.dim(),
            data.num_classes(),
            net.input_dim(),
            net.output_dim()
        )));
    }
    let mut net = net.clone();
    let mut params = net.params();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            let examples: Vec<(&[f64], Target<'_>)> = batch
                .iter()
                .map(|&i| (data.input(i), Target::Class(data.label(i))))
                .collect();
            let mask = if dropout {
                Some(sample_mask(params.len(), cfg.retain_p, rng)?)
            } else {
                None
            };
            let (l, grad) = loss_and_gradient(&net, &examples, cfg.loss, mask.as_ref())?;
            if !l.is_finite() || l > DIVERGENCE_THRESHOLD {
                return Err(Error::TrainingDiverged { step, loss: l });
            }
            for (w, g) in params.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
            if params.iter().any(|w| !w.is_finite()) {
                return Err(Error::TrainingDiverged { step, loss: f64::NAN });
            }
            net.set_params(&params)?;
            step += 1;
        }
    }
    Ok(net)
}

/// Mean loss of `f_{θ⊙M}` over a dataset.
pub fn mean_loss(net: &Network, data: &LabeledDataset, kind: LossKind, mask: Option<&Mask>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let masked;
    let eval = match mask {
        Some(m) => {
            masked = apply_mask(net, m)?;
            &masked
        }
        None => net,
    };
    let mut total = 0.0;
    for i in 0..data.len() {
        let x = data.input(i);
        eval.check_input(x)?;
        total += loss(&eval.logits(x), Target::Class(data.label(i)), kind)?;
    }
    Ok(total / data.len() as f64)
}

pub fn accuracy(net: &Network, data: &LabeledDataset, mask: Option<&Mask>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for i in 0..data.len() {
        if argmax(&forward(net, data.input(i), mask)?) == data.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
