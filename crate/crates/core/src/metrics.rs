//! Per-subnetwork and ensemble quantities: contribution scores, the
//! weight-scaling identity for linear nets, the masked-norm shrinkage,
//! ensemble-vs-full-model agreement and predictive entropy.
//!
//! Ensemble reductions sum mask contributions in the order the masks are
//! given, so results are bitwise reproducible regardless of thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::mask::{apply_mask, sample_mask, Mask, SeededRng};
use crate::nn::{argmax, log_softmax, mean_loss, softmax, Activation, LossKind, Network};

/// Masks processed per parallel batch in ensemble reductions.
const MASK_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionRecord {
    pub mask: Mask,
    pub train_loss: f64,
    pub test_loss: f64,
    /// `test_loss - train_loss`
    pub score: f64,
}

/// `C(f) = mean test loss − mean train loss` of `f_{θ⊙m}` under cross-entropy.
pub fn contribution_score(
    net: &Network,
    m: &Mask,
    train: &LabeledDataset,
    test: &LabeledDataset,
) -> Result<ContributionRecord> {
    let masked = apply_mask(net, m)?;
    let train_loss = mean_loss(&masked, train, LossKind::CrossEntropy, None)?;
    let test_loss = mean_loss(&masked, test, LossKind::CrossEntropy, None)?;
    let record = ContributionRecord {
        mask: m.clone(),
        train_loss,
        test_loss,
        score: test_loss - train_loss,
    };
    if !(train_loss.is_finite() && test_loss.is_finite()) {
        return Err(Error::Numeric(format!("non-finite loss for mask {m}")));
    }
    Ok(record)
}

/// [`contribution_score`] for each mask, in input order.
pub fn score_masks(
    net: &Network,
    masks: &[Mask],
    train: &LabeledDataset,
    test: &LabeledDataset,
) -> Result<Vec<ContributionRecord>> {
    masks
        .par_iter()
        .map(|m| contribution_score(net, m, train, test))
        .collect()
}

fn check_inputs(net: &Network, masks: &[Mask], xs: &[&[f64]]) -> Result<()> {
    if masks.is_empty() {
        return Err(Error::Domain("need at least one mask".into()));
    }
    if let Some(m) = masks.iter().find(|m| m.len() != net.num_params()) {
        return Err(Error::Shape(format!(
            "mask length {} but network has {} parameters",
            m.len(),
            net.num_params()
        )));
    }
    xs.iter().try_for_each(|x| net.check_input(x))
}

/// Mean over masks of `f(logits of f_{θ⊙M}(x))`, one vector per input.
fn mask_mean<F>(net: &Network, masks: &[Mask], xs: &[&[f64]], f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    check_inputs(net, masks, xs)?;
    let mut acc: Option<Vec<Vec<f64>>> = None;
    for chunk in masks.chunks(MASK_CHUNK) {
        let per_mask: Vec<Vec<Vec<f64>>> = chunk
            .par_iter()
            .map(|m| {
                let masked = apply_mask(net, m).expect("mask length checked");
                xs.iter().map(|x| f(&masked.logits(x))).collect()
            })
            .collect();
        for values in per_mask {
            match acc.as_mut() {
                None => acc = Some(values),
                Some(acc) => {
                    for (a, v) in acc.iter_mut().zip(values) {
                        for (a, v) in a.iter_mut().zip(v) {
                            *a += v;
                        }
                    }
                }
            }
        }
    }
    let t = masks.len() as f64;
    let mut acc = acc.expect("at least one mask");
    for v in acc.iter_mut().flatten() {
        *v /= t;
    }
    Ok(acc)
}

/// `(1/T) Σ_t f_{θ⊙M_t}(x)` in the logit domain.
pub fn ensemble_average_output(net: &Network, masks: &[Mask], x: &[f64]) -> Result<Vec<f64>> {
    Ok(mask_mean(net, masks, &[x], |z| z.to_vec())?.remove(0))
}

/// Forward pass of `f_{p·θ}`.
pub fn scaled_output(net: &Network, p: f64, x: &[f64]) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p = {p} outside [0, 1]")));
    }
    net.check_input(x)?;
    Ok(net.scaled(p).logits(x))
}

/// Per-example `Δ(x)`: mean over output coordinates of
/// `|ensemble average − scaled output|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Gap {
    pub per_example: Vec<f64>,
    pub mean: f64,
}

fn require_linear(net: &Network) -> Result<()> {
    if net.activation() != Activation::Linear {
        return Err(Error::Precondition(
            "the weight-scaling identity holds only for linear activations".into(),
        ));
    }
    Ok(())
}

fn gap_from(ensemble: &[Vec<f64>], scaled: &Network, xs: &[&[f64]]) -> Lemma1Gap {
    let per_example: Vec<f64> = ensemble
        .iter()
        .zip(xs)
        .map(|(avg, x)| {
            let s = scaled.logits(x);
            avg.iter().zip(&s).map(|(a, b)| (a - b).abs()).sum::<f64>() / s.len() as f64
        })
        .collect();
    let mean = per_example.iter().sum::<f64>() / per_example.len().max(1) as f64;
    Lemma1Gap { per_example, mean }
}

pub fn lemma1_gap(net: &Network, masks: &[Mask], p: f64, xs: &[&[f64]]) -> Result<Lemma1Gap> {
    require_linear(net)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p = {p} outside [0, 1]")));
    }
    if xs.is_empty() {
        return Err(Error::Domain("need at least one input".into()));
    }
    let ensemble = mask_mean(net, masks, xs, |z| z.to_vec())?;
    Ok(gap_from(&ensemble, &net.scaled(p), xs))
}

/// Largest `d` accepted by [`expected_output_enumerated`].
pub const MAX_ENUMERATION_D: usize = 20;

/// `E_M[f_{θ⊙M}(x)]` under `Bernoulli(p)^d`, by weighting all `2^d` masks with
/// `p^{|M|} (1−p)^{d−|M|}`.
pub fn expected_output_enumerated(net: &Network, p: f64, x: &[f64]) -> Result<Vec<f64>> {
    let d = net.num_params();
    if d > MAX_ENUMERATION_D {
        return Err(Error::Domain(format!(
            "enumeration limited to d <= {MAX_ENUMERATION_D}, got {d}"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p = {p} outside [0, 1]")));
    }
    net.check_input(x)?;
    let mut acc = vec![0.0; net.output_dim()];
    for index in 0..(1u64 << d) {
        let m = Mask::from_index(d, index);
        let ones = m.count_ones() as i32;
        let w = p.powi(ones) * (1.0 - p).powi(d as i32 - ones);
        if w == 0.0 {
            continue;
        }
        for (a, z) in acc.iter_mut().zip(apply_mask(net, &m)?.logits(x)) {
            *a += w * z;
        }
    }
    Ok(acc)
}

/// [`lemma1_gap`] with the exact Bernoulli expectation in place of sampling.
pub fn lemma1_gap_enumerated(net: &Network, p: f64, xs: &[&[f64]]) -> Result<Lemma1Gap> {
    require_linear(net)?;
    let ensemble = xs
        .iter()
        .map(|x| expected_output_enumerated(net, p, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(gap_from(&ensemble, &net.scaled(p), xs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    /// Sample mean of `‖θ⊙M‖²`.
    pub empirical_mean: f64,
    /// `p‖θ‖²`
    pub theoretical: f64,
}

impl NormStats {
    pub fn relative_error(&self) -> f64 {
        (self.empirical_mean - self.theoretical).abs() / self.theoretical.abs()
    }
}

pub fn masked_norm_stats(theta: &[f64], p: f64, n_samples: usize, rng: &mut SeededRng) -> Result<NormStats> {
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be at least 1".into()));
    }
    if theta.is_empty() {
        return Err(Error::Domain("theta must be non-empty".into()));
    }
    let squares: Vec<f64> = theta.iter().map(|t| t * t).collect();
    let mut total = 0.0;
    for _ in 0..n_samples {
        let m = sample_mask(theta.len(), p, rng)?;
        total += squares
            .iter()
            .enumerate()
            .filter(|(i, _)| m.get(*i))
            .map(|(_, s)| s)
            .sum::<f64>();
    }
    Ok(NormStats {
        empirical_mean: total / n_samples as f64,
        theoretical: p * squares.iter().sum::<f64>(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub mse_logits: f64,
    pub kl_softmax: f64,
    pub match_rate: f64,
}

fn kl_from_logits(p_logits: &[f64], q_logits: &[f64]) -> f64 {
    let lp = log_softmax(p_logits);
    let lq = log_softmax(q_logits);
    let kl: f64 = lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum();
    kl.max(0.0)
}

/// Compares the full model with the mask-averaged logits over `data`.
pub fn ensemble_stats(net: &Network, masks: &[Mask], data: &LabeledDataset) -> Result<EnsembleStats> {
    let xs: Vec<&[f64]> = data.inputs().iter().map(Vec::as_slice).collect();
    let ensemble = mask_mean(net, masks, &xs, |z| z.to_vec())?;
    let (mut sq, mut kl, mut matches) = (0.0, 0.0, 0usize);
    for (x, ens) in xs.iter().zip(&ensemble) {
        let full = net.logits(x);
        sq += full.iter().zip(ens).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / full.len() as f64;
        kl += kl_from_logits(&full, ens);
        if argmax(&full) == argmax(ens) {
            matches += 1;
        }
    }
    let n = xs.len() as f64;
    Ok(EnsembleStats {
        mse_logits: sq / n,
        kl_softmax: kl / n,
        match_rate: matches as f64 / n,
    })
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(dist: &[f64]) -> f64 {
    -dist.iter().filter(|&&q| q > 0.0).map(|&q| q * q.ln()).sum::<f64>()
}

fn softmax_with_entropy(z: &[f64]) -> Vec<f64> {
    let mut s = softmax(z);
    let h = entropy(&s);
    s.push(h);
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveEntropy {
    /// Entropy of the mask-averaged softmax.
    pub mean_softmax_entropy: f64,
    /// Mean over masks of each subnetwork's softmax entropy.
    pub per_mask_entropy_mean: f64,
}

fn predictive_entropies(net: &Network, masks: &[Mask], xs: &[&[f64]]) -> Result<Vec<PredictiveEntropy>> {
    let k = net.output_dim();
    Ok(mask_mean(net, masks, xs, softmax_with_entropy)?
        .into_iter()
        .map(|v| PredictiveEntropy {
            mean_softmax_entropy: entropy(&v[..k]),
            per_mask_entropy_mean: v[k],
        })
        .collect())
}

pub fn predictive_entropy(net: &Network, masks: &[Mask], x: &[f64]) -> Result<PredictiveEntropy> {
    Ok(predictive_entropies(net, masks, &[x])?.remove(0))
}

/// Mean over output coordinates of the across-mask variance of the logits.
///
/// A proxy for the entropy of the raw subnetwork outputs; the softmax
/// estimator above is the measured quantity.
pub fn output_variance(net: &Network, masks: &[Mask], x: &[f64]) -> Result<f64> {
    let k = net.output_dim();
    let moments = mask_mean(net, masks, &[x], |z| {
        z.iter().copied().chain(z.iter().map(|v| v * v)).collect()
    })?
    .remove(0);
    Ok((0..k)
        .map(|i| (moments[k + i] - moments[i] * moments[i]).max(0.0))
        .sum::<f64>()
        / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySplit {
    pub correct: Option<f64>,
    pub incorrect: Option<f64>,
    pub n_correct: usize,
    pub n_incorrect: usize,
}

/// Mean predictive entropy over inputs the full model classifies correctly
/// and incorrectly. An empty side is `None`.
pub fn entropy_split_by_correctness(net: &Network, masks: &[Mask], data: &LabeledDataset) -> Result<EntropySplit> {
    let xs: Vec<&[f64]> = data.inputs().iter().map(Vec::as_slice).collect();
    let entropies = predictive_entropies(net, masks, &xs)?;
    let (mut sum_c, mut n_c, mut sum_i, mut n_i) = (0.0, 0usize, 0.0, 0usize);
    for (i, h) in entropies.iter().enumerate() {
        if argmax(&net.logits(xs[i])) == data.label(i) {
            sum_c += h.mean_softmax_entropy;
            n_c += 1;
        } else {
            sum_i += h.mean_softmax_entropy;
            n_i += 1;
        }
    }
    Ok(EntropySplit {
        correct: (n_c > 0).then(|| sum_c / n_c as f64),
        incorrect: (n_i > 0).then(|| sum_i / n_i as f64),
        n_correct: n_c,
        n_incorrect: n_i,
    })
}
