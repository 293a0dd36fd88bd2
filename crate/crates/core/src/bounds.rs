//! PAC-Bayes bounds over the dropout mask distribution, sampled proxies for
//! the density of generalizing subnetworks, and the binomial/entropy
//! counting used for mask-space growth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::mask::{flip_neighbors, sample_mask, Mask, SeededRng};
use crate::metrics::{contribution_score, score_masks, ContributionRecord};
use crate::nn::{train, Activation, Network, TrainConfig};

/// `KL(Bern(q)^d ‖ Bern(π)^d)` in nats.
pub fn kl_bernoulli_masks(q_p: f64, prior_p: f64, d: usize) -> Result<f64> {
    for (name, v) in [("q_p", q_p), ("prior_p", prior_p)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("{name} = {v} outside [0, 1]")));
        }
    }
    if q_p == prior_p {
        return Ok(0.0);
    }
    if prior_p == 0.0 || prior_p == 1.0 {
        return Err(Error::Domain(format!(
            "KL is infinite: prior {prior_p} is degenerate and posterior {q_p} differs"
        )));
    }
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    let per_bit = term(q_p, prior_p) + term(1.0 - q_p, 1.0 - prior_p);
    Ok(d as f64 * per_bit.max(0.0))
}

/// `sqrt((KL + ln(1/δ)) / (2n))`
pub fn pac_bayes_slack(kl_nats: f64, n_train: usize, delta: f64) -> f64 {
    ((kl_nats + (1.0 / delta).ln()) / (2.0 * n_train as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacBayesReport {
    pub train_loss_mean: f64,
    pub test_loss_mean: f64,
    pub kl_nats: f64,
    pub delta: f64,
    pub n_train: usize,
    pub bound: f64,
    pub satisfied: bool,
}

pub fn pac_bayes_from_means(
    train_loss_mean: f64,
    test_loss_mean: f64,
    kl_nats: f64,
    n_train: usize,
    delta: f64,
) -> Result<PacBayesReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta {delta} outside (0, 1)")));
    }
    if n_train == 0 {
        return Err(Error::Domain("n_train must be at least 1".into()));
    }
    if kl_nats.is_nan() || kl_nats < 0.0 {
        return Err(Error::Domain(format!("KL {kl_nats} must be non-negative")));
    }
    let bound = train_loss_mean + pac_bayes_slack(kl_nats, n_train, delta);
    Ok(PacBayesReport {
        train_loss_mean,
        test_loss_mean,
        kl_nats,
        delta,
        n_train,
        bound,
        satisfied: test_loss_mean <= bound,
    })
}

/// Bound on the expected test loss of the mask posterior from sampled
/// subnetworks.
pub fn pac_bayes_bound(
    records: &[ContributionRecord],
    kl_nats: f64,
    n_train: usize,
    delta: f64,
) -> Result<PacBayesReport> {
    if records.is_empty() {
        return Err(Error::Domain("need at least one record".into()));
    }
    let n = records.len() as f64;
    let train = records.iter().map(|r| r.train_loss).sum::<f64>() / n;
    let test = records.iter().map(|r| r.test_loss).sum::<f64>() / n;
    pac_bayes_from_means(train, test, kl_nats, n_train, delta)
}

/// Fraction of records with `score < eps` for each grid value.
pub fn epsilon_decay(records: &[ContributionRecord], eps_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if eps_grid.is_empty() {
        return Err(Error::Domain("empty epsilon grid".into()));
    }
    if eps_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Domain("epsilon grid must be sorted ascending".into()));
    }
    if records.is_empty() {
        return Err(Error::Domain("need at least one record".into()));
    }
    let n = records.len() as f64;
    Ok(eps_grid
        .iter()
        .map(|&eps| {
            let k = records.iter().filter(|r| r.score < eps).count();
            (eps, k as f64 / n)
        })
        .collect())
}

/// Fraction of records with at least one of `r` sampled Hamming-1 neighbors
/// scoring below `eps`.
pub fn neighbor_density_check(
    net: &Network,
    records: &[ContributionRecord],
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
    eps: f64,
    r: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    if r == 0 {
        return Err(Error::Domain("r must be at least 1".into()));
    }
    if records.is_empty() {
        return Err(Error::Domain("need at least one record".into()));
    }
    let neighborhoods = records
        .iter()
        .map(|rec| {
            let r = r.min(rec.mask.len());
            flip_neighbors(&rec.mask, 1, r, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let hits = neighborhoods
        .par_iter()
        .map(|nbrs| -> Result<bool> {
            for m in nbrs {
                if contribution_score(net, m, train_set, test_set)?.score < eps {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / records.len() as f64)
}

/// `H(p)` in bits, with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let h = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    h(p) + h(1.0 - p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Log2Binomial {
    /// `log2 C(d, k)`
    pub exact: f64,
    /// `d · H(k/d)`
    pub entropy_estimate: f64,
}

/// `log2 C(d, k) = Σ_{i=1..k} log2((d − k + i) / i)`.
pub fn log2_binomial(d: usize, k: usize) -> Result<Log2Binomial> {
    if k > d {
        return Err(Error::Domain(format!("k = {k} exceeds d = {d}")));
    }
    let k_small = k.min(d - k);
    let exact = (1..=k_small)
        .map(|i| ((d - k_small + i) as f64 / i as f64).ln())
        .sum::<f64>()
        / std::f64::consts::LN_2;
    let entropy_estimate = if d == 0 {
        0.0
    } else {
        d as f64 * binary_entropy(k as f64 / d as f64)
    };
    Ok(Log2Binomial {
        exact,
        entropy_estimate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthPoint {
    pub width: usize,
    pub depth: usize,
    pub d: usize,
    pub n_sampled: usize,
    pub n_generalizing: usize,
    pub fraction: f64,
    pub seed: u64,
    /// Training failure for this cell, if any.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepSpec<'a> {
    pub widths: &'a [usize],
    pub depths: &'a [usize],
    pub activation: Activation,
    pub eps: f64,
    pub n_masks: usize,
}

/// Trains one MLP per `(width, depth)` cell and reports the fraction of
/// `n_masks` sampled subnetworks with `score < eps`. Cells run concurrently,
/// each on its own RNG streams; output is ordered by `(width, depth)`.
pub fn width_depth_sweep(
    spec: &SweepSpec<'_>,
    base_cfg: &TrainConfig,
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
) -> Result<Vec<GrowthPoint>> {
    if spec.widths.is_empty() || spec.depths.is_empty() {
        return Err(Error::Domain("width and depth grids must be non-empty".into()));
    }
    if spec.n_masks == 0 {
        return Err(Error::Domain("n_masks must be at least 1".into()));
    }
    base_cfg.validate()?;
    let mut cells: Vec<(usize, usize)> = spec
        .widths
        .iter()
        .flat_map(|&w| spec.depths.iter().map(move |&dp| (w, dp)))
        .collect();
    cells.sort_unstable();
    cells.dedup();

    cells
        .par_iter()
        .enumerate()
        .map(|(cell, &(width, depth))| {
            let stream = 1_000 + 4 * cell as u64;
            let mut sizes = vec![train_set.dim()];
            sizes.extend(std::iter::repeat_n(width, depth));
            sizes.push(train_set.num_classes());
            let net = Network::init(&sizes, spec.activation, &mut SeededRng::new(base_cfg.seed, stream))?;
            let d = net.num_params();
            let mut point = GrowthPoint {
                width,
                depth,
                d,
                n_sampled: spec.n_masks,
                n_generalizing: 0,
                fraction: 0.0,
                seed: base_cfg.seed,
                error: None,
            };
            let trained = match train(
                &net,
                train_set,
                base_cfg,
                &mut SeededRng::new(base_cfg.seed, stream + 1),
            ) {
                Ok(t) => t,
                Err(e) => {
                    point.error = Some(e.to_string());
                    return Ok(point);
                }
            };
            let mut rng = SeededRng::new(base_cfg.seed, stream + 2);
            let masks = (0..spec.n_masks)
                .map(|_| sample_mask(d, base_cfg.retain_p, &mut rng))
                .collect::<Result<Vec<Mask>>>()?;
            let records = score_masks(&trained, &masks, train_set, test_set)?;
            point.n_generalizing = records.iter().filter(|r| r.score < spec.eps).count();
            point.fraction = point.n_generalizing as f64 / point.n_sampled as f64;
            Ok(point)
        })
        .collect()
}
