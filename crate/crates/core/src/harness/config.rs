//! Flat key-value experiment configuration (TOML syntax) and the resolved
//! per-experiment settings.
//!
//! Every key is optional; absent keys take the defaults of the experiment
//! being run. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::ExperimentId;
use crate::nn::{Activation, LossKind, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    /// `Bernoulli(retain_p)^d`, identical to the dropout posterior.
    BernoulliP,
    /// `Bernoulli(0.5)^d`, uniform over all masks.
    Uniform,
}

/// Raw config file contents; `None` means "use the experiment default".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seeds: Option<Vec<u64>>,
    pub retain_p: Option<f64>,
    pub eps: Option<f64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub activation: Option<Activation>,
    pub loss: Option<LossKind>,
    pub n_per_class: Option<usize>,
    pub num_classes: Option<usize>,
    pub dim: Option<usize>,
    pub separation: Option<f64>,
    pub label_noise: Option<f64>,
    pub n_masks: Option<usize>,
    pub mc_factor: Option<usize>,
    pub n_inputs: Option<usize>,
    pub eps_grid: Option<Vec<f64>>,
    pub r_neighbors: Option<usize>,
    pub n_neighbors: Option<usize>,
    pub flip_k: Option<usize>,
    pub delta: Option<f64>,
    pub prior: Option<Prior>,
    pub widths: Option<Vec<usize>>,
    pub depths: Option<Vec<usize>>,
    pub norm_dim: Option<usize>,
    pub mnist_images: Option<PathBuf>,
    pub mnist_labels: Option<PathBuf>,
    pub mnist_limit: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let from_span = e.span().map(|r| {
                let start = text[..r.start.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
                let line = text[start..].lines().next().unwrap_or("");
                line.split('=')
                    .next()
                    .unwrap_or("")
                    .trim()
                    .trim_matches('"')
                    .to_string()
            });
            let field = e
                .message()
                .split('`')
                .nth(1)
                .map(str::to_string)
                .or(from_span)
                .filter(|f| !f.is_empty())
                .unwrap_or_else(|| "<document>".to_string());
            Error::config(field, e.message().trim().to_string())
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Values set in `other` win.
    pub fn overlay(mut self, other: ConfigFile) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            seeds,
            retain_p,
            eps,
            learning_rate,
            batch_size,
            epochs,
            hidden,
            activation,
            loss,
            n_per_class,
            num_classes,
            dim,
            separation,
            label_noise,
            n_masks,
            mc_factor,
            n_inputs,
            eps_grid,
            r_neighbors,
            n_neighbors,
            flip_k,
            delta,
            prior,
            widths,
            depths,
            norm_dim,
            mnist_images,
            mnist_labels,
            mnist_limit
        );
        self
    }
}

/// Fully resolved settings for one experiment run; serialized verbatim into
/// the report's `config_echo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub seeds: Vec<u64>,
    pub retain_p: f64,
    pub eps: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub loss: LossKind,
    pub n_per_class: usize,
    pub num_classes: usize,
    pub dim: usize,
    pub separation: f64,
    pub label_noise: f64,
    pub n_masks: usize,
    pub mc_factor: usize,
    pub n_inputs: Option<usize>,
    pub eps_grid: Vec<f64>,
    pub r_neighbors: usize,
    pub n_neighbors: usize,
    pub flip_k: usize,
    pub delta: f64,
    pub prior: Prior,
    pub widths: Vec<usize>,
    pub depths: Vec<usize>,
    pub norm_dim: usize,
    pub mnist_images: Option<PathBuf>,
    pub mnist_labels: Option<PathBuf>,
    pub mnist_limit: usize,
}

impl Settings {
    pub fn defaults(id: ExperimentId) -> Self {
        use ExperimentId::*;
        let linear = matches!(id, Lemma1 | Theorem1);
        let n_masks = match id {
            Lemma1 | Theorem1 | Theorem2 => 1000,
            Lemma2 => 10_000,
            Theorem3 => 300,
            Lemma3 | Corollary31 | Theorem5 => 100,
            Theorem4 | Theorem6 => 200,
        };
        Settings {
            seeds: (0..5).collect(),
            retain_p: 0.8,
            eps: 0.02,
            learning_rate: 0.1,
            batch_size: 128,
            epochs: 10,
            hidden: vec![32, 32],
            activation: if linear {
                Activation::Linear
            } else {
                Activation::Rectified
            },
            loss: LossKind::CrossEntropy,
            n_per_class: 1000,
            num_classes: 2,
            dim: 2,
            separation: if id == Lemma3 { 2.0 } else { 4.0 },
            label_noise: if id == Lemma3 { 0.1 } else { 0.0 },
            n_masks,
            mc_factor: 4,
            n_inputs: if id == Lemma3 { Some(200) } else { None },
            eps_grid: vec![-0.01, 0.0, 0.005, 0.01, 0.02, 0.05, 0.1],
            r_neighbors: 8,
            n_neighbors: 100,
            flip_k: 1,
            delta: 0.05,
            prior: Prior::BernoulliP,
            widths: vec![4, 8, 16, 32, 64],
            depths: vec![1, 2, 3],
            norm_dim: 1000,
            mnist_images: None,
            mnist_labels: None,
            mnist_limit: 4000,
        }
    }

    /// Defaults for `id` overridden by every key present in `file`, then
    /// validated.
    pub fn resolve(id: ExperimentId, file: &ConfigFile) -> Result<Self> {
        let mut s = Settings::defaults(id);
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = file.$f.clone() { s.$f = v; } )* };
        }
        set!(
            seeds,
            retain_p,
            eps,
            learning_rate,
            batch_size,
            epochs,
            hidden,
            activation,
            loss,
            n_per_class,
            num_classes,
            dim,
            separation,
            label_noise,
            n_masks,
            mc_factor,
            eps_grid,
            r_neighbors,
            n_neighbors,
            flip_k,
            delta,
            prior,
            widths,
            depths,
            norm_dim,
            mnist_limit
        );
        if file.n_inputs.is_some() {
            s.n_inputs = file.n_inputs;
        }
        s.mnist_images = file.mnist_images.clone();
        s.mnist_labels = file.mnist_labels.clone();
        if s.uses_mnist() && file.hidden.is_none() {
            s.hidden = vec![64];
        }
        s.validate(id)?;
        Ok(s)
    }

    pub fn uses_mnist(&self) -> bool {
        self.mnist_images.is_some() || self.mnist_labels.is_some()
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            retain_p: self.retain_p,
            seed,
            loss: self.loss,
        }
    }

    fn validate(&self, id: ExperimentId) -> Result<()> {
        let fail = |field: &str, msg: &str| Err(Error::config(field, msg));
        if self.seeds.is_empty() {
            return fail("seeds", "at least one seed required");
        }
        if !(self.retain_p > 0.0 && self.retain_p <= 1.0) {
            return fail("retain_p", "must be in (0, 1]");
        }
        if !self.eps.is_finite() {
            return fail("eps", "must be finite");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate", "must be > 0");
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be >= 1");
        }
        if self.hidden.contains(&0) {
            return fail("hidden", "layer widths must be >= 1");
        }
        if self.n_per_class == 0 || self.num_classes < 2 || self.dim == 0 {
            return fail("n_per_class", "need n_per_class >= 1, num_classes >= 2, dim >= 1");
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return fail("separation", "must be > 0");
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return fail("label_noise", "must be in [0, 1]");
        }
        if self.n_masks == 0 {
            return fail("n_masks", "must be >= 1");
        }
        if self.mc_factor < 2 {
            return fail("mc_factor", "must be >= 2");
        }
        if self.n_inputs == Some(0) {
            return fail("n_inputs", "must be >= 1");
        }
        if self.eps_grid.is_empty() || self.eps_grid.windows(2).any(|w| w[0] > w[1]) {
            return fail("eps_grid", "must be non-empty and sorted ascending");
        }
        if self.r_neighbors == 0 || self.n_neighbors == 0 {
            return fail("r_neighbors", "neighbor counts must be >= 1");
        }
        if self.flip_k == 0 {
            return fail("flip_k", "must be >= 1");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail("delta", "must be in (0, 1)");
        }
        if self.widths.is_empty() || self.depths.is_empty() || self.widths.contains(&0) || self.depths.contains(&0) {
            return fail("widths", "width and depth grids must be non-empty and positive");
        }
        if self.norm_dim == 0 {
            return fail("norm_dim", "must be >= 1");
        }
        if self.mnist_images.is_some() != self.mnist_labels.is_some() {
            return fail("mnist_images", "mnist_images and mnist_labels must be given together");
        }
        if self.mnist_limit < 2 {
            return fail("mnist_limit", "must be >= 2");
        }
        if matches!(id, ExperimentId::Lemma1) && self.activation != Activation::Linear {
            return fail("activation", "lemma1 requires linear activation");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_document() {
        let f = ConfigFile::parse("seeds = [1, 2]\nretain_p = 0.7\nactivation = \"linear\"\nprior = \"uniform\"\n")
            .unwrap();
        assert_eq!(f.seeds, Some(vec![1, 2]));
        assert_eq!(f.activation, Some(Activation::Linear));
        let s = Settings::resolve(ExperimentId::Theorem4, &f).unwrap();
        assert_eq!(s.retain_p, 0.7);
        assert_eq!(s.prior, Prior::Uniform);
        assert_eq!(s.n_masks, 200);
    }

    #[test]
    fn unknown_key_names_the_field() {
        match ConfigFile::parse("retain_q = 0.5\n") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "retain_q"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_mistyped_keys_name_the_field() {
        for text in ["eps = 0.1\neps = 0.2\n", "eps = \"big\"\n"] {
            match ConfigFile::parse(text) {
                Err(Error::Config { field, .. }) => assert_eq!(field, "eps", "{text}"),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn lemma1_rejects_rectified() {
        let f = ConfigFile {
            activation: Some(Activation::Rectified),
            ..ConfigFile::default()
        };
        match Settings::resolve(ExperimentId::Lemma1, &f) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "activation"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overlay_prefers_later_values() {
        let a = ConfigFile {
            seeds: Some(vec![0]),
            eps: Some(0.1),
            ..ConfigFile::default()
        };
        let b = ConfigFile {
            seeds: Some(vec![3, 4]),
            ..ConfigFile::default()
        };
        let c = a.overlay(b);
        assert_eq!(c.seeds, Some(vec![3, 4]));
        assert_eq!(c.eps, Some(0.1));
    }

    #[test]
    fn bad_values_rejected() {
        let f = ConfigFile {
            delta: Some(1.5),
            ..ConfigFile::default()
        };
        assert!(matches!(
            Settings::resolve(ExperimentId::Theorem4, &f),
            Err(Error::Config { .. })
        ));
    }
}
