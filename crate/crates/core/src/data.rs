//! Labeled datasets: seeded Gaussian blobs and the MNIST IDX format.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::SeededRng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    split: Split,
}

impl LabeledDataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if inputs.len() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        let dim = inputs[0].len();
        if dim == 0 || inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::Shape("inputs must share a positive dimension".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Domain(format!("label {bad} >= num_classes {num_classes}")));
        }
        if inputs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("dataset contains non-finite inputs".into()));
        }
        Ok(LabeledDataset {
            inputs,
            labels,
            num_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// The first `n` examples (or all of them).
    pub fn take(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        LabeledDataset::new(
            self.inputs[..n].to_vec(),
            self.labels[..n].to_vec(),
            self.num_classes,
            self.split,
        )
    }

    /// Reassigns a `fraction` of labels, chosen uniformly without
    /// replacement, to a different uniformly drawn class.
    pub fn with_label_noise(&self, fraction: f64, rng: &mut SeededRng) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Domain(format!("noise fraction {fraction} outside [0, 1]")));
        }
        if self.num_classes < 2 {
            return Err(Error::Domain("label noise needs at least 2 classes".into()));
        }
        let n_flip = (fraction * self.len() as f64).round() as usize;
        let mut labels = self.labels.clone();
        for i in rand::seq::index::sample(rng, self.len(), n_flip) {
            let shift = rng.random_range(1..self.num_classes);
            labels[i] = (labels[i] + shift) % self.num_classes;
        }
        LabeledDataset::new(self.inputs.clone(), labels, self.num_classes, self.split)
    }

    /// Seeded shuffle, then the first half becomes train and the rest test.
    pub fn split_half(&self, rng: &mut SeededRng) -> Result<(Self, Self)> {
        if self.len() < 2 {
            return Err(Error::InsufficientData("need at least 2 examples to split".into()));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(rng);
        let n_train = self.len() / 2;
        let pick = |idx: &[usize], split| {
            LabeledDataset::new(
                idx.iter().map(|&i| self.inputs[i].clone()).collect(),
                idx.iter().map(|&i| self.labels[i]).collect(),
                self.num_classes,
                split,
            )
        };
        Ok((
            pick(&order[..n_train], Split::Train)?,
            pick(&order[n_train..], Split::Test)?,
        ))
    }
}

/// Class `c` is centered at `separation · e_{c mod dim}` with unit isotropic
/// noise; the pooled points are split 50/50 into train and test by `seed`.
pub fn make_gaussian_blobs(
    n_per_class: usize,
    num_classes: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if dim < 1 {
        return Err(Error::Domain("dim must be at least 1".into()));
    }
    if n_per_class < 1 || num_classes < 1 {
        return Err(Error::Domain("n_per_class and num_classes must be at least 1".into()));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::Domain(format!("separation {separation} must be > 0")));
    }
    let mut rng = SeededRng::new(seed, 0);
    let mut inputs = Vec::with_capacity(n_per_class * num_classes);
    let mut labels = Vec::with_capacity(n_per_class * num_classes);
    for c in 0..num_classes {
        for _ in 0..n_per_class {
            let mut x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            x[c % dim] += separation;
            inputs.push(x);
            labels.push(c);
        }
    }
    let pooled = LabeledDataset::new(inputs, labels, num_classes, Split::Train)?;
    pooled.split_half(&mut rng.split(1))
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Length(format!("{what}: header ends at byte {}", bytes.len())))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses an IDX image file and its label file. Pixels are scaled by 1/255
/// and flattened row-major.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    limit: Option<usize>,
) -> Result<LabeledDataset> {
    let images = read_file(images_path.as_ref())?;
    let labels = read_file(labels_path.as_ref())?;
    parse_idx(&images, &labels, limit)
}

pub fn parse_idx(images: &[u8], labels: &[u8], limit: Option<usize>) -> Result<LabeledDataset> {
    let magic = read_u32(images, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            observed: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let magic = read_u32(labels, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            observed: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let n_images = read_u32(images, 4, "images")? as usize;
    let rows = read_u32(images, 8, "images")? as usize;
    let cols = read_u32(images, 12, "images")? as usize;
    let n_labels = read_u32(labels, 4, "labels")? as usize;
    if n_images != n_labels {
        return Err(Error::Consistency(format!("{n_images} images but {n_labels} labels")));
    }
    let pixels = rows * cols;
    let need_images = 16 + n_images * pixels;
    if images.len() < need_images {
        return Err(Error::Length(format!(
            "images file has {} bytes, header promises {need_images}",
            images.len()
        )));
    }
    if labels.len() < 8 + n_labels {
        return Err(Error::Length(format!(
            "labels file has {} bytes, header promises {}",
            labels.len(),
            8 + n_labels
        )));
    }
    let n = limit.map_or(n_images, |l| l.min(n_images));
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let inputs: Vec<Vec<f64>> = images[16..16 + n * pixels]
        .chunks_exact(pixels)
        .map(|img| img.iter().map(|&b| b as f64 / 255.0).collect())
        .collect();
    let label_vec: Vec<usize> = labels[8..8 + n].iter().map(|&b| b as usize).collect();
    let num_classes = label_vec.iter().max().map_or(1, |m| m + 1).max(10);
    LabeledDataset::new(inputs, label_vec, num_classes, Split::Train)
}

/// Encodes `(images, labels)` as IDX byte buffers. Inputs are rounded to
/// bytes via `round(v · 255)`.
pub fn encode_idx(data: &LabeledDataset, rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if rows * cols != data.dim() {
        return Err(Error::Shape(format!(
            "{rows}x{cols} does not match input dimension {}",
            data.dim()
        )));
    }
    if data.num_classes() > 256 {
        return Err(Error::Domain("IDX labels are single bytes".into()));
    }
    let n = data.len() as u32;
    let mut images = Vec::with_capacity(16 + data.len() * data.dim());
    for word in [IDX_IMAGES_MAGIC, n, rows as u32, cols as u32] {
        images.extend_from_slice(&word.to_be_bytes());
    }
    for x in data.inputs() {
        for &v in x {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("pixel {v} outside [0, 1]")));
            }
            images.push((v * 255.0).round() as u8);
        }
    }
    let mut labels = Vec::with_capacity(8 + data.len());
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&n.to_be_bytes());
    labels.extend(data.labels().iter().map(|&l| l as u8));
    Ok((images, labels))
}

pub fn write_idx(
    data: &LabeledDataset,
    rows: usize,
    cols: usize,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let (images, labels) = encode_idx(data, rows, cols)?;
    fs::write(images_path.as_ref(), images).map_err(|e| Error::io(images_path.as_ref(), e))?;
    fs::write(labels_path.as_ref(), labels).map_err(|e| Error::io(labels_path.as_ref(), e))?;
    Ok(())
}
