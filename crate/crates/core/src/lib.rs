//! Dropout as a random walk over the hypercube of binary subnetwork masks.
//!
//! Trains small dense networks with per-step parameter masks, scores masked
//! subnetworks by their train/test loss gap, and analyzes the Hamming-1
//! graph those subnetworks form (Laplacian smoothness, clusters, effective
//! resistance) alongside PAC-Bayes and counting bounds. [`harness`] runs the
//! seeded, multi-seed experiments and writes CSV/JSON reports.

pub mod bounds;
pub mod data;
pub mod error;
pub mod graph;
pub mod harness;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod stats;

pub use bounds::{
    binary_entropy, epsilon_decay, kl_bernoulli_masks, log2_binomial, neighbor_density_check, pac_bayes_bound,
    width_depth_sweep, GrowthPoint, PacBayesReport,
};
pub use data::{load_idx, make_gaussian_blobs, LabeledDataset, Split};
pub use error::{Error, Result};
pub use graph::{
    build_graph, dirichlet_energy, effective_resistance, generalizing_clusters, laplacian, laplacian_pseudoinverse,
    resistance_oracle, resistance_score_correlation, ResistanceResult, SubnetGraph,
};
pub use mask::{apply_mask, flip_neighbors, hamming, sample_mask, Mask, SeededRng};
pub use metrics::{
    contribution_score, ensemble_average_output, ensemble_stats, lemma1_gap, masked_norm_stats, predictive_entropy,
    scaled_output, ContributionRecord, EnsembleStats,
};
pub use nn::{forward, loss, train, Activation, LossKind, Network, Target, TrainConfig};
pub use stats::{aggregate_seeds, SeedAggregate};
