//! Seeded multi-seed experiment runner.
//!
//! [`run_experiment`] resolves nothing itself: it takes validated
//! [`Settings`], runs every seed (concurrently, each on its own RNG streams),
//! aggregates per-seed metrics, evaluates the experiment's pass predicate and
//! writes the report artifacts.

pub mod config;
mod experiments;
pub mod report;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use config::{ConfigFile, Prior, Settings};
pub use report::{aggregate_metrics, emit_report, Cell, Check, ExperimentReport, Format, Metadata, SeedMetrics, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Lemma1,
    Lemma2,
    Theorem1,
    Theorem2,
    Theorem3,
    Corollary31,
    Lemma3,
    Theorem4,
    Theorem5,
    Theorem6,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 10] = [
        ExperimentId::Lemma1,
        ExperimentId::Lemma2,
        ExperimentId::Theorem1,
        ExperimentId::Theorem2,
        ExperimentId::Theorem3,
        ExperimentId::Corollary31,
        ExperimentId::Lemma3,
        ExperimentId::Theorem4,
        ExperimentId::Theorem5,
        ExperimentId::Theorem6,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Lemma1 => "lemma1",
            ExperimentId::Lemma2 => "lemma2",
            ExperimentId::Theorem1 => "theorem1",
            ExperimentId::Theorem2 => "theorem2",
            ExperimentId::Theorem3 => "theorem3",
            ExperimentId::Corollary31 => "corollary31",
            ExperimentId::Lemma3 => "lemma3",
            ExperimentId::Theorem4 => "theorem4",
            ExperimentId::Theorem5 => "theorem5",
            ExperimentId::Theorem6 => "theorem6",
        }
    }

    pub fn claim(self) -> &'static str {
        match self {
            ExperimentId::Lemma1 => {
                "Lemma 1: for a linear network the mean output over Bernoulli(p) masks equals the output of the p-scaled network"
            }
            ExperimentId::Lemma2 => "Lemma 2: the expected squared norm of a masked parameter vector is p times its squared norm",
            ExperimentId::Theorem1 => {
                "Theorem 1: the full trained network approximates the ensemble of its dropout subnetworks"
            }
            ExperimentId::Theorem2 => {
                "Theorem 2: generalizing subnetworks are abundant and every subnetwork has a generalizing Hamming-1 neighbor"
            }
            ExperimentId::Theorem3 => {
                "Theorem 3: contribution scores vary smoothly over the Hamming-1 subnetwork graph (small Dirichlet energy)"
            }
            ExperimentId::Corollary31 => {
                "Corollary 3.1: generalizing subnetworks form one large connected cluster in the Hamming-1 graph"
            }
            ExperimentId::Lemma3 => {
                "Lemma 3: ensemble predictive entropy is lower on correctly classified inputs than on misclassified ones"
            }
            ExperimentId::Theorem4 => {
                "Theorem 4: the PAC-Bayes bound with a Bernoulli mask prior upper-bounds the expected test loss of the dropout posterior"
            }
            ExperimentId::Theorem5 => {
                "Theorem 5: effective resistance between subnetworks is at most weakly related to their score difference"
            }
            ExperimentId::Theorem6 => {
                "Theorem 6: the fraction of generalizing subnetworks grows with width and saturates"
            }
        }
    }

    fn valid_list() -> String {
        Self::ALL.iter().map(|id| id.as_str()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownExperiment {
                given: s.to_string(),
                valid: Self::valid_list(),
            })
    }
}

/// Runs `id` over `settings.seeds`, writes artifacts for `formats` into
/// `out_dir` and returns the report.
///
/// Training divergence on a seed is recorded in that seed's entry and fails
/// the run; any other error aborts it.
pub fn run_experiment(
    id: ExperimentId,
    settings: &Settings,
    out_dir: &Path,
    formats: &[Format],
) -> Result<ExperimentReport> {
    let mut report = build_report(id, settings)?;
    report.artifacts = report.artifact_names(formats);
    emit_report(&report, out_dir, formats)?;
    Ok(report)
}

/// Everything [`run_experiment`] does except writing files.
pub fn build_report(id: ExperimentId, settings: &Settings) -> Result<ExperimentReport> {
    let runs: Vec<experiments::SeedRun> = settings
        .seeds
        .par_iter()
        .map(|&seed| experiments::run_seed(id, settings, seed))
        .collect::<Result<_>>()?;

    let per_seed: Vec<SeedMetrics> = runs
        .iter()
        .map(|r| SeedMetrics {
            seed: r.seed,
            metrics: r.metrics.clone(),
            error: r.error.clone(),
        })
        .collect();

    let mut tables: Vec<Table> = Vec::new();
    let mut documents = Vec::new();
    for run in runs {
        for t in run.tables {
            match tables.iter_mut().find(|x| x.name == t.name) {
                Some(existing) => existing.rows.extend(t.rows),
                None => tables.push(t),
            }
        }
        documents.extend(run.documents);
    }

    let mut checks = Vec::new();
    let failed: Vec<String> = per_seed
        .iter()
        .filter_map(|s| s.error.as_ref().map(|e| format!("seed {}: {e}", s.seed)))
        .collect();
    checks.push(Check {
        name: "all seeds completed".into(),
        passed: failed.is_empty(),
        detail: if failed.is_empty() {
            "ok".into()
        } else {
            failed.join("; ")
        },
    });
    checks.extend(experiments::checks(id, settings, &per_seed));
    let pass = checks.iter().all(|c| c.passed);

    Ok(ExperimentReport {
        experiment_id: id.as_str().to_string(),
        claim: id.claim().to_string(),
        config_echo: settings.clone(),
        aggregates: aggregate_metrics(&per_seed),
        per_seed,
        checks,
        pass,
        notes: experiments::notes(id, settings),
        artifacts: Vec::new(),
        metadata: Metadata::now(),
        tables,
        documents,
    })
}
