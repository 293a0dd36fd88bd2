use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use subnet_walk::harness::{run_experiment, ConfigFile, ExperimentId, Format, Settings};

/// Run dropout-subnetwork experiments and write CSV/JSON reports.
///
/// Exits 0 when every requested experiment passes, 1 when any fails its
/// acceptance checks, 2 on usage, configuration or I/O errors.
#[derive(Debug, Parser)]
#[command(name = "subnet-walk", version)]
struct Cli {
    /// Experiment id, a comma-separated list of ids, or `all`.
    experiment: String,

    /// TOML config file; keys left out take the experiment's defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory. With several experiments each gets a subdirectory.
    #[arg(long)]
    out: PathBuf,

    /// Comma-separated seeds, overriding the config file.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    /// Comma-separated output formats.
    #[arg(long, value_delimiter = ',', default_value = "csv,json")]
    format: Vec<Format>,

    /// IDX image file; switches the data source from blobs to IDX.
    #[arg(long, requires = "mnist_labels")]
    mnist_images: Option<PathBuf>,

    /// IDX label file.
    #[arg(long, requires = "mnist_images")]
    mnist_labels: Option<PathBuf>,
}

fn parse_ids(spec: &str) -> subnet_walk::Result<Vec<ExperimentId>> {
    if spec == "all" {
        return Ok(ExperimentId::ALL.to_vec());
    }
    let mut ids = Vec::new();
    for part in spec.split(',') {
        let id: ExperimentId = part.trim().parse()?;
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    Ok(ids)
}

fn thread_cap() -> Result<Option<usize>, String> {
    match std::env::var("SUBNET_WALK_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(format!("SUBNET_WALK_THREADS must be a positive integer, got `{v}`")),
        },
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    if let Some(n) = thread_cap()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    let ids = parse_ids(&cli.experiment).map_err(|e| e.to_string())?;
    let mut file = match &cli.config {
        Some(path) => ConfigFile::load(path).map_err(|e| e.to_string())?,
        None => ConfigFile::default(),
    };
    file = file.overlay(ConfigFile {
        seeds: cli.seeds.clone(),
        mnist_images: cli.mnist_images.clone(),
        mnist_labels: cli.mnist_labels.clone(),
        ..ConfigFile::default()
    });

    let settings: Vec<(ExperimentId, Settings)> = ids
        .iter()
        .map(|&id| Settings::resolve(id, &file).map(|s| (id, s)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;

    let mut all_pass = true;
    for (id, s) in &settings {
        let dir = if settings.len() == 1 {
            cli.out.clone()
        } else {
            cli.out.join(id.as_str())
        };
        let report = run_experiment(*id, s, &dir, &cli.format).map_err(|e| format!("{id}: {e}"))?;
        let passed = report.checks.iter().filter(|c| c.passed).count();
        println!(
            "{id}: {} ({passed}/{} checks)",
            if report.pass { "PASS" } else { "FAIL" },
            report.checks.len()
        );
        for c in report.checks.iter().filter(|c| !c.passed) {
            println!("  failed: {} ({})", c.name, c.detail);
        }
        all_pass &= report.pass;
    }
    Ok(all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
