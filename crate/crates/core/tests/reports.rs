use std::fs;

use subnet_walk::harness::{
    build_report, emit_report, run_experiment, ConfigFile, ExperimentId, ExperimentReport, Format, Settings,
};
use subnet_walk::stats::aggregate_seeds;
use subnet_walk::Error;

fn small(id: ExperimentId, extra: &str) -> Settings {
    let base = ConfigFile::parse(
        "seeds = [0, 1, 2]\nn_per_class = 100\nepochs = 3\nn_masks = 40\nn_neighbors = 12\nnorm_dim = 50\n",
    )
    .unwrap();
    Settings::resolve(id, &base.overlay(ConfigFile::parse(extra).unwrap())).unwrap()
}

fn read_header(path: &std::path::Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn json_round_trip_reproduces_every_field() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(
        ExperimentId::Theorem4,
        &small(ExperimentId::Theorem4, ""),
        dir.path(),
        &[Format::Json],
    )
    .unwrap();
    let text = fs::read_to_string(dir.path().join("theorem4.json")).unwrap();
    let parsed = ExperimentReport::from_json(&text).unwrap();
    let mut expected = report.clone();
    expected.tables.clear();
    expected.documents.clear();
    assert_eq!(parsed, expected);
}

#[test]
fn stored_aggregates_match_recomputation() {
    let report = build_report(ExperimentId::Lemma2, &small(ExperimentId::Lemma2, "")).unwrap();
    for (key, agg) in &report.aggregates {
        let values: Vec<f64> = report.per_seed.iter().filter_map(|s| s.metrics[key]).collect();
        let again = aggregate_seeds(&values).unwrap();
        assert!((again.mean - agg.mean).abs() <= 1e-12, "{key}");
        assert!((again.std.unwrap() - agg.std.unwrap()).abs() <= 1e-12, "{key}");
        assert!((again.ci95.unwrap() - agg.ci95.unwrap()).abs() <= 1e-12, "{key}");
    }
}

#[test]
fn csv_headers_follow_documented_order() {
    let dir = tempfile::tempdir().unwrap();
    let formats = [Format::Csv, Format::Json];
    run_experiment(
        ExperimentId::Theorem5,
        &small(ExperimentId::Theorem5, ""),
        dir.path(),
        &formats,
    )
    .unwrap();
    assert_eq!(
        read_header(&dir.path().join("theorem5_seed0_resistance.csv")),
        "node_i,node_j,rho,score_gap"
    );

    run_experiment(
        ExperimentId::Theorem2,
        &small(ExperimentId::Theorem2, "r_neighbors = 2"),
        dir.path(),
        &formats,
    )
    .unwrap();
    assert_eq!(
        read_header(&dir.path().join("theorem2_seed1_records.csv")),
        "mask,train_loss,test_loss,score"
    );

    let sweep = small(
        ExperimentId::Theorem6,
        "seeds = [0]\nwidths = [2, 4]\ndepths = [1]\nn_masks = 10",
    );
    run_experiment(ExperimentId::Theorem6, &sweep, dir.path(), &formats).unwrap();
    let sweep_csv = dir.path().join("theorem6_sweep.csv");
    assert_eq!(
        read_header(&sweep_csv),
        "width,depth,d,n_sampled,n_generalizing,fraction,seed"
    );
    assert_eq!(fs::read_to_string(&sweep_csv).unwrap().lines().count(), 3);

    run_experiment(
        ExperimentId::Theorem3,
        &small(ExperimentId::Theorem3, ""),
        dir.path(),
        &formats,
    )
    .unwrap();
    let energy: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("theorem3_seed0_energy.json")).unwrap()).unwrap();
    let keys: Vec<&String> = energy.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["n_edges", "n_nodes", "per_edge", "raw"]);
    assert_eq!(energy["n_nodes"], 13);
}

#[test]
fn csv_masks_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let s = small(ExperimentId::Corollary31, "seeds = [4]");
    run_experiment(ExperimentId::Corollary31, &s, dir.path(), &[Format::Csv]).unwrap();
    let text = fs::read_to_string(dir.path().join("corollary31_seed4_records.csv")).unwrap();
    let masks: Vec<subnet_walk::Mask> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(masks.len(), 13);
    for m in &masks[1..] {
        assert_eq!(subnet_walk::hamming(&masks[0], m).unwrap(), 1);
    }
}

#[test]
fn artifacts_list_exactly_the_written_files() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(
        ExperimentId::Theorem4,
        &small(ExperimentId::Theorem4, ""),
        dir.path(),
        &[Format::Csv, Format::Json],
    )
    .unwrap();
    let mut on_disk: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    on_disk.sort();
    let mut listed = report.artifacts.clone();
    listed.sort();
    assert_eq!(on_disk, listed);
    assert!(listed.contains(&"theorem4_seed2_pac_bayes.json".to_string()));
}

#[test]
fn reruns_are_byte_identical_without_metadata() {
    let s = small(ExperimentId::Theorem5, "");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let formats = [Format::Csv, Format::Json];
    let ra = run_experiment(ExperimentId::Theorem5, &s, a.path(), &formats).unwrap();
    let rb = run_experiment(ExperimentId::Theorem5, &s, b.path(), &formats).unwrap();
    assert_eq!(ra.deterministic_json().unwrap(), rb.deterministic_json().unwrap());
    for name in ra.artifacts.iter().filter(|n| n.ends_with(".csv")) {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn config_echo_reconstructs_the_run() {
    let s = small(ExperimentId::Theorem1, "seeds = [3]");
    let first = build_report(ExperimentId::Theorem1, &s).unwrap();
    let again = build_report(ExperimentId::Theorem1, &first.config_echo).unwrap();
    assert_eq!(first.deterministic_json().unwrap(), again.deterministic_json().unwrap());
}

#[test]
fn divergence_is_recorded_not_raised() {
    let s = small(
        ExperimentId::Theorem2,
        "seeds = [0]\nlearning_rate = 1e6\nloss = \"squared_error\"",
    );
    let report = build_report(ExperimentId::Theorem2, &s).unwrap();
    assert!(!report.pass);
    assert!(report.per_seed[0].error.as_deref().unwrap().contains("diverged"));
    assert!(!report.checks[0].passed);
}

#[test]
fn lemma1_with_rectified_is_a_config_error() {
    let file = ConfigFile::parse("activation = \"rectified\"\n").unwrap();
    match Settings::resolve(ExperimentId::Lemma1, &file) {
        Err(Error::Config { field, .. }) => assert_eq!(field, "activation"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn lemma2_default_passes() {
    let report = build_report(ExperimentId::Lemma2, &Settings::defaults(ExperimentId::Lemma2)).unwrap();
    assert!(report.pass, "{:?}", report.checks);
    assert_eq!(report.per_seed.len(), 5);
}

#[test]
fn unwritable_output_reports_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let report = build_report(ExperimentId::Lemma2, &small(ExperimentId::Lemma2, "seeds = [0]")).unwrap();
    match emit_report(&report, &blocker.join("sub"), &[Format::Json]) {
        Err(Error::Io { path, .. }) => assert!(path.starts_with(&blocker)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn idx_data_source_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = subnet_walk::make_gaussian_blobs(30, 3, 4, 3.0, 0).unwrap();
    let scaled: Vec<Vec<f64>> = train
        .inputs()
        .iter()
        .map(|x| x.iter().map(|v| (v / 10.0 + 0.5).clamp(0.0, 1.0)).collect())
        .collect();
    let data = subnet_walk::LabeledDataset::new(scaled, train.labels().to_vec(), 3, subnet_walk::Split::Train).unwrap();
    let (imgs, lbls) = (dir.path().join("img.idx"), dir.path().join("lbl.idx"));
    subnet_walk::data::write_idx(&data, 2, 2, &imgs, &lbls).unwrap();
    let text = format!(
        "seeds = [0]\nn_masks = 5\nepochs = 1\nmnist_images = {:?}\nmnist_labels = {:?}\n",
        imgs.display().to_string(),
        lbls.display().to_string()
    );
    let s = Settings::resolve(ExperimentId::Theorem1, &ConfigFile::parse(&text).unwrap()).unwrap();
    assert_eq!(s.hidden, vec![64]);
    let report = build_report(ExperimentId::Theorem1, &s).unwrap();
    assert!(report.per_seed[0].metrics["match_rate"].is_some());
    assert!(report.notes[0].starts_with("data: first"));
}
