//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use subnet_walk::bounds::{binary_entropy, log2_binomial};
use subnet_walk::graph::{
    effective_resistance, hypercube_masks, laplacian, laplacian_pseudoinverse, min_eigenvalue, resistance_oracle,
    SubnetGraph,
};
use subnet_walk::harness::{build_report, ExperimentId, ExperimentReport, Settings};
use subnet_walk::nn::loss_and_gradient;
use subnet_walk::{forward, sample_mask, scaled_output, Activation, LossKind, Mask, Network, SeededRng, Target};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn report(id: ExperimentId) -> ExperimentReport {
    let settings = Settings::defaults(id);
    build_report(id, &settings).unwrap_or_else(|e| panic!("{id}: {e}"))
}

fn seed_values(r: &ExperimentReport, key: &str) -> Vec<Option<f64>> {
    r.per_seed
        .iter()
        .map(|s| s.metrics.get(key).copied().flatten())
        .collect()
}

fn all_seeds(r: &ExperimentReport, key: &str, pred: impl Fn(f64) -> bool) -> (bool, String) {
    let v = seed_values(r, key);
    let ok = v.len() == 5 && v.iter().all(|x| x.is_some_and(&pred));
    let shown: Vec<String> = v.iter().map(|x| x.map_or("-".into(), |x| format!("{x:.4e}"))).collect();
    (ok, format!("{key}=[{}]", shown.join(" ")))
}

fn combine(parts: Vec<(bool, String)>) -> Outcome {
    let passed = parts.iter().all(|(ok, _)| *ok);
    let detail = parts.into_iter().map(|(_, d)| d).collect::<Vec<_>>().join("; ");
    outcome(passed, detail)
}

fn check_named(r: &ExperimentReport, prefix: &str) -> (bool, String) {
    let hits: Vec<_> = r.checks.iter().filter(|c| c.name.starts_with(prefix)).collect();
    let ok = !hits.is_empty() && hits.iter().all(|c| c.passed);
    (ok, format!("{prefix}: {}", if ok { "ok" } else { "failed" }))
}

fn lemma2_norm() -> Outcome {
    let r = report(ExperimentId::Lemma2);
    combine(vec![all_seeds(&r, "rel_error", |e| e < 0.01)])
}

/// Brute-force expectation over every mask, written independently of the
/// library's enumeration.
fn enumerated_mean(net: &Network, p: f64, x: &[f64]) -> Vec<f64> {
    let d = net.num_params();
    let mut acc = vec![0.0; net.output_dim()];
    for idx in 0..1u64 << d {
        let bits: Vec<bool> = (0..d).map(|i| idx >> i & 1 == 1).collect();
        let k = bits.iter().filter(|&&b| b).count() as i32;
        let w = p.powi(k) * (1.0 - p).powi(d as i32 - k);
        let y = forward(net, x, Some(&Mask::from_bits(&bits))).unwrap();
        for (a, v) in acc.iter_mut().zip(y) {
            *a += w * v;
        }
    }
    acc
}

fn lemma1_scaling() -> Outcome {
    let net = Network::init(&[2, 2, 2], Activation::Linear, &mut SeededRng::new(11, 0)).unwrap();
    assert!(net.num_params() <= 12);
    let mut worst: f64 = 0.0;
    for x in [[0.5, -1.0], [2.0, 0.25], [-1.5, 3.0]] {
        let exact = enumerated_mean(&net, 0.8, &x);
        let scaled = scaled_output(&net, 0.8, &x).unwrap();
        for (a, b) in exact.iter().zip(&scaled) {
            worst = worst.max((a - b).abs());
        }
    }
    let r = report(ExperimentId::Lemma1);
    combine(vec![
        (
            worst <= 1e-10,
            format!("enumeration gap {worst:.2e} (d={})", net.num_params()),
        ),
        all_seeds(&r, "gap_n", |g| g < 0.05),
        check_named(&r, "median gap"),
    ])
}

fn theorem1_ensemble() -> Outcome {
    let r = report(ExperimentId::Theorem1);
    combine(vec![
        all_seeds(&r, "match_rate", |m| m >= 0.99),
        all_seeds(&r, "kl_softmax", |k| k < 3.0),
    ])
}

fn theorem2_proxies() -> Outcome {
    let r = report(ExperimentId::Theorem2);
    let eps = r.config_echo.eps;
    combine(vec![
        all_seeds(&r, "full_gap", |g| g < eps / 2.0),
        all_seeds(&r, "fraction_at_eps", |f| f >= 0.95),
        all_seeds(&r, "neighbor_density", |f| f == 1.0),
    ])
}

fn theorem3_smoothness() -> Outcome {
    let t3 = report(ExperimentId::Theorem3);
    let c31 = report(ExperimentId::Corollary31);
    combine(vec![
        all_seeds(&t3, "n_nodes", |n| n == 101.0),
        all_seeds(&t3, "energy_per_edge", |e| e < 1e-3),
        all_seeds(&t3, "energy_cross_check_rel", |e| e <= 1e-9),
        all_seeds(&c31, "largest_fraction", |f| f == 1.0),
    ])
}

fn lemma3_entropy() -> Outcome {
    let r = report(ExperimentId::Lemma3);
    let c = seed_values(&r, "entropy_correct");
    let i = seed_values(&r, "entropy_incorrect");
    let wins = c
        .iter()
        .zip(&i)
        .filter(|(c, i)| matches!((c, i), (Some(c), Some(i)) if c < i))
        .count();
    outcome(wins >= 4, format!("correct < incorrect in {wins} of 5 seeds"))
}

fn theorem4_pac_bayes() -> Outcome {
    let r = report(ExperimentId::Theorem4);
    let per_coord = 0.8 * 1.6f64.ln() + 0.2 * 0.4f64.ln();
    let d = seed_values(&r, "d");
    let ku = seed_values(&r, "kl_uniform_nats");
    let uniform_ok = d.iter().zip(&ku).all(|(d, k)| match (d, k) {
        (Some(d), Some(k)) => (k - d * per_coord).abs() <= 1e-9 * d * per_coord,
        _ => false,
    });
    let b = seed_values(&r, "bound");
    let bu = seed_values(&r, "bound_uniform");
    let inflates = b
        .iter()
        .zip(&bu)
        .all(|(b, bu)| matches!((b, bu), (Some(b), Some(bu)) if bu > b));
    combine(vec![
        all_seeds(&r, "kl_nats", |k| k == 0.0),
        all_seeds(&r, "satisfied", |s| s == 1.0),
        (uniform_ok, format!("uniform KL = d*{per_coord:.6}")),
        (inflates, "uniform bound looser".into()),
    ])
}

fn random_graph(seed: u64) -> SubnetGraph {
    let mut rng = SeededRng::new(seed, 0);
    let d = 6;
    let mut masks: Vec<Mask> = Vec::new();
    while masks.len() < 40 {
        let m = sample_mask(d, 0.5, &mut rng).unwrap();
        if !masks.contains(&m) {
            masks.push(m);
        }
    }
    let scores = (0..masks.len()).map(|i| i as f64 * 0.01).collect();
    SubnetGraph::from_masks(masks, scores).unwrap()
}

fn resistance_agreement(g: &SubnetGraph) -> f64 {
    let pinv = laplacian_pseudoinverse(&laplacian(g), &g.components()).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..g.len() {
        for j in i + 1..g.len() {
            if let Some(rho) = effective_resistance(&pinv, i, j).unwrap() {
                worst = worst.max((rho - resistance_oracle(g, i, j).unwrap()).abs());
            }
        }
    }
    worst
}

fn theorem5_resistance() -> Outcome {
    let cube = hypercube_masks(3);
    let cube_graph = SubnetGraph::from_masks(cube.clone(), vec![0.0; cube.len()]).unwrap();
    let adjacent = resistance_oracle(&cube_graph, 0, 1).unwrap();
    let mut worst = resistance_agreement(&cube_graph);
    for seed in 0..5 {
        worst = worst.max(resistance_agreement(&random_graph(seed)));
    }
    let r = report(ExperimentId::Theorem5);
    combine(vec![
        (
            (adjacent - 7.0 / 12.0).abs() < 1e-12,
            format!("cube adjacent rho {adjacent:.6}"),
        ),
        (worst <= 1e-8, format!("max |rho - oracle| {worst:.2e}")),
        all_seeds(&r, "oracle_max_diff", |d| d <= 1e-8),
        all_seeds(&r, "pearson_r", |p| (-0.2..=0.3).contains(&p)),
    ])
}

fn theorem6_growth() -> Outcome {
    let r = report(ExperimentId::Theorem6);
    let mut parts = Vec::new();
    for depth in 1..=3 {
        parts.push(check_named(&r, &format!("depth {depth}: fraction non-decreasing")));
        parts.push(all_seeds(&r, &format!("fraction_w64_d{depth}"), |f| f == 1.0));
    }
    combine(parts)
}

fn binomial_u128(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

fn combinatorics() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in 0..=60usize {
        for k in 0..=d {
            let want = (binomial_u128(d as u128, k as u128) as f64).log2();
            let got = log2_binomial(d, k).unwrap().exact;
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    let ratios: Vec<f64> = [10usize, 100, 1000]
        .iter()
        .map(|&d| log2_binomial(d, d * 4 / 5).unwrap().exact / (d as f64 * binary_entropy(0.8)))
        .collect();
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]) && ratios.iter().all(|&r| r < 1.0);
    combine(vec![
        (worst <= 1e-9, format!("max rel err {worst:.2e}")),
        (increasing, format!("ratios {ratios:.4?}")),
    ])
}

fn finite_difference_error(act: Activation, kind: LossKind) -> f64 {
    let net = Network::init(&[3, 5, 4, 3], act, &mut SeededRng::new(5, 0)).unwrap();
    let xs = [[0.3, -0.7, 1.1], [1.5, 0.2, -0.4]];
    let ys: [&[f64]; 2] = [&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]];
    let examples: Vec<(&[f64], Target)> = xs
        .iter()
        .zip(ys)
        .enumerate()
        .map(|(i, (x, y))| {
            let t = match kind {
                LossKind::CrossEntropy => Target::Class(i * 2),
                LossKind::SquaredError => Target::Vector(y),
            };
            (x.as_slice(), t)
        })
        .collect();
    let (_, grad) = loss_and_gradient(&net, &examples, kind, None).unwrap();
    let theta = net.params();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let eval = |delta: f64| {
            let mut t = theta.clone();
            t[i] += delta;
            let mut n = net.clone();
            n.set_params(&t).unwrap();
            loss_and_gradient(&n, &examples, kind, None).unwrap().0
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1.0));
    }
    worst
}

fn numerics() -> Outcome {
    let fd = [
        finite_difference_error(Activation::Linear, LossKind::CrossEntropy),
        finite_difference_error(Activation::Rectified, LossKind::CrossEntropy),
        finite_difference_error(Activation::Rectified, LossKind::SquaredError),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let (mut min_eig, mut residual) = (f64::INFINITY, 0.0f64);
    for seed in 0..5 {
        let g = random_graph(seed);
        let l = laplacian(&g);
        min_eig = min_eig.min(min_eigenvalue(&l).unwrap_or(0.0));
        let pinv = laplacian_pseudoinverse(&l, &g.components()).unwrap();
        residual = residual.max((&l * &pinv.matrix * &l - &l).amax());
    }
    combine(vec![
        (fd <= 1e-4, format!("finite-difference rel err {fd:.2e}")),
        (min_eig >= -1e-9, format!("min Laplacian eigenvalue {min_eig:.2e}")),
        (residual < 1e-8, format!("pinv residual {residual:.2e}")),
    ])
}

fn determinism() -> Outcome {
    let mut parts = Vec::new();
    for id in [ExperimentId::Lemma2, ExperimentId::Corollary31] {
        let a = report(id).deterministic_json().unwrap();
        let b = report(id).deterministic_json().unwrap();
        parts.push((a == b, format!("{id}: {} bytes", a.len())));
    }
    combine(parts)
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("masked norm identity", lemma2_norm),
        ("weight scaling equals ensemble mean", lemma1_scaling),
        ("full model approximates ensemble", theorem1_ensemble),
        ("generalizing subnetworks abundant and dense", theorem2_proxies),
        ("scores smooth on the Hamming graph, one cluster", theorem3_smoothness),
        ("entropy separates correct from incorrect", lemma3_entropy),
        ("PAC-Bayes bound and KL", theorem4_pac_bayes),
        ("effective resistance and correlation", theorem5_resistance),
        ("generalizing fraction grows with width", theorem6_growth),
        ("binomial counting", combinatorics),
        ("gradients, Laplacian, pseudoinverse", numerics),
        ("byte-identical reruns", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        if !o.passed {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<48} {} ({:.1}s) {}",
            i + 1,
            name,
            if o.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
