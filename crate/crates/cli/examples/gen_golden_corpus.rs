//! Writes the synthetic golden corpus used by the CLI tests.
//!
//! 2 datasets x 2 methods x 2 learning rates x 2 seeds, plus one pretrained
//! baseline per dataset. Every layer of a baseline carries the same values
//! and every run scales them by `1 + d/100`, so the run-level drift of a run
//! is the mean of its per-layer drifts. The group means are fixed targets
//! that the method-summary table must reproduce to two decimals.
//!
//! Usage: `cargo run -p attn-drift-cli --example gen_golden_corpus -- <dir>`

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use attn_drift::dump::{Method, RunRecord};
use attn_drift::metrics::{LayerMetrics, MetricReport, MetricValues};

const N_LAYERS: usize = 12;
const N_IMAGES: usize = 200;
const LRS: [f64; 2] = [1e-5, 5e-5];
const SEEDS: [i64; 2] = [0, 1];

const BASE: MetricValues = MetricValues {
    entropy_bits: 5.2,
    erf95: 0.9,
    gini: 0.1,
    head_diversity: 0.3,
    p2p_entropy_bits: 4.7,
};

struct Group {
    dataset: &'static str,
    key: &'static str,
    method: Method,
    variant: Option<&'static str>,
    // one value per run in (lr, seed) order
    entropy: [f64; 4],
    erf: [f64; 4],
    val_acc: [f64; 4],
    cifar: [f64; 4],
    // per-layer entropy drift pinned at the last layer for the larger lr
    last_layer_at_high_lr: Option<f64>,
}

const GROUPS: [Group; 4] = [
    Group {
        dataset: "EuroSAT",
        key: "eurosat",
        method: Method::FullFt,
        variant: None,
        entropy: [1.53, 1.59, -2.51, -2.49],
        erf: [0.12, 0.20, -4.10, -4.10],
        val_acc: [98.91, 99.01, 98.95, 98.97],
        cifar: [12.70, 12.72, 9.85, 9.85],
        last_layer_at_high_lr: None,
    },
    Group {
        dataset: "EuroSAT",
        key: "eurosat",
        method: Method::Lora,
        variant: Some("r=8"),
        entropy: [0.95, 1.05, 1.30, 1.42],
        erf: [1.20, 1.40, 1.70, 1.90],
        val_acc: [95.90, 96.10, 97.10, 97.26],
        cifar: [46.00, 45.80, 44.50, 44.22],
        last_layer_at_high_lr: None,
    },
    Group {
        dataset: "Oxford-IIIT Pets",
        key: "pets",
        method: Method::FullFt,
        variant: None,
        entropy: [-1.10, -1.20, -3.45, -3.53],
        erf: [-3.00, -3.20, -7.20, -7.32],
        val_acc: [88.50, 88.70, 89.20, 89.36],
        cifar: [10.10, 9.90, 7.10, 7.06],
        last_layer_at_high_lr: Some(-20.29),
    },
    Group {
        dataset: "Oxford-IIIT Pets",
        key: "pets",
        method: Method::Lora,
        variant: Some("r=8"),
        entropy: [-0.20, -0.26, -0.40, -0.46],
        erf: [-1.00, -1.10, -1.80, -1.86],
        val_acc: [60.10, 61.30, 80.50, 81.14],
        cifar: [59.00, 58.80, 57.20, 57.04],
        last_layer_at_high_lr: None,
    },
];

fn scaled(base: f64, drift_pct: f64) -> f64 {
    base * (1.0 + drift_pct / 100.0)
}

/// Per-layer entropy drifts with mean `d`: a gentle ramp, or a pinned last layer.
fn entropy_profile(d: f64, last: Option<f64>) -> Vec<f64> {
    match last {
        Some(last) => {
            let rest = (N_LAYERS as f64 * d - last) / (N_LAYERS - 1) as f64;
            let mut v = vec![rest; N_LAYERS - 1];
            v.push(last);
            v
        }
        None => (0..N_LAYERS)
            .map(|l| d + 0.1 * (l as f64 - (N_LAYERS - 1) as f64 / 2.0))
            .collect(),
    }
}

fn report(run_id: &str, per_layer: Vec<MetricValues>) -> MetricReport {
    let run_level = MetricValues::mean(&per_layer);
    MetricReport {
        run_id: run_id.to_string(),
        n_images: N_IMAGES,
        per_layer: per_layer
            .into_iter()
            .enumerate()
            .map(|(l, values)| LayerMetrics {
                layer: l + 1,
                values,
            })
            .collect(),
        run_level,
        drift: None,
        rollout: None,
    }
}

#[allow(clippy::too_many_arguments)]
fn record(
    run_id: &str,
    dataset: &str,
    method: Method,
    variant: Option<&str>,
    lr: f64,
    seed: i64,
    val_acc: f64,
    cifar: f64,
    baseline: &str,
) -> RunRecord {
    RunRecord {
        run_id: run_id.to_string(),
        dataset: dataset.to_string(),
        method,
        variant: variant.map(str::to_string),
        lr,
        seed,
        best_val_acc: val_acc,
        zero_shot: BTreeMap::from([("cifar100".to_string(), cifar)]),
        baseline_run_id: baseline.to_string(),
        per_layer: None,
        extra: Default::default(),
    }
}

fn main() -> std::io::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .expect("usage: gen_golden_corpus <output dir>");
    let dir = Path::new(&dir);
    let records = dir.join("records");
    let reports = dir.join("reports");
    fs::create_dir_all(&records)?;
    fs::create_dir_all(&reports)?;

    let mut baselines = Vec::new();
    for (dataset, key, cifar) in [
        ("EuroSAT", "eurosat", 60.22),
        ("Oxford-IIIT Pets", "pets", 60.22),
    ] {
        let id = format!("{key}-pretrained");
        let rec = record(
            &id,
            dataset,
            Method::Pretrained,
            None,
            0.0,
            0,
            0.0,
            cifar,
            &id,
        );
        rec.write(records.join(format!("{id}.json")))
            .expect("record writes");
        let rep = report(&id, vec![BASE; N_LAYERS]);
        fs::write(
            reports.join(format!("{id}.report.json")),
            rep.to_json_string(),
        )?;
        baselines.push(id);
    }

    for g in &GROUPS {
        let mut i = 0;
        for &lr in &LRS {
            for &seed in &SEEDS {
                let method_key = match g.variant {
                    Some(_) => "lora_r8",
                    None => g.method.as_str(),
                };
                let run_id = format!("{}-{method_key}-lr{lr:e}-s{seed}", g.key);
                let baseline = format!("{}-pretrained", g.key);
                let last = if lr == LRS[1] {
                    g.last_layer_at_high_lr
                } else {
                    None
                };
                let entropy = entropy_profile(g.entropy[i], last);
                let per_layer = entropy
                    .iter()
                    .map(|&de| MetricValues {
                        entropy_bits: scaled(BASE.entropy_bits, de),
                        erf95: scaled(BASE.erf95, g.erf[i]),
                        gini: scaled(BASE.gini, -2.0 * g.entropy[i]),
                        head_diversity: scaled(BASE.head_diversity, 0.5 * g.entropy[i]),
                        p2p_entropy_bits: scaled(BASE.p2p_entropy_bits, 0.8 * g.entropy[i]),
                    })
                    .collect();
                let rep = report(&run_id, per_layer);
                fs::write(
                    reports.join(format!("{run_id}.report.json")),
                    rep.to_json_string(),
                )?;
                let rec = record(
                    &run_id,
                    g.dataset,
                    g.method,
                    g.variant,
                    lr,
                    seed,
                    g.val_acc[i],
                    g.cifar[i],
                    &baseline,
                );
                rec.write(records.join(format!("{run_id}.json")))
                    .expect("record writes");
                i += 1;
            }
        }
    }

    let manifest = serde_json::json!({
        "records": ["records"],
        "reports": ["reports"],
        "baselines": baselines,
        "benchmark": "cifar100",
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}
