mod common;

use std::collections::BTreeMap;

use attn_drift::aggregate::{
    aggregate_cell, build_run_matrix, cka_correlation_rows, correlation_report, method_summary,
    subset_sensitivity, summarize_cells, summary_csv, AggregateError, CellKey, Lr, MethodKey,
    RunMatrix,
};
use attn_drift::cka::CkaProfile;
use attn_drift::dump::{Method, RunRecord};
use attn_drift::metrics::{LayerMetrics, MetricName, MetricReport, MetricValues};
use rand::seq::SliceRandom;

const BASE: MetricValues = MetricValues {
    entropy_bits: 4.0,
    erf95: 0.8,
    gini: 0.2,
    head_diversity: 0.25,
    p2p_entropy_bits: 3.5,
};
const LAYERS: usize = 4;
const DATASETS: [&str; 2] = ["EuroSAT", "Oxford-IIIT Pets"];
const METHODS: [Method; 2] = [Method::FullFt, Method::Lora];
const LRS: [f64; 4] = [1e-5, 2e-5, 5e-5, 1e-4];

fn baseline_id(dataset: &str) -> String {
    format!("{}-base", dataset.split_whitespace().next().unwrap())
}

fn report(run_id: &str, per_layer_entropy_drift: &[f64]) -> MetricReport {
    let per_layer: Vec<MetricValues> = per_layer_entropy_drift
        .iter()
        .map(|d| MetricValues {
            entropy_bits: BASE.entropy_bits * (1.0 + d / 100.0),
            erf95: BASE.erf95 * (1.0 - d / 200.0),
            ..BASE
        })
        .collect();
    MetricReport {
        run_id: run_id.into(),
        n_images: 10,
        run_level: MetricValues::mean(&per_layer),
        per_layer: per_layer
            .into_iter()
            .enumerate()
            .map(|(l, values)| LayerMetrics {
                layer: l + 1,
                values,
            })
            .collect(),
        drift: None,
        rollout: None,
    }
}

#[allow(clippy::too_many_arguments)]
fn record(
    run_id: &str,
    dataset: &str,
    method: Method,
    lr: f64,
    seed: i64,
    acc: f64,
    zs: f64,
) -> RunRecord {
    RunRecord {
        run_id: run_id.into(),
        dataset: dataset.into(),
        method,
        variant: (method == Method::Lora).then(|| "r=8".to_string()),
        lr,
        seed,
        best_val_acc: acc,
        zero_shot: BTreeMap::from([("cifar100".to_string(), zs)]),
        baseline_run_id: baseline_id(dataset),
        per_layer: None,
        extra: Default::default(),
    }
}

fn baselines() -> BTreeMap<String, MetricReport> {
    DATASETS
        .iter()
        .map(|d| (baseline_id(d), report(&baseline_id(d), &[0.0; LAYERS])))
        .collect()
}

struct Grid {
    records: Vec<RunRecord>,
    reports: Vec<MetricReport>,
}

/// 2 datasets x 2 methods x 4 lrs x 5 seeds, drift depending on every axis.
fn grid() -> Grid {
    let mut records = Vec::new();
    let mut reports = Vec::new();
    for (di, d) in DATASETS.iter().enumerate() {
        for (mi, m) in METHODS.iter().enumerate() {
            for (li, lr) in LRS.iter().enumerate() {
                for seed in 0..5 {
                    let id = format!("{di}-{mi}-{li}-{seed}");
                    let drift = -(li as f64) * (1.0 + mi as f64) + 0.1 * seed as f64 - di as f64;
                    let layers: Vec<f64> = (0..LAYERS).map(|l| drift + 0.2 * l as f64).collect();
                    reports.push(report(&id, &layers));
                    records.push(record(
                        &id,
                        d,
                        *m,
                        *lr,
                        seed,
                        90.0 - drift,
                        50.0 + 2.0 * drift,
                    ));
                }
            }
        }
    }
    Grid { records, reports }
}

fn matrix(g: &Grid) -> RunMatrix {
    build_run_matrix(g.records.clone(), g.reports.clone(), &baselines()).unwrap()
}

#[test]
fn full_grid_has_sixteen_cells_of_five() {
    let m = matrix(&grid());
    assert_eq!(m.cells().len(), 16);
    assert!(m.cells().values().all(|runs| runs.len() == 5));
    let c = m.completeness();
    assert_eq!(c.expected_runs, 80);
    assert_eq!(c.included_runs.len(), 80);
    assert!(c.is_complete());
    assert_eq!(m.n_runs(), 80);
}

#[test]
fn missing_seed_is_reported_as_a_hole() {
    let mut g = grid();
    let gone = g
        .records
        .iter()
        .position(|r| r.run_id == "1-0-2-3")
        .unwrap();
    g.records.remove(gone);
    let m = build_run_matrix(g.records.clone(), g.reports.clone(), &baselines()).unwrap();
    let c = m.completeness();
    assert_eq!(c.expected_runs, 80);
    assert_eq!(c.missing_runs.len(), 1);
    let hole = &c.missing_runs[0];
    assert_eq!(
        (hole.dataset.as_str(), hole.lr, hole.seed),
        ("Oxford-IIIT Pets", Lr(5e-5), 3)
    );
    assert_eq!(c.unmatched_reports, vec!["1-0-2-3".to_string()]);
    let short = summarize_cells(&m)
        .unwrap()
        .into_iter()
        .filter(|s| s.n_seeds == 4)
        .count();
    assert_eq!(short, 1);
}

#[test]
fn record_without_report_is_listed() {
    let mut g = grid();
    g.reports.retain(|r| r.run_id != "0-1-0-0");
    let m = build_run_matrix(g.records, g.reports, &baselines()).unwrap();
    assert_eq!(
        m.completeness().records_without_report,
        vec!["0-1-0-0".to_string()]
    );
    assert!(!m.completeness().is_complete());
}

#[test]
fn duplicate_grid_key_is_rejected() {
    let mut g = grid();
    let mut twin = g.records[7].clone();
    twin.run_id = "twin".into();
    g.records.push(twin);
    g.reports.push(report("twin", &[0.0; LAYERS]));
    assert!(matches!(
        build_run_matrix(g.records, g.reports, &baselines()),
        Err(AggregateError::DuplicateRunKey(_))
    ));
}

#[test]
fn outputs_do_not_depend_on_input_order() {
    let g = grid();
    let reference = matrix(&g);
    let want_csv = summary_csv(&summarize_cells(&reference).unwrap());
    let want_rows = method_summary(&reference, "cifar100").unwrap();
    for seed in 0..5 {
        let mut rng = common::rng(seed);
        let mut records = g.records.clone();
        let mut reports = g.reports.clone();
        records.shuffle(&mut rng);
        reports.shuffle(&mut rng);
        let m = build_run_matrix(records, reports, &baselines()).unwrap();
        assert_eq!(summary_csv(&summarize_cells(&m).unwrap()), want_csv);
        assert_eq!(method_summary(&m, "cifar100").unwrap(), want_rows);
    }
}

#[test]
fn cell_of_two_seeds() {
    let runs = [(0, 1.0), (1, 3.0)].map(|(seed, d)| {
        let id = format!("r{seed}");
        (
            record(&id, "EuroSAT", Method::FullFt, 1e-5, seed, 90.0, 50.0),
            report(&id, &[d; LAYERS]),
        )
    });
    let (records, reports): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let m = build_run_matrix(records, reports, &baselines()).unwrap();
    let (key, joined) = m.cells().iter().next().unwrap();
    let s = aggregate_cell(key, joined).unwrap();
    let e = s.delta_entropy.unwrap();
    assert!((e.mean - 2.0).abs() < 1e-12);
    assert!((e.std.unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(s.best_val_acc.std, Some(0.0));

    let empty = CellKey {
        dataset: "x".into(),
        method: MethodKey {
            method: Method::Lora,
            variant: None,
        },
        lr: Lr(1e-5),
    };
    assert!(matches!(
        aggregate_cell(&empty, &[]),
        Err(AggregateError::EmptyGroup { .. })
    ));
}

#[test]
fn method_summary_weights_runs_not_cells() {
    let mut g = grid();
    // unbalance one group: drop four seeds from its first cell
    let drop = ["0-0-0-1", "0-0-0-2", "0-0-0-3", "0-0-0-4"];
    g.records.retain(|r| !drop.contains(&r.run_id.as_str()));
    let m = build_run_matrix(g.records.clone(), g.reports, &baselines()).unwrap();
    let rows = method_summary(&m, "cifar100").unwrap();
    let row = rows
        .iter()
        .find(|r| r.dataset == "EuroSAT" && r.method == "Full FT")
        .unwrap();
    let runs: Vec<_> = m
        .cells()
        .iter()
        .filter(|(k, _)| k.dataset == "EuroSAT" && k.method.method == Method::FullFt)
        .flat_map(|(_, v)| v)
        .collect();
    assert_eq!(runs.len(), 16);
    assert_eq!(row.n_runs, 16);
    let want = runs
        .iter()
        .map(|r| r.run_drift(MetricName::Entropy).unwrap())
        .sum::<f64>()
        / 16.0;
    assert!((row.delta_entropy.unwrap() - want).abs() < 1e-12);
    let acc = g
        .records
        .iter()
        .filter(|r| r.dataset == "EuroSAT" && r.method == Method::FullFt)
        .map(|r| r.best_val_acc)
        .sum::<f64>()
        / 16.0;
    assert!((row.best_val_acc - acc).abs() < 1e-12);
}

#[test]
fn summary_csv_round_trips_at_full_precision() {
    let m = matrix(&grid());
    let summaries = summarize_cells(&m).unwrap();
    let csv = summary_csv(&summaries);
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 16);
    for (row, s) in rows.iter().zip(&summaries) {
        assert_eq!(row.len(), header.len());
        let lr: f64 = row[col("lr")].parse().unwrap();
        assert_eq!(lr, s.lr.0);
        let mean: f64 = row[col("delta_entropy_mean")].parse().unwrap();
        assert_eq!(mean, s.delta_entropy.unwrap().mean);
        let std: f64 = row[col("zs_cifar100_std")].parse().unwrap();
        assert_eq!(std, s.zero_shot["cifar100"].std.unwrap());
    }
    assert!(csv.contains(",1e-5,") && csv.contains(",1e-4,"));
}

#[test]
fn correlation_report_on_monotone_grid() {
    let m = matrix(&grid());
    let r = correlation_report(&m, "EuroSAT", "cifar100").unwrap();
    assert_eq!(r.n_runs, 40);
    // zero-shot is exactly linear in drift, accuracy exactly decreasing
    assert!((r.entropy_vs_zero_shot.pearson.statistic - 1.0).abs() < 1e-12);
    assert!((r.entropy_vs_val_acc.spearman.statistic + 1.0).abs() < 1e-12);
    assert!(matches!(
        correlation_report(&m, "nowhere", "cifar100"),
        Err(AggregateError::TooFewRuns { needed: 3, got: 0 })
    ));
}

#[test]
fn subset_cv_of_run_level_entropy() {
    let subsets: Vec<MetricReport> = [5.600, 5.601, 5.602, 5.601, 5.600]
        .iter()
        .map(|&e| {
            let mut r = report("run", &[0.0; LAYERS]);
            r.run_level.entropy_bits = e;
            r
        })
        .collect();
    let s = subset_sensitivity(&subsets).unwrap();
    assert_eq!(s.n_subsets, 5);
    assert!((s.cv.entropy_bits - 1.4938e-4).abs() < 1e-7);
    assert_eq!(s.cv.gini, 0.0);
    let mut mixed = subsets.clone();
    mixed[2].run_id = "other".into();
    assert!(matches!(
        subset_sensitivity(&mixed),
        Err(AggregateError::SubsetRunMismatch(..))
    ));
}

#[test]
fn cka_rows_pick_the_strongest_layer() {
    let g = grid();
    let mut m = matrix(&g);
    let profiles: BTreeMap<String, CkaProfile> = m
        .cells()
        .values()
        .flatten()
        .map(|r| {
            let d = r.run_drift(MetricName::Entropy).unwrap();
            // layer 3 tracks drift exactly, the others are drift-independent wiggles
            let id_hash = r.record.run_id.bytes().map(u64::from).sum::<u64>() as f64;
            let mut per_layer: Vec<f64> = (0..LAYERS)
                .map(|l| 0.9 - 0.01 * ((id_hash + l as f64) % 7.0))
                .collect();
            per_layer[2] = 0.8 + 0.01 * d;
            let mean = per_layer.iter().sum::<f64>() / LAYERS as f64;
            (r.record.run_id.clone(), CkaProfile { per_layer, mean })
        })
        .collect();
    m.attach_cka(profiles);
    let rows = cka_correlation_rows(&m).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].layer, None);
    assert_eq!(rows[0].n, 80);
    assert_eq!(rows[1].layer, Some(3));
    assert!((rows[1].pearson.statistic - 1.0).abs() < 1e-12);
}
