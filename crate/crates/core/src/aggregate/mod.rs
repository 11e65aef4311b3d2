//! Experiment-matrix aggregation and report tables.
//!
//! Runs are joined by `run_id` into a dataset x method x learning-rate grid
//! with seeds ascending inside each cell. Drift is always recomputed from the
//! baseline report named by the run record. Missing runs are listed in a
//! [`CompletenessReport`]; nothing is imputed.

mod manifest;
mod table;
mod tables;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::cka::CkaProfile;
use crate::dump::{DumpError, Method, RunRecord};
use crate::metrics::{DriftReport, MetricError, MetricName, MetricReport, MetricValues};
use crate::rollout::RolloutMetrics;
use crate::stats::{
    coefficient_of_variation, mean, pearson_test, sample_std, spearman_test, StatResult, StatsError,
};

pub use manifest::{load_corpus, read_json, read_manifest, CkaRecord, Corpus, Manifest};
pub use table::{emit_table, format_fixed, format_signed, Align, Cell, Column, Format, Table};
pub use tables::{
    auxiliary_rows, auxiliary_table, benchmark_name, cka_correlation_rows, correlation_table,
    group_label, inferential_table, method_summary_table, multiseed_row, multiseed_table,
    AuxiliaryRow, CorrelationRow, InferentialRow, MultiSeedRow,
};

pub const DEFAULT_BENCHMARK: &str = "cifar100";

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("duplicate run_id `{0}`")]
    DuplicateRunId(String),
    #[error("duplicate metric report for run_id `{0}`")]
    DuplicateReport(String),
    #[error("duplicate run for {0}")]
    DuplicateRunKey(RunKey),
    #[error("no runs for {dataset} / {method}")]
    EmptyGroup { dataset: String, method: String },
    #[error("run `{run_id}` has {found} layers, expected {expected}")]
    InconsistentLayers {
        run_id: String,
        expected: usize,
        found: usize,
    },
    #[error("need at least {needed} runs, got {got}")]
    TooFewRuns { needed: usize, got: usize },
    #[error("subset profiles belong to different runs: `{0}` and `{1}`")]
    SubsetRunMismatch(String, String),
    #[error("unknown table format `{0}`")]
    UnknownFormat(String),
    #[error("table has no rows")]
    EmptyTable,
    #[error("table row has {found} cells, expected {expected}")]
    RaggedTable { expected: usize, found: usize },
    #[error("run `{run_id}`: {source}")]
    Drift {
        run_id: String,
        #[source]
        source: MetricError,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Dump(#[from] DumpError),
    #[error("{path}: {message}")]
    Input { path: String, message: String },
}

pub type Result<T, E = AggregateError> = std::result::Result<T, E>;

/// Learning rate with a total order so it can key maps.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct Lr(pub f64);

impl PartialEq for Lr {
    fn eq(&self, other: &Self) -> bool {
        self.0.total_cmp(&other.0) == Ordering::Equal
    }
}
impl Eq for Lr {}
impl PartialOrd for Lr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Lr {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}
impl Serialize for Lr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}
impl fmt::Display for Lr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}", self.0)
    }
}

/// Adaptation method plus its free-form variant tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct MethodKey {
    pub method: Method,
    pub variant: Option<String>,
}

impl MethodKey {
    pub fn of(record: &RunRecord) -> Self {
        Self {
            method: record.method,
            variant: record.variant.clone(),
        }
    }

    pub fn label(&self) -> String {
        crate::dump::method_label(self.method, self.variant.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CellKey {
    pub dataset: String,
    pub method: MethodKey,
    pub lr: Lr,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct RunKey {
    pub dataset: String,
    pub method: String,
    pub lr: Lr,
    pub seed: i64,
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, lr {}, seed {})",
            self.dataset, self.method, self.lr, self.seed
        )
    }
}

/// One run with everything joined to it.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinedRun {
    pub record: RunRecord,
    pub report: MetricReport,
    pub drift: DriftReport,
    pub cka: Option<CkaProfile>,
    pub rollout: Option<RolloutMetrics>,
}

impl JoinedRun {
    pub fn run_drift(&self, metric: MetricName) -> Option<f64> {
        self.drift.run_level.get(metric)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnresolvedBaseline {
    pub run_id: String,
    pub baseline_run_id: String,
}

/// Where every input went. Each record appears in exactly one of
/// `included_runs`, `baseline_runs`, `records_without_report` and
/// `unresolved_baselines`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CompletenessReport {
    pub expected_runs: usize,
    pub included_runs: Vec<String>,
    pub baseline_runs: Vec<String>,
    pub missing_runs: Vec<RunKey>,
    pub records_without_report: Vec<String>,
    pub unresolved_baselines: Vec<UnresolvedBaseline>,
    pub unmatched_reports: Vec<String>,
    pub unmatched_cka: Vec<String>,
}

impl CompletenessReport {
    pub fn is_complete(&self) -> bool {
        self.missing_runs.is_empty()
            && self.records_without_report.is_empty()
            && self.unresolved_baselines.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMatrix {
    cells: BTreeMap<CellKey, Vec<JoinedRun>>,
    completeness: CompletenessReport,
}

/// Joins records to their metric reports and baselines.
///
/// `baselines` maps a baseline `run_id` to its metric report. Records whose
/// own `run_id` is a baseline are treated as reference runs, not grid cells.
pub fn build_run_matrix(
    records: Vec<RunRecord>,
    reports: Vec<MetricReport>,
    baselines: &BTreeMap<String, MetricReport>,
) -> Result<RunMatrix> {
    let mut seen_ids = BTreeSet::new();
    for r in &records {
        if !seen_ids.insert(r.run_id.clone()) {
            return Err(AggregateError::DuplicateRunId(r.run_id.clone()));
        }
    }
    let mut by_id: BTreeMap<String, MetricReport> = BTreeMap::new();
    for rep in reports {
        if by_id.contains_key(&rep.run_id) {
            return Err(AggregateError::DuplicateReport(rep.run_id));
        }
        by_id.insert(rep.run_id.clone(), rep);
    }

    let mut records = records;
    records.sort_by(|a, b| a.run_id.cmp(&b.run_id));

    let mut completeness = CompletenessReport::default();
    let mut cells: BTreeMap<CellKey, Vec<JoinedRun>> = BTreeMap::new();
    let mut keys = BTreeSet::new();
    let mut used_reports = BTreeSet::new();

    for record in records {
        if baselines.contains_key(&record.run_id) {
            used_reports.insert(record.run_id.clone());
            completeness.baseline_runs.push(record.run_id);
            continue;
        }
        let Some(report) = by_id.get(&record.run_id) else {
            completeness.records_without_report.push(record.run_id);
            continue;
        };
        used_reports.insert(record.run_id.clone());
        let Some(baseline) = baselines.get(&record.baseline_run_id) else {
            completeness.unresolved_baselines.push(UnresolvedBaseline {
                run_id: record.run_id,
                baseline_run_id: record.baseline_run_id,
            });
            continue;
        };
        let drift = report
            .drift_against(baseline)
            .map_err(|source| AggregateError::Drift {
                run_id: record.run_id.clone(),
                source,
            })?;
        let method = MethodKey::of(&record);
        let run_key = RunKey {
            dataset: record.dataset.clone(),
            method: method.label(),
            lr: Lr(record.lr),
            seed: record.seed,
        };
        if !keys.insert(run_key.clone()) {
            return Err(AggregateError::DuplicateRunKey(run_key));
        }
        let key = CellKey {
            dataset: record.dataset.clone(),
            method,
            lr: Lr(record.lr),
        };
        completeness.included_runs.push(record.run_id.clone());
        cells.entry(key).or_default().push(JoinedRun {
            rollout: report.rollout,
            report: report.clone(),
            drift,
            cka: None,
            record,
        });
    }
    for runs in cells.values_mut() {
        runs.sort_by_key(|r| r.record.seed);
    }
    for id in baselines.keys() {
        used_reports.insert(id.clone());
    }
    completeness.unmatched_reports = by_id
        .keys()
        .filter(|id| !used_reports.contains(*id))
        .cloned()
        .collect();

    // expected grid: full cross of every observed axis value
    let datasets: BTreeSet<&String> = cells.keys().map(|k| &k.dataset).collect();
    let methods: BTreeSet<&MethodKey> = cells.keys().map(|k| &k.method).collect();
    let lrs: BTreeSet<Lr> = cells.keys().map(|k| k.lr).collect();
    let seeds: BTreeSet<i64> = cells
        .values()
        .flat_map(|runs| runs.iter().map(|r| r.record.seed))
        .collect();
    for dataset in &datasets {
        for method in &methods {
            for lr in &lrs {
                for seed in &seeds {
                    let key = RunKey {
                        dataset: (*dataset).clone(),
                        method: method.label(),
                        lr: *lr,
                        seed: *seed,
                    };
                    if !keys.contains(&key) {
                        completeness.missing_runs.push(key);
                    }
                }
            }
        }
    }
    completeness.expected_runs = datasets.len() * methods.len() * lrs.len() * seeds.len();
    completeness.included_runs.sort();

    Ok(RunMatrix {
        cells,
        completeness,
    })
}

impl RunMatrix {
    pub fn cells(&self) -> &BTreeMap<CellKey, Vec<JoinedRun>> {
        &self.cells
    }

    pub fn completeness(&self) -> &CompletenessReport {
        &self.completeness
    }

    pub fn n_runs(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    /// Attaches CKA profiles by run_id; unknown ids are recorded as unmatched.
    pub fn attach_cka(&mut self, profiles: BTreeMap<String, CkaProfile>) {
        let mut profiles = profiles;
        for runs in self.cells.values_mut() {
            for run in runs {
                if let Some(p) = profiles.remove(&run.record.run_id) {
                    run.cka = Some(p);
                }
            }
        }
        self.completeness.unmatched_cka = profiles.into_keys().collect();
    }

    /// (dataset, method) groups with their runs in cell order then seed order.
    pub fn groups(&self) -> BTreeMap<(String, MethodKey), Vec<&JoinedRun>> {
        let mut out: BTreeMap<(String, MethodKey), Vec<&JoinedRun>> = BTreeMap::new();
        for (key, runs) in &self.cells {
            out.entry((key.dataset.clone(), key.method.clone()))
                .or_default()
                .extend(runs.iter());
        }
        out
    }

    pub fn dataset_runs(&self, dataset: &str) -> Vec<&JoinedRun> {
        self.cells
            .iter()
            .filter(|(k, _)| k.dataset == dataset)
            .flat_map(|(_, runs)| runs.iter())
            .collect()
    }

    pub fn datasets(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.cells.keys().map(|k| &k.dataset).collect();
        set.into_iter().cloned().collect()
    }
}

/// Mean and sample standard deviation; `std` is absent for a single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: Option<f64>,
    pub n: usize,
}

impl MeanStd {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            mean: mean(values),
            std: (values.len() >= 2).then(|| sample_std(values)),
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub dataset: String,
    pub method: String,
    pub lr: Lr,
    pub n_seeds: usize,
    pub best_val_acc: MeanStd,
    pub zero_shot: BTreeMap<String, MeanStd>,
    pub delta_entropy: Option<MeanStd>,
    pub delta_erf: Option<MeanStd>,
    pub delta_gini: Option<MeanStd>,
    pub delta_head_diversity: Option<MeanStd>,
}

fn collect_defined<'a>(
    runs: impl IntoIterator<Item = &'a JoinedRun>,
    f: impl Fn(&JoinedRun) -> Option<f64>,
) -> Vec<f64> {
    runs.into_iter().filter_map(f).collect()
}

/// Seed statistics of one cell, accumulated in ascending seed order.
pub fn aggregate_cell(key: &CellKey, runs: &[JoinedRun]) -> Result<CellSummary> {
    if runs.is_empty() {
        return Err(AggregateError::EmptyGroup {
            dataset: key.dataset.clone(),
            method: key.method.label(),
        });
    }
    let mut sorted: Vec<&JoinedRun> = runs.iter().collect();
    sorted.sort_by_key(|r| r.record.seed);
    let acc: Vec<f64> = sorted.iter().map(|r| r.record.best_val_acc).collect();
    let benchmarks: BTreeSet<&String> = sorted
        .iter()
        .flat_map(|r| r.record.zero_shot.keys())
        .collect();
    let zero_shot = benchmarks
        .into_iter()
        .filter_map(|b| {
            let vals = collect_defined(sorted.iter().copied(), |r| {
                r.record.zero_shot.get(b).copied()
            });
            MeanStd::from_values(&vals).map(|ms| (b.clone(), ms))
        })
        .collect();
    let drift = |m: MetricName| {
        MeanStd::from_values(&collect_defined(sorted.iter().copied(), |r| r.run_drift(m)))
    };
    Ok(CellSummary {
        dataset: key.dataset.clone(),
        method: key.method.label(),
        lr: key.lr,
        n_seeds: sorted.len(),
        best_val_acc: MeanStd::from_values(&acc).expect("nonempty"),
        zero_shot,
        delta_entropy: drift(MetricName::Entropy),
        delta_erf: drift(MetricName::Erf),
        delta_gini: drift(MetricName::Gini),
        delta_head_diversity: drift(MetricName::HeadDiversity),
    })
}

pub fn summarize_cells(matrix: &RunMatrix) -> Result<Vec<CellSummary>> {
    matrix
        .cells
        .iter()
        .map(|(k, runs)| aggregate_cell(k, runs))
        .collect()
}

fn push_mean_std(out: &mut Vec<String>, ms: Option<&MeanStd>) {
    match ms {
        Some(ms) => {
            out.push(ms.mean.to_string());
            out.push(ms.std.map(|s| s.to_string()).unwrap_or_default());
        }
        None => {
            out.push(String::new());
            out.push(String::new());
        }
    }
}

/// Full-precision per-cell CSV; values use the shortest round-tripping form.
pub fn summary_csv(summaries: &[CellSummary]) -> String {
    let benchmarks: BTreeSet<&String> = summaries.iter().flat_map(|s| s.zero_shot.keys()).collect();
    let mut header: Vec<String> = [
        "dataset",
        "method",
        "lr",
        "n_seeds",
        "best_val_acc_mean",
        "best_val_acc_std",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for b in &benchmarks {
        header.push(format!("zs_{b}_mean"));
        header.push(format!("zs_{b}_std"));
    }
    for m in [
        "delta_entropy",
        "delta_erf",
        "delta_gini",
        "delta_head_diversity",
    ] {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    let mut out = header.join(",");
    out.push('\n');
    for s in summaries {
        let mut row = vec![
            csv_text(&s.dataset),
            csv_text(&s.method),
            s.lr.to_string(),
            s.n_seeds.to_string(),
        ];
        push_mean_std(&mut row, Some(&s.best_val_acc));
        for b in &benchmarks {
            push_mean_std(&mut row, s.zero_shot.get(*b));
        }
        for ms in [
            &s.delta_entropy,
            &s.delta_erf,
            &s.delta_gini,
            &s.delta_head_diversity,
        ] {
            push_mean_std(&mut row, ms.as_ref());
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row of the per-(dataset, method) aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummaryRow {
    pub dataset: String,
    pub method: String,
    pub n_runs: usize,
    pub delta_entropy: Option<f64>,
    pub delta_erf: Option<f64>,
    pub best_val_acc: f64,
    pub zero_shot: Option<f64>,
}

/// Unweighted means over every run of each (dataset, method) group.
pub fn method_summary(matrix: &RunMatrix, benchmark: &str) -> Result<Vec<MethodSummaryRow>> {
    let groups = matrix.groups();
    if groups.is_empty() {
        return Err(AggregateError::EmptyGroup {
            dataset: "*".into(),
            method: "*".into(),
        });
    }
    groups
        .into_iter()
        .map(|((dataset, method), runs)| {
            if runs.is_empty() {
                return Err(AggregateError::EmptyGroup {
                    dataset,
                    method: method.label(),
                });
            }
            let mean_of = |vals: Vec<f64>| (!vals.is_empty()).then(|| mean(&vals));
            let acc: Vec<f64> = runs.iter().map(|r| r.record.best_val_acc).collect();
            Ok(MethodSummaryRow {
                n_runs: runs.len(),
                delta_entropy: mean_of(collect_defined(runs.iter().copied(), |r| {
                    r.run_drift(MetricName::Entropy)
                })),
                delta_erf: mean_of(collect_defined(runs.iter().copied(), |r| {
                    r.run_drift(MetricName::Erf)
                })),
                best_val_acc: mean(&acc),
                zero_shot: mean_of(collect_defined(runs.iter().copied(), |r| {
                    r.record.zero_shot.get(benchmark).copied()
                })),
                dataset,
                method: method.label(),
            })
        })
        .collect()
}

/// Mean per-layer drift on an lr x layer grid for one (dataset, method).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub dataset: String,
    pub method: String,
    pub metric: String,
    pub lrs: Vec<Lr>,
    pub n_layers: usize,
    /// `values[lr][layer]`, `None` where no run had a defined drift.
    pub values: Vec<Vec<Option<f64>>>,
}

impl Heatmap {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lr");
        for l in 1..=self.n_layers {
            out.push_str(&format!(",layer_{l}"));
        }
        out.push('\n');
        for (lr, row) in self.lrs.iter().zip(&self.values) {
            out.push_str(&lr.to_string());
            for v in row {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn get(&self, lr: f64, layer: usize) -> Option<f64> {
        let row = self.lrs.iter().position(|l| *l == Lr(lr))?;
        self.values[row]
            .get(layer.checked_sub(1)?)
            .copied()
            .flatten()
    }
}

pub fn layer_heatmap(
    matrix: &RunMatrix,
    dataset: &str,
    method: &MethodKey,
    metric: MetricName,
) -> Result<Heatmap> {
    let cells: Vec<(&CellKey, &Vec<JoinedRun>)> = matrix
        .cells
        .iter()
        .filter(|(k, _)| k.dataset == dataset && &k.method == method)
        .collect();
    let first = cells
        .first()
        .and_then(|(_, runs)| runs.first())
        .ok_or_else(|| AggregateError::EmptyGroup {
            dataset: dataset.to_string(),
            method: method.label(),
        })?;
    let n_layers = first.drift.per_layer.len();
    let mut lrs = Vec::new();
    let mut values = Vec::new();
    for (key, runs) in cells {
        for r in runs {
            if r.drift.per_layer.len() != n_layers {
                return Err(AggregateError::InconsistentLayers {
                    run_id: r.record.run_id.clone(),
                    expected: n_layers,
                    found: r.drift.per_layer.len(),
                });
            }
        }
        let row = (0..n_layers)
            .map(|layer| {
                let vals =
                    collect_defined(runs.iter(), |r| r.drift.per_layer[layer].values.get(metric));
                (!vals.is_empty()).then(|| mean(&vals))
            })
            .collect();
        lrs.push(key.lr);
        values.push(row);
    }
    Ok(Heatmap {
        dataset: dataset.to_string(),
        method: method.label(),
        metric: metric.key().to_string(),
        lrs,
        n_layers,
        values,
    })
}

pub fn layer_heatmaps(matrix: &RunMatrix, metric: MetricName) -> Result<Vec<Heatmap>> {
    matrix
        .groups()
        .keys()
        .map(|(dataset, method)| layer_heatmap(matrix, dataset, method, metric))
        .collect()
}

/// File-name friendly form: lowercase ASCII alphanumerics joined by `_`.
pub fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationPair {
    pub pearson: StatResult,
    pub spearman: StatResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub dataset: String,
    pub benchmark: String,
    pub n_runs: usize,
    pub entropy_vs_zero_shot: CorrelationPair,
    pub entropy_vs_val_acc: CorrelationPair,
}

/// Run-level correlations of entropy drift with transfer and in-domain accuracy.
pub fn correlation_report(
    matrix: &RunMatrix,
    dataset: &str,
    benchmark: &str,
) -> Result<CorrelationReport> {
    let runs: Vec<&JoinedRun> = matrix
        .dataset_runs(dataset)
        .into_iter()
        .filter(|r| {
            r.run_drift(MetricName::Entropy).is_some() && r.record.zero_shot.contains_key(benchmark)
        })
        .collect();
    if runs.len() < 3 {
        return Err(AggregateError::TooFewRuns {
            needed: 3,
            got: runs.len(),
        });
    }
    let drift: Vec<f64> = runs
        .iter()
        .map(|r| r.run_drift(MetricName::Entropy).expect("filtered"))
        .collect();
    let zs: Vec<f64> = runs.iter().map(|r| r.record.zero_shot[benchmark]).collect();
    let acc: Vec<f64> = runs.iter().map(|r| r.record.best_val_acc).collect();
    Ok(CorrelationReport {
        dataset: dataset.to_string(),
        benchmark: benchmark.to_string(),
        n_runs: runs.len(),
        entropy_vs_zero_shot: CorrelationPair {
            pearson: pearson_test(&drift, &zs)?,
            spearman: spearman_test(&drift, &zs)?,
        },
        entropy_vs_val_acc: CorrelationPair {
            pearson: pearson_test(&drift, &acc)?,
            spearman: spearman_test(&drift, &acc)?,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetSensitivity {
    pub run_id: String,
    pub n_subsets: usize,
    /// Coefficient of variation of each run-level metric across subsets.
    pub cv: MetricValues,
}

/// Coefficient of variation of run-level metrics across evaluation subsets of one run.
pub fn subset_sensitivity(profiles: &[MetricReport]) -> Result<SubsetSensitivity> {
    if profiles.len() < 2 {
        return Err(AggregateError::TooFewRuns {
            needed: 2,
            got: profiles.len(),
        });
    }
    let run_id = &profiles[0].run_id;
    if let Some(other) = profiles.iter().find(|p| &p.run_id != run_id) {
        return Err(AggregateError::SubsetRunMismatch(
            run_id.clone(),
            other.run_id.clone(),
        ));
    }
    let cv_of = |m: MetricName| -> Result<f64> {
        let vals: Vec<f64> = profiles.iter().map(|p| p.run_level.get(m)).collect();
        Ok(coefficient_of_variation(&vals)?)
    };
    Ok(SubsetSensitivity {
        run_id: run_id.clone(),
        n_subsets: profiles.len(),
        cv: MetricValues {
            entropy_bits: cv_of(MetricName::Entropy)?,
            erf95: cv_of(MetricName::Erf)?,
            gini: cv_of(MetricName::Gini)?,
            head_diversity: cv_of(MetricName::HeadDiversity)?,
            p2p_entropy_bits: cv_of(MetricName::PatchEntropy)?,
        },
    })
}
