//! Row types and column layouts of the report tables.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{
    format_signed, mean, AggregateError, Cell, Column, JoinedRun, MethodKey, MethodSummaryRow,
    Result, RunMatrix, SubsetSensitivity, Table,
};
use crate::metrics::MetricName;
use crate::stats::{cohens_d, pearson_test, spearman_test, welch_t, StatResult};

/// Human name of a zero-shot benchmark key.
pub fn benchmark_name(key: &str) -> String {
    match key {
        "cifar100" => "CIFAR-100".into(),
        "cifar10" => "CIFAR-10".into(),
        "flowers102" => "Flowers102".into(),
        other => other.to_string(),
    }
}

pub fn method_summary_table(rows: &[MethodSummaryRow], benchmark: &str) -> Table {
    let bench = benchmark_name(benchmark);
    Table {
        columns: vec![
            Column::new("dataset", "Dataset", "Dataset"),
            Column::new("method", "Method", "Method"),
            Column::new(
                "mean_delta_entropy_pct",
                "Mean ΔEntropy (%)",
                "Mean $\\Delta$Entropy (\\%)",
            )
            .right(),
            Column::new(
                "mean_delta_erf_pct",
                "Mean ΔERF (%)",
                "Mean $\\Delta$ERF (\\%)",
            )
            .right(),
            Column::new(
                "mean_best_val_acc_pct",
                "Mean Best Val Acc (%)",
                "Mean Best Val Acc (\\%)",
            )
            .right(),
            Column::new(
                &format!("mean_{benchmark}_zs_pct"),
                &format!("Mean {bench} ZS (%)"),
                &format!("Mean {bench} ZS (\\%)"),
            )
            .right(),
        ],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    Cell::text(&r.dataset),
                    Cell::text(&r.method),
                    Cell::or_missing(r.delta_entropy, Cell::SignedPercent),
                    Cell::or_missing(r.delta_erf, Cell::SignedPercent),
                    Cell::Percent(r.best_val_acc),
                    Cell::or_missing(r.zero_shot, Cell::Percent),
                ]
            })
            .collect(),
    }
}

/// Rollout, patch-to-patch, CKA and subset-stability summary of one group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuxiliaryRow {
    pub model: String,
    pub n_runs: usize,
    pub rollout_entropy_bits: Option<f64>,
    pub rollout_erf95: Option<f64>,
    pub rollout_gini: Option<f64>,
    pub p2p_entropy_bits: f64,
    pub mean_cka: Option<f64>,
    pub entropy_cv: Option<f64>,
}

fn mean_defined<'a>(
    runs: impl IntoIterator<Item = &'a &'a JoinedRun>,
    f: impl Fn(&JoinedRun) -> Option<f64>,
) -> Option<f64> {
    let vals: Vec<f64> = runs.into_iter().filter_map(|r| f(r)).collect();
    (!vals.is_empty()).then(|| mean(&vals))
}

/// One row per (dataset, method); each value is the mean over the group's
/// runs that carry it.
pub fn auxiliary_rows(
    matrix: &RunMatrix,
    subsets: &BTreeMap<String, SubsetSensitivity>,
) -> Vec<AuxiliaryRow> {
    matrix
        .groups()
        .into_iter()
        .map(|((dataset, method), runs)| AuxiliaryRow {
            model: format!("{} {}", method.label(), dataset),
            n_runs: runs.len(),
            rollout_entropy_bits: mean_defined(&runs, |r| r.rollout.map(|m| m.entropy_bits)),
            rollout_erf95: mean_defined(&runs, |r| r.rollout.map(|m| m.erf95)),
            rollout_gini: mean_defined(&runs, |r| r.rollout.map(|m| m.gini)),
            p2p_entropy_bits: mean_defined(&runs, |r| Some(r.report.run_level.p2p_entropy_bits))
                .expect("groups are nonempty"),
            mean_cka: mean_defined(&runs, |r| r.cka.as_ref().map(|c| c.mean)),
            entropy_cv: mean_defined(&runs, |r| {
                subsets.get(&r.record.run_id).map(|s| s.cv.entropy_bits)
            }),
        })
        .collect()
}

pub fn auxiliary_table(rows: &[AuxiliaryRow]) -> Table {
    Table {
        columns: vec![
            Column::new("model", "Model", "Model"),
            Column::new(
                "rollout_entropy_bits",
                "Rollout Entropy (bits)",
                "Rollout Entropy (bits)",
            )
            .right(),
            Column::new("rollout_erf95", "Rollout ERF@0.95", "Rollout ERF@0.95").right(),
            Column::new("rollout_gini", "Rollout Gini", "Rollout Gini").right(),
            Column::new(
                "p2p_entropy_bits",
                "Patch-to-Patch Entropy (bits)",
                "Patch-to-Patch Entropy (bits)",
            )
            .right(),
            Column::new(
                "mean_layerwise_cka",
                "Mean Layerwise CKA",
                "Mean Layerwise CKA",
            )
            .right(),
            Column::new("entropy_cv", "Entropy CV", "Entropy CV").right(),
        ],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    Cell::text(&r.model),
                    Cell::or_missing(r.rollout_entropy_bits, Cell::Stat),
                    Cell::or_missing(r.rollout_erf95, Cell::Stat),
                    Cell::or_missing(r.rollout_gini, Cell::Stat),
                    Cell::Stat(r.p2p_entropy_bits),
                    Cell::or_missing(r.mean_cka, Cell::Stat),
                    Cell::or_missing(r.entropy_cv, Cell::Ratio),
                ]
            })
            .collect(),
    }
}

/// Pearson and Spearman of one pair of run-level series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub analysis: String,
    pub analysis_latex: String,
    /// 1-based layer for per-layer rows.
    pub layer: Option<usize>,
    pub n: usize,
    pub pearson: StatResult,
    pub spearman: StatResult,
}

fn cka_runs(matrix: &RunMatrix) -> Vec<&JoinedRun> {
    matrix
        .cells()
        .values()
        .flat_map(|runs| runs.iter())
        .filter(|r| r.cka.is_some())
        .collect()
}

/// CKA-vs-entropy-drift association: the run-level row, then the layer whose
/// per-layer CKA and per-layer entropy drift have the largest |Pearson r|
/// (lowest layer on ties).
pub fn cka_correlation_rows(matrix: &RunMatrix) -> Result<Vec<CorrelationRow>> {
    let runs: Vec<&JoinedRun> = cka_runs(matrix)
        .into_iter()
        .filter(|r| r.run_drift(MetricName::Entropy).is_some())
        .collect();
    if runs.len() < 3 {
        return Err(AggregateError::TooFewRuns {
            needed: 3,
            got: runs.len(),
        });
    }
    let cka_mean: Vec<f64> = runs
        .iter()
        .map(|r| r.cka.as_ref().expect("filtered").mean)
        .collect();
    let drift: Vec<f64> = runs
        .iter()
        .map(|r| r.run_drift(MetricName::Entropy).expect("filtered"))
        .collect();
    let mut rows = vec![CorrelationRow {
        analysis: "Run-level mean CKA vs. mean ΔEntropy".into(),
        analysis_latex: "Run-level mean CKA vs. mean $\\Delta$Entropy".into(),
        layer: None,
        n: runs.len(),
        pearson: pearson_test(&cka_mean, &drift)?,
        spearman: spearman_test(&cka_mean, &drift)?,
    }];

    let n_layers = runs[0].drift.per_layer.len();
    let mut best: Option<CorrelationRow> = None;
    for layer in 0..n_layers {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for r in &runs {
            let profile = r.cka.as_ref().expect("filtered");
            if profile.per_layer.len() != n_layers || r.drift.per_layer.len() != n_layers {
                return Err(AggregateError::InconsistentLayers {
                    run_id: r.record.run_id.clone(),
                    expected: n_layers,
                    found: profile.per_layer.len().min(r.drift.per_layer.len()),
                });
            }
            if let Some(d) = r.drift.per_layer[layer].values.get(MetricName::Entropy) {
                xs.push(profile.per_layer[layer]);
                ys.push(d);
            }
        }
        if xs.len() < 3 {
            continue;
        }
        // a layer with constant CKA or drift carries no association
        let (Ok(pearson), Ok(spearman)) = (pearson_test(&xs, &ys), spearman_test(&xs, &ys)) else {
            continue;
        };
        let better = best
            .as_ref()
            .is_none_or(|b| pearson.statistic.abs() > b.pearson.statistic.abs());
        if better {
            let number = layer + 1;
            best = Some(CorrelationRow {
                analysis: format!("Strongest per-layer association (layer {number})"),
                analysis_latex: format!("Strongest per-layer association (layer {number})"),
                layer: Some(number),
                n: xs.len(),
                pearson,
                spearman,
            });
        }
    }
    rows.extend(best);
    Ok(rows)
}

pub fn correlation_table(rows: &[CorrelationRow]) -> Table {
    Table {
        columns: vec![
            Column::new("analysis", "Analysis", "Analysis"),
            Column::new("n", "n", "$n$").right(),
            Column::new("pearson_r", "Pearson r", "Pearson $r$").right(),
            Column::new("pearson_p", "Pearson p", "Pearson $p$").right(),
            Column::new("spearman_rho", "Spearman ρ", "Spearman $\\rho$").right(),
            Column::new("spearman_p", "Spearman p", "Spearman $p$").right(),
        ],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    Cell::rich(&r.analysis, &r.analysis_latex),
                    Cell::Count(r.n),
                    Cell::Stat(r.pearson.statistic),
                    Cell::or_missing(r.pearson.p_value, Cell::PValue),
                    Cell::Stat(r.spearman.statistic),
                    Cell::or_missing(r.spearman.p_value, Cell::PValue),
                ]
            })
            .collect(),
    }
}

/// A labelled test outcome, optionally with a family-adjusted p-value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferentialRow {
    pub comparison: String,
    pub comparison_latex: Option<String>,
    pub result: StatResult,
    /// Holm-adjusted p-value when the row belongs to a correction family.
    pub adjusted_p: Option<f64>,
}

pub fn inferential_table(rows: &[InferentialRow]) -> Table {
    let any_adjusted = rows.iter().any(|r| r.adjusted_p.is_some());
    let mut columns = vec![
        Column::new("comparison", "Comparison", "Comparison"),
        Column::new("test", "Test", "Test").left(),
        Column::new("statistic", "Statistic", "Statistic").right(),
        Column::new("p_value", "p-value", "$p$-value").right(),
    ];
    if any_adjusted {
        columns.push(Column::new("holm_p", "Holm p", "Holm $p$").right());
    }
    Table {
        columns,
        rows: rows
            .iter()
            .map(|r| {
                let latex = r
                    .comparison_latex
                    .clone()
                    .unwrap_or_else(|| Cell::Text(r.comparison.clone()).latex_text());
                let mut row = vec![
                    Cell::rich(&r.comparison, latex),
                    Cell::rich(r.result.test.display_name(), r.result.test.latex_name()),
                    Cell::Stat(r.result.statistic),
                    Cell::or_missing(r.result.p_value, Cell::PValue),
                ];
                if any_adjusted {
                    row.push(Cell::or_missing(r.adjusted_p, Cell::PValue));
                }
                row
            })
            .collect(),
    }
}

/// Welch comparison of two groups of run-level values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiSeedRow {
    pub comparison: String,
    pub comparison_latex: Option<String>,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub welch: StatResult,
    pub cohens_d: f64,
}

pub fn multiseed_row(
    comparison: &str,
    comparison_latex: Option<&str>,
    a: &[f64],
    b: &[f64],
) -> Result<MultiSeedRow> {
    let welch = welch_t(a, b)?;
    Ok(MultiSeedRow {
        comparison: comparison.to_string(),
        comparison_latex: comparison_latex.map(str::to_string),
        n_a: a.len(),
        n_b: b.len(),
        mean_a: mean(a),
        mean_b: mean(b),
        cohens_d: cohens_d(a, b)?,
        welch,
    })
}

pub fn multiseed_table(rows: &[MultiSeedRow]) -> Table {
    Table {
        columns: vec![
            Column::new("comparison", "Comparison", "Comparison"),
            Column::new("seeds", "Seeds", "Seeds").right(),
            Column::new(
                "mean_delta_entropy_pct",
                "Mean ΔEntropy (%)",
                "Mean $\\Delta$Entropy (\\%)",
            )
            .right(),
            Column::new("welch_t", "Welch t", "Welch $t$").right(),
            Column::new("welch_p", "Welch p", "Welch $p$").right(),
            Column::new("cohens_d", "Cohen's d", "Cohen's $d$").right(),
        ],
        rows: rows
            .iter()
            .map(|r| {
                let latex = r
                    .comparison_latex
                    .clone()
                    .unwrap_or_else(|| Cell::Text(r.comparison.clone()).latex_text());
                vec![
                    Cell::rich(&r.comparison, latex),
                    Cell::text(format!("{} vs {}", r.n_a, r.n_b)),
                    Cell::text(format!(
                        "{} vs {}",
                        format_signed(r.mean_a, 2),
                        format_signed(r.mean_b, 2)
                    )),
                    Cell::Stat(r.welch.statistic),
                    Cell::or_missing(r.welch.p_value, Cell::PValue),
                    Cell::Stat(r.cohens_d),
                ]
            })
            .collect(),
    }
}

/// Group label used in multi-seed comparisons, e.g. `Full FT (EuroSAT)`.
pub fn group_label(dataset: &str, method: &MethodKey) -> String {
    format!("{} ({dataset})", method.label())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{emit_table, Format};
    use crate::stats::TestKind;

    #[test]
    fn multiseed_row_layout() {
        let row = multiseed_row(
            "Full FT vs. LoRA r=8 (EuroSAT)",
            None,
            &[-0.2, -0.25, -0.21],
            &[0.85, 0.9, 0.86],
        )
        .unwrap();
        let tex = emit_table(&multiseed_table(&[row]), Format::Latex).unwrap();
        assert!(tex.starts_with("\\begin{tabular}{lrrrrr}\n"));
        assert!(tex.contains("Full FT vs. LoRA r=8 (EuroSAT) & 3 vs 3 & -0.22 vs +0.87 & "));
    }

    #[test]
    fn inferential_layout() {
        let result = StatResult {
            test: TestKind::PermSpearman,
            statistic: -1.0,
            p_value: Some(2.0 / 120.0),
            df: None,
            effect_size: None,
            n: vec![5],
            exact: true,
        };
        let row = InferentialRow {
            comparison: "LR vs. ΔEntropy".into(),
            comparison_latex: Some("LR vs. $\\Delta$Entropy".into()),
            result,
            adjusted_p: None,
        };
        let tex = emit_table(&inferential_table(&[row]), Format::Latex).unwrap();
        assert!(tex.starts_with("\\begin{tabular}{llrr}\n"));
        assert!(tex.contains(
            "LR vs. $\\Delta$Entropy & Exact permutation Spearman $\\rho$ & -1.000 & 0.0167 \\\\\n"
        ));
    }
}
