use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use attn_drift::aggregate::{
    auxiliary_rows, auxiliary_table, cka_correlation_rows, correlation_report, correlation_table,
    emit_table, inferential_table, layer_heatmaps, load_corpus, method_summary,
    method_summary_table, multiseed_table, read_json, slug, subset_sensitivity, summarize_cells,
    summary_csv, CkaRecord, Corpus, Format, SubsetSensitivity, Table,
};
use attn_drift::cka::layerwise_cka_profile;
use attn_drift::dump::{read_attention_dump, read_feature_dump, validate_dump, ValidationReport};
use attn_drift::metrics::{run_structural_profile_at, MetricName, MetricReport};
use attn_drift::rollout::rollout_summary;
use attn_drift::stats::PermutationConfig;
use serde::Serialize;

use crate::output::{ensure_dir, file_stem, sorted_inputs, write_json, write_text};
use crate::stats_request::{run_request, StatsRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// Inputs failed validation; the report was still written.
    Invalid,
}

#[derive(Debug, Serialize)]
struct FileValidation {
    path: String,
    run_id: Option<String>,
    valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<ValidationReport>,
}

pub fn validate(inputs: &[PathBuf], out: Option<&Path>, tol: f64) -> anyhow::Result<Outcome> {
    if !(tol >= 0.0 && tol.is_finite()) {
        bail!("--tol must be a finite non-negative number, got {tol}");
    }
    let mut files = Vec::new();
    for path in sorted_inputs(inputs) {
        let entry = match read_attention_dump(&path) {
            Ok(dump) => {
                let report = validate_dump(&dump, tol);
                FileValidation {
                    path: path.display().to_string(),
                    run_id: Some(dump.meta.run_id.clone()),
                    valid: report.is_valid(),
                    error: None,
                    report: Some(report),
                }
            }
            Err(e) => FileValidation {
                path: path.display().to_string(),
                run_id: None,
                valid: false,
                error: Some(e.to_string()),
                report: None,
            },
        };
        match (&entry.error, &entry.report) {
            (Some(e), _) => println!("INVALID {}: {e}", entry.path),
            (None, Some(r)) if !r.is_valid() => {
                let first = r
                    .shape_issues
                    .first()
                    .cloned()
                    .or_else(|| {
                        r.entry_violations.first().map(|v| {
                            format!(
                                "image {} layer {} head {} row {} col {}: {:?} value {}",
                                v.image, v.layer, v.head, v.row, v.col, v.issue, v.value
                            )
                        })
                    })
                    .or_else(|| {
                        r.row_violations.first().map(|v| {
                            format!(
                                "image {} layer {} head {} row {}: sum {}",
                                v.image, v.layer, v.head, v.row, v.sum
                            )
                        })
                    })
                    .unwrap_or_default();
                println!(
                    "INVALID {}: {} violation(s), first at {first}",
                    entry.path,
                    r.violation_count()
                );
            }
            _ => println!("OK {}", entry.path),
        }
        files.push(entry);
    }
    let all_valid = files.iter().all(|f| f.valid);
    if let Some(dir) = out {
        ensure_dir(dir)?;
        #[derive(Serialize)]
        struct Summary<'a> {
            tolerance: f64,
            valid: bool,
            files: &'a [FileValidation],
        }
        write_json(
            &dir.join("validation.json"),
            &Summary {
                tolerance: tol,
                valid: all_valid,
                files: &files,
            },
        )?;
    }
    Ok(if all_valid {
        Outcome::Ok
    } else {
        Outcome::Invalid
    })
}

fn claim_run_id(
    seen: &mut BTreeMap<String, PathBuf>,
    run_id: &str,
    path: &Path,
) -> anyhow::Result<()> {
    if let Some(prev) = seen.insert(run_id.to_string(), path.to_path_buf()) {
        bail!(
            "run_id `{run_id}` appears in both {} and {}",
            prev.display(),
            path.display()
        );
    }
    Ok(())
}

pub fn metrics(
    inputs: &[PathBuf],
    baseline: Option<&Path>,
    out: &Path,
    threshold: f64,
    with_rollout: bool,
) -> anyhow::Result<Outcome> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        bail!("--threshold must lie in (0, 1], got {threshold}");
    }
    let baseline: Option<MetricReport> = baseline.map(read_json).transpose()?;
    ensure_dir(out)?;
    let mut seen = BTreeMap::new();
    for path in sorted_inputs(inputs) {
        let dump = read_attention_dump(&path).with_context(|| path.display().to_string())?;
        claim_run_id(&mut seen, &dump.meta.run_id, &path)?;
        let mut report = run_structural_profile_at(&dump, baseline.as_ref(), threshold)
            .with_context(|| path.display().to_string())?;
        if with_rollout {
            let summary = rollout_summary(&dump).with_context(|| path.display().to_string())?;
            report.rollout = Some(summary.mean);
        }
        let target = out.join(format!("{}.report.json", file_stem(&report.run_id)));
        write_text(&target, &report.to_json_string())?;
        println!("{} -> {}", path.display(), target.display());
    }
    Ok(Outcome::Ok)
}

pub fn rollout(inputs: &[PathBuf], out: &Path) -> anyhow::Result<Outcome> {
    ensure_dir(out)?;
    let mut seen = BTreeMap::new();
    for path in sorted_inputs(inputs) {
        let dump = read_attention_dump(&path).with_context(|| path.display().to_string())?;
        claim_run_id(&mut seen, &dump.meta.run_id, &path)?;
        let summary = rollout_summary(&dump).with_context(|| path.display().to_string())?;
        let target = out.join(format!("{}.rollout.json", file_stem(&summary.run_id)));
        write_json(&target, &summary)?;
        println!("{} -> {}", path.display(), target.display());
    }
    Ok(Outcome::Ok)
}

pub fn cka(a: &Path, b: &Path, out: &Path) -> anyhow::Result<Outcome> {
    let fa = read_feature_dump(a).with_context(|| a.display().to_string())?;
    let fb = read_feature_dump(b).with_context(|| b.display().to_string())?;
    let profile = layerwise_cka_profile(&fa, &fb)
        .with_context(|| format!("{} vs {}", a.display(), b.display()))?;
    let record = CkaRecord {
        run_id: fa.meta.run_id.clone(),
        reference_run_id: fb.meta.run_id.clone(),
        profile,
    };
    ensure_dir(out)?;
    let target = out.join(format!("{}.cka.json", file_stem(&record.run_id)));
    write_json(&target, &record)?;
    println!(
        "mean CKA {:.4} -> {}",
        record.profile.mean,
        target.display()
    );
    Ok(Outcome::Ok)
}

fn write_table(out: &Path, stem: &str, table: &Table, formats: &[Format]) -> anyhow::Result<()> {
    for &format in formats {
        let text = emit_table(table, format)?;
        write_text(&out.join(format!("{stem}.{}", format.extension())), &text)?;
    }
    Ok(())
}

pub fn stats(
    request: &Path,
    out: &Path,
    formats: &[Format],
    cfg: &PermutationConfig,
) -> anyhow::Result<Outcome> {
    let req: StatsRequest = read_json(request)?;
    if req.tests.is_empty() && req.multiseed.is_empty() {
        bail!("{}: request lists no tests", request.display());
    }
    let result = run_request(&req, cfg).with_context(|| request.display().to_string())?;
    ensure_dir(out)?;
    write_json(&out.join("stats.json"), &result)?;
    if !result.tests.is_empty() {
        write_table(out, "stats", &inferential_table(&result.tests), formats)?;
    }
    if !result.multiseed.is_empty() {
        write_table(
            out,
            "multiseed",
            &multiseed_table(&result.multiseed),
            formats,
        )?;
    }
    Ok(Outcome::Ok)
}

fn benchmark_of<'a>(corpus: &'a Corpus, flag: Option<&'a str>) -> &'a str {
    flag.unwrap_or(&corpus.manifest.benchmark)
}

fn subset_summaries(corpus: &Corpus) -> anyhow::Result<BTreeMap<String, SubsetSensitivity>> {
    corpus
        .subsets
        .iter()
        .map(|(run_id, profiles)| {
            let s =
                subset_sensitivity(profiles).with_context(|| format!("subsets of `{run_id}`"))?;
            Ok((run_id.clone(), s))
        })
        .collect()
}

#[derive(Serialize)]
#[serde(untagged)]
enum Maybe<T> {
    Value(T),
    Skipped { skipped: String },
}

impl<T, E: std::fmt::Display> From<Result<T, E>> for Maybe<T> {
    fn from(r: Result<T, E>) -> Self {
        match r {
            Ok(v) => Maybe::Value(v),
            Err(e) => Maybe::Skipped {
                skipped: e.to_string(),
            },
        }
    }
}

pub fn aggregate(manifest: &Path, out: &Path, benchmark: Option<&str>) -> anyhow::Result<Outcome> {
    let corpus = load_corpus(manifest)?;
    let benchmark = benchmark_of(&corpus, benchmark).to_string();
    let matrix = corpus.run_matrix()?;
    ensure_dir(out)?;

    let summaries = summarize_cells(&matrix)?;
    write_text(&out.join("summary.csv"), &summary_csv(&summaries))?;
    write_json(&out.join("completeness.json"), matrix.completeness())?;

    let mut names = BTreeSet::new();
    for heatmap in layer_heatmaps(&matrix, MetricName::Entropy)? {
        let name = format!(
            "layer_heatmap_{}_{}.csv",
            slug(&heatmap.dataset),
            slug(&heatmap.method)
        );
        if !names.insert(name.clone()) {
            bail!("two groups map to the same heatmap file {name}");
        }
        write_text(&out.join(name), &heatmap.to_csv())?;
    }

    #[derive(Serialize)]
    struct Correlations {
        benchmark: String,
        datasets: BTreeMap<String, Maybe<attn_drift::aggregate::CorrelationReport>>,
        cka_vs_entropy: Maybe<Vec<attn_drift::aggregate::CorrelationRow>>,
        subset_sensitivity: BTreeMap<String, SubsetSensitivity>,
    }
    let correlations = Correlations {
        datasets: matrix
            .datasets()
            .into_iter()
            .map(|d| {
                let r = correlation_report(&matrix, &d, &benchmark);
                (d, r.into())
            })
            .collect(),
        cka_vs_entropy: cka_correlation_rows(&matrix).into(),
        subset_sensitivity: subset_summaries(&corpus)?,
        benchmark,
    };
    write_json(&out.join("correlations.json"), &correlations)?;

    let c = matrix.completeness();
    eprintln!(
        "{} runs in {} cells; {} missing, {} without report, {} unresolved baseline(s)",
        matrix.n_runs(),
        matrix.cells().len(),
        c.missing_runs.len(),
        c.records_without_report.len(),
        c.unresolved_baselines.len()
    );
    Ok(Outcome::Ok)
}

pub fn report(
    manifest: &Path,
    out: &Path,
    formats: &[Format],
    benchmark: Option<&str>,
) -> anyhow::Result<Outcome> {
    let corpus = load_corpus(manifest)?;
    let benchmark = benchmark_of(&corpus, benchmark).to_string();
    let matrix = corpus.run_matrix()?;
    ensure_dir(out)?;

    let rows = method_summary(&matrix, &benchmark)?;
    write_table(
        out,
        "method_summary",
        &method_summary_table(&rows, &benchmark),
        formats,
    )?;

    let has_aux = !corpus.cka.is_empty()
        || !corpus.subsets.is_empty()
        || corpus.reports.iter().any(|r| r.rollout.is_some());
    if has_aux {
        let aux = auxiliary_rows(&matrix, &subset_summaries(&corpus)?);
        write_table(out, "auxiliary", &auxiliary_table(&aux), formats)?;
    }
    if !corpus.cka.is_empty() {
        let rows = cka_correlation_rows(&matrix)?;
        write_table(out, "cka_correlation", &correlation_table(&rows), formats)?;
    }
    Ok(Outcome::Ok)
}
