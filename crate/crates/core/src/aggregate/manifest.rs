//! Manifest-driven corpus discovery.
//!
//! ```json
//! {
//!   "records": ["records/"],
//!   "reports": ["reports/"],
//!   "baselines": ["eurosat-pretrained"],
//!   "cka": ["cka/"],
//!   "subsets": ["subsets/"],
//!   "benchmark": "cifar100"
//! }
//! ```
//!
//! Entries are files or directories; a directory contributes every `*.json`
//! file directly inside it. Relative paths resolve against the manifest's own
//! directory. All files are read in sorted path order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{build_run_matrix, AggregateError, Result, RunMatrix, DEFAULT_BENCHMARK};
use crate::cka::CkaProfile;
use crate::dump::{read_run_record, RunRecord};
use crate::metrics::MetricReport;

fn default_benchmark() -> String {
    DEFAULT_BENCHMARK.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub records: Vec<PathBuf>,
    pub reports: Vec<PathBuf>,
    /// run_ids of the pretrained reference reports.
    pub baselines: Vec<String>,
    #[serde(default)]
    pub cka: Vec<PathBuf>,
    /// Metric reports of the same run over different evaluation subsets.
    #[serde(default)]
    pub subsets: Vec<PathBuf>,
    #[serde(default = "default_benchmark")]
    pub benchmark: String,
}

/// CKA profile of one run against its reference, as written by `cka`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkaRecord {
    pub run_id: String,
    pub reference_run_id: String,
    #[serde(flatten)]
    pub profile: CkaProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: Manifest,
    pub records: Vec<RunRecord>,
    pub reports: Vec<MetricReport>,
    pub baselines: BTreeMap<String, MetricReport>,
    pub cka: BTreeMap<String, CkaRecord>,
    pub subsets: BTreeMap<String, Vec<MetricReport>>,
}

fn input_err(path: &Path, message: impl ToString) -> AggregateError {
    AggregateError::Input {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

fn expand(base: &Path, entries: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in entries {
        let path = base.join(entry);
        if path.is_dir() {
            let listing = fs::read_dir(&path).map_err(|e| input_err(&path, e))?;
            for item in listing {
                let item = item.map_err(|e| input_err(&path, e))?.path();
                if item.is_file() && item.extension().is_some_and(|e| e == "json") {
                    out.push(item);
                }
            }
        } else {
            out.push(path);
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| input_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| input_err(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    read_json(path)
}

/// Reads every file named by the manifest at `path`.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let manifest = read_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("."));

    let records = expand(base, &manifest.records)?
        .iter()
        .map(|p| read_run_record(p).map_err(AggregateError::from))
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::new();
    let mut baselines = BTreeMap::new();
    for p in expand(base, &manifest.reports)? {
        let report: MetricReport = read_json(&p)?;
        if manifest.baselines.contains(&report.run_id) {
            if baselines.insert(report.run_id.clone(), report).is_some() {
                return Err(input_err(&p, "duplicate baseline report"));
            }
        } else {
            reports.push(report);
        }
    }
    for id in &manifest.baselines {
        if !baselines.contains_key(id) {
            return Err(input_err(
                path,
                format!("baseline `{id}` has no metric report"),
            ));
        }
    }

    let mut cka = BTreeMap::new();
    for p in expand(base, &manifest.cka)? {
        let rec: CkaRecord = read_json(&p)?;
        if cka.contains_key(&rec.run_id) {
            return Err(input_err(
                &p,
                format!("duplicate CKA profile for `{}`", rec.run_id),
            ));
        }
        cka.insert(rec.run_id.clone(), rec);
    }

    let mut subsets: BTreeMap<String, Vec<MetricReport>> = BTreeMap::new();
    for p in expand(base, &manifest.subsets)? {
        let report: MetricReport = read_json(&p)?;
        subsets
            .entry(report.run_id.clone())
            .or_default()
            .push(report);
    }

    Ok(Corpus {
        manifest,
        records,
        reports,
        baselines,
        cka,
        subsets,
    })
}

impl Corpus {
    /// Joined run matrix with CKA profiles attached.
    pub fn run_matrix(&self) -> Result<RunMatrix> {
        let mut matrix =
            build_run_matrix(self.records.clone(), self.reports.clone(), &self.baselines)?;
        matrix.attach_cka(
            self.cka
                .iter()
                .map(|(id, rec)| (id.clone(), rec.profile.clone()))
                .collect(),
        );
        Ok(matrix)
    }
}
