use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{io_err, DumpError, Method, Result};

pub const REQUIRED_RECORD_KEYS: [&str; 8] = [
    "run_id",
    "dataset",
    "method",
    "lr",
    "seed",
    "best_val_acc",
    "zero_shot",
    "baseline_run_id",
];

/// Scalar outcome of one training run.
///
/// Keys not named here are kept in `extra` and written back unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub dataset: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub lr: f64,
    pub seed: i64,
    pub best_val_acc: f64,
    pub zero_shot: BTreeMap<String, f64>,
    pub baseline_run_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_layer: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl RunRecord {
    /// Parses and validates a record from JSON text; `origin` is only used in errors.
    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|source| DumpError::Json {
            path: origin.to_path_buf(),
            source,
        })?;
        let obj = value.as_object().ok_or_else(|| DumpError::InvalidRecord {
            path: origin.to_path_buf(),
            message: "run record must be a JSON object".into(),
        })?;
        for key in REQUIRED_RECORD_KEYS {
            if !obj.contains_key(key) {
                return Err(DumpError::MissingKey {
                    path: origin.to_path_buf(),
                    key,
                });
            }
        }
        let record: RunRecord =
            serde_json::from_value(value).map_err(|source| DumpError::Json {
                path: origin.to_path_buf(),
                source,
            })?;
        record.check(origin)?;
        Ok(record)
    }

    pub fn check(&self, origin: &Path) -> Result<()> {
        let range_err = |field: String, value: f64| DumpError::OutOfRange {
            path: origin.to_path_buf(),
            field,
            value,
        };
        if self.run_id.is_empty() {
            return Err(DumpError::InvalidRecord {
                path: origin.to_path_buf(),
                message: "run_id is empty".into(),
            });
        }
        if !(0.0..=100.0).contains(&self.best_val_acc) {
            return Err(range_err("best_val_acc".into(), self.best_val_acc));
        }
        for (name, &acc) in &self.zero_shot {
            if !(0.0..=100.0).contains(&acc) {
                return Err(range_err(format!("zero_shot.{name}"), acc));
            }
        }
        if self.method.is_adapted() && !(self.lr > 0.0) {
            return Err(range_err("lr".into(), self.lr));
        }
        Ok(())
    }

    /// Table label, e.g. `LoRA r=8`.
    pub fn method_label(&self) -> String {
        method_label(self.method, self.variant.as_deref())
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(io_err(path))
    }
}

pub fn method_label(method: Method, variant: Option<&str>) -> String {
    match variant {
        Some(v) if !v.is_empty() => format!("{} {}", method.display_name(), v),
        _ => method.display_name().to_string(),
    }
}

pub fn read_run_record(path: impl AsRef<Path>) -> Result<RunRecord> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    RunRecord::from_json_str(&text, path)
}
