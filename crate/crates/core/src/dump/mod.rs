//! Binary attention/feature dumps and JSON run records.
//!
//! Both binary formats share a 32/28-byte little-endian header followed by a
//! flat `f32` payload:
//!
//! ```text
//! ATDM | version u32 | n_images u32 | n_layers u32 | n_heads u32 | n_tokens u32 | dtype u8 | 7 x 0u8 | payload
//! FTDM | version u32 | n_layers u32 | n_images u32 | dim u32                     | dtype u8 | 7 x 0u8 | payload
//! ```
//!
//! The [`DumpMeta`] sidecar lives next to the binary file at `<path>.meta.json`.

mod attention;
mod feature;
mod record;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use attention::{
    read_attention_dump, validate_dump, write_attention_dump, AttentionDump, AttentionShape,
    EntryIssue, EntryViolation, RowViolation, ValidationReport,
};
pub use feature::{read_feature_dump, write_feature_dump, FeatureDump, FeatureShape};
pub use record::{method_label, read_run_record, RunRecord, REQUIRED_RECORD_KEYS};

pub const ATTENTION_MAGIC: [u8; 4] = *b"ATDM";
pub const FEATURE_MAGIC: [u8; 4] = *b"FTDM";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;

/// Header size of an attention dump: magic, version, four dims, dtype, reserved.
pub const ATTENTION_HEADER_LEN: usize = 4 + 4 + 4 * 4 + 1 + 7;
/// Header size of a feature dump: magic, version, three dims, dtype, reserved.
pub const FEATURE_HEADER_LEN: usize = 4 + 4 + 3 * 4 + 1 + 7;

/// Default tolerance on attention row sums.
pub const DEFAULT_ROW_TOLERANCE: f64 = 1e-4;
/// Entries may exceed one by at most this much.
pub const ENTRY_UPPER_SLACK: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: bad magic {found:?}, expected {expected:?}")]
    BadMagic {
        path: PathBuf,
        found: [u8; 4],
        expected: [u8; 4],
    },
    #[error("{path}: unsupported format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u32 },
    #[error("{path}: unsupported dtype code {dtype}")]
    UnsupportedDtype { path: PathBuf, dtype: u8 },
    #[error("{path}: truncated file, expected {expected} bytes but found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("{path}: trailing data, expected {expected} bytes but found {actual}")]
    TrailingBytes {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("{path}: missing metadata sidecar")]
    MissingSidecar { path: PathBuf },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid metadata: {0}")]
    InvalidMeta(String),
    #[error(
        "attention row not stochastic at image {image}, layer {layer}, head {head}, row {row}: sum {sum}"
    )]
    RowNotStochastic {
        image: usize,
        layer: usize,
        head: usize,
        row: usize,
        sum: f64,
    },
    #[error("attention entry out of range at image {image}, layer {layer}, head {head}, row {row}, column {col}: {value}")]
    EntryOutOfRange {
        image: usize,
        layer: usize,
        head: usize,
        row: usize,
        col: usize,
        value: f32,
    },
    #[error("non-finite feature value at layer {layer}, image {image}, dim {dim}")]
    NonFiniteFeature {
        layer: usize,
        image: usize,
        dim: usize,
    },
    #[error("{path}: missing required key `{key}`")]
    MissingKey { path: PathBuf, key: &'static str },
    #[error("{path}: field `{field}` out of range: {value}")]
    OutOfRange {
        path: PathBuf,
        field: String,
        value: f64,
    },
    #[error("{path}: {message}")]
    InvalidRecord { path: PathBuf, message: String },
}

pub type Result<T, E = DumpError> = std::result::Result<T, E>;

/// Adaptation method of the run a dump or record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pretrained,
    FullFt,
    Lora,
}

impl Method {
    pub fn is_adapted(self) -> bool {
        !matches!(self, Method::Pretrained)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pretrained => "pretrained",
            Method::FullFt => "full_ft",
            Method::Lora => "lora",
        }
    }

    /// Human-facing label used in tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Method::Pretrained => "Pretrained",
            Method::FullFt => "Full FT",
            Method::Lora => "LoRA",
        }
    }
}

/// Metadata sidecar shared by attention and feature dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpMeta {
    pub model_id: String,
    pub dataset: String,
    pub split: String,
    pub run_id: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub lr: f64,
    pub seed: i64,
    pub subset_seed: i64,
    pub image_ids: Vec<String>,
}

impl DumpMeta {
    pub fn check(&self, n_images: usize) -> Result<()> {
        if self.run_id.is_empty() {
            return Err(DumpError::InvalidMeta("run_id is empty".into()));
        }
        if self.method.is_adapted() && !(self.lr > 0.0) {
            return Err(DumpError::InvalidMeta(format!(
                "adapted run {} has non-positive lr {}",
                self.run_id, self.lr
            )));
        }
        if self.image_ids.len() != n_images {
            return Err(DumpError::InvalidMeta(format!(
                "image_ids has {} entries but the dump holds {} images",
                self.image_ids.len(),
                n_images
            )));
        }
        Ok(())
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DumpError + '_ {
    move |source| DumpError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_sidecar(path: &Path) -> Result<DumpMeta> {
    let meta_path = sidecar_path(path);
    let text = match fs::read_to_string(&meta_path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(DumpError::MissingSidecar { path: meta_path })
        }
        Err(e) => return Err(io_err(&meta_path)(e)),
    };
    serde_json::from_str(&text).map_err(|source| DumpError::Json {
        path: meta_path,
        source,
    })
}

fn write_sidecar(path: &Path, meta: &DumpMeta) -> Result<()> {
    let meta_path = sidecar_path(path);
    let mut text = serde_json::to_string_pretty(meta).map_err(|source| DumpError::Json {
        path: meta_path.clone(),
        source,
    })?;
    text.push('\n');
    fs::write(&meta_path, text).map_err(io_err(&meta_path))
}

/// Parsed common header fields; `dims` holds the format-specific dimensions.
struct Header<const N: usize> {
    dims: [u32; N],
}

fn parse_header<const N: usize>(path: &Path, bytes: &[u8], magic: [u8; 4]) -> Result<Header<N>> {
    let header_len = 4 + 4 + 4 * N + 8;
    if bytes.len() < 4 {
        return Err(DumpError::Truncated {
            path: path.to_path_buf(),
            expected: header_len as u64,
            actual: bytes.len() as u64,
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().expect("length checked");
    if found != magic {
        return Err(DumpError::BadMagic {
            path: path.to_path_buf(),
            found,
            expected: magic,
        });
    }
    if bytes.len() < header_len {
        return Err(DumpError::Truncated {
            path: path.to_path_buf(),
            expected: header_len as u64,
            actual: bytes.len() as u64,
        });
    }
    let u32_at =
        |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().expect("in bounds"));
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(DumpError::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    let mut dims = [0u32; N];
    for (i, d) in dims.iter_mut().enumerate() {
        *d = u32_at(8 + 4 * i);
    }
    let dtype = bytes[8 + 4 * N];
    if dtype != DTYPE_F32 {
        return Err(DumpError::UnsupportedDtype {
            path: path.to_path_buf(),
            dtype,
        });
    }
    Ok(Header { dims })
}

fn encode_header(magic: [u8; 4], dims: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 + 4 * dims.len() + 8);
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.push(DTYPE_F32);
    out.extend_from_slice(&[0u8; 7]);
    out
}

/// Decodes the payload after checking the file length is exactly right.
fn decode_payload(path: &Path, bytes: &[u8], header_len: usize, count: u64) -> Result<Vec<f32>> {
    let expected = header_len as u64 + count * 4;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(DumpError::Truncated {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(DumpError::TrailingBytes {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    Ok(bytes[header_len..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect())
}

fn encode_payload(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn checked_count(dims: &[u32]) -> Result<u64> {
    dims.iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
        .ok_or_else(|| DumpError::InvalidShape(format!("element count overflows: {dims:?}")))
}

fn dim_u32(name: &str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| DumpError::InvalidShape(format!("{name} = {v} exceeds u32")))
}
