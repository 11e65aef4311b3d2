use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{
    checked_count, decode_payload, dim_u32, encode_header, encode_payload, io_err, parse_header,
    read_sidecar, write_sidecar, DumpError, DumpMeta, Result, ATTENTION_HEADER_LEN,
    ATTENTION_MAGIC, DEFAULT_ROW_TOLERANCE, ENTRY_UPPER_SLACK,
};

/// Dimensions of an attention dump. Token 0 is CLS; the rest are patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AttentionShape {
    pub n_images: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub n_tokens: usize,
}

impl AttentionShape {
    pub fn element_count(&self) -> usize {
        self.n_images * self.n_layers * self.n_heads * self.n_tokens * self.n_tokens
    }

    pub fn n_patches(&self) -> usize {
        self.n_tokens - 1
    }

    fn check(&self) -> Result<()> {
        if self.n_images < 1 || self.n_layers < 1 || self.n_heads < 1 || self.n_tokens < 2 {
            return Err(DumpError::InvalidShape(format!(
                "need n_images >= 1, n_layers >= 1, n_heads >= 1, n_tokens >= 2; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Post-softmax attention maps `[image, layer, head, query, key]` for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDump {
    pub shape: AttentionShape,
    pub values: Vec<f32>,
    pub meta: DumpMeta,
}

impl AttentionDump {
    /// Builds a dump after checking shape, payload length and metadata.
    /// Row-stochasticity is not checked here; see [`validate_dump`].
    pub fn new(shape: AttentionShape, values: Vec<f32>, meta: DumpMeta) -> Result<Self> {
        shape.check()?;
        if values.len() != shape.element_count() {
            return Err(DumpError::InvalidShape(format!(
                "payload has {} values, shape {:?} needs {}",
                values.len(),
                shape,
                shape.element_count()
            )));
        }
        meta.check(shape.n_images)?;
        Ok(Self {
            shape,
            values,
            meta,
        })
    }

    pub fn n_patches(&self) -> usize {
        self.shape.n_patches()
    }

    fn offset(&self, image: usize, layer: usize, head: usize) -> usize {
        let s = &self.shape;
        ((image * s.n_layers + layer) * s.n_heads + head) * s.n_tokens * s.n_tokens
    }

    /// The `[T, T]` matrix for one head, row-major.
    pub fn head(&self, image: usize, layer: usize, head: usize) -> &[f32] {
        let t = self.shape.n_tokens;
        let start = self.offset(image, layer, head);
        &self.values[start..start + t * t]
    }

    /// All heads of one layer, `[H, T, T]` row-major.
    pub fn layer(&self, image: usize, layer: usize) -> &[f32] {
        let block = self.shape.n_heads * self.shape.n_tokens * self.shape.n_tokens;
        let start = self.offset(image, layer, 0);
        &self.values[start..start + block]
    }

    pub fn get(&self, image: usize, layer: usize, head: usize, row: usize, col: usize) -> f32 {
        self.head(image, layer, head)[row * self.shape.n_tokens + col]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowViolation {
    pub image: usize,
    pub layer: usize,
    pub head: usize,
    pub row: usize,
    pub sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryIssue {
    Negative,
    AboveOne,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryViolation {
    pub image: usize,
    pub layer: usize,
    pub head: usize,
    pub row: usize,
    pub col: usize,
    pub value: f32,
    pub issue: EntryIssue,
}

/// Content and shape problems found in a dump. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub tolerance: f64,
    pub shape_issues: Vec<String>,
    pub row_violations: Vec<RowViolation>,
    pub entry_violations: Vec<EntryViolation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violation_count() == 0
    }

    pub fn violation_count(&self) -> usize {
        self.shape_issues.len() + self.row_violations.len() + self.entry_violations.len()
    }
}

/// Lists every row whose sum is off by more than `tol`, every out-of-range
/// entry and any shape/metadata inconsistency. Never fails.
pub fn validate_dump(dump: &AttentionDump, tol: f64) -> ValidationReport {
    let mut report = ValidationReport {
        tolerance: tol,
        ..Default::default()
    };
    let s = dump.shape;
    if let Err(e) = s.check() {
        report.shape_issues.push(e.to_string());
    }
    if dump.values.len() != s.element_count() {
        report.shape_issues.push(format!(
            "payload has {} values, shape needs {}",
            dump.values.len(),
            s.element_count()
        ));
    }
    if let Err(e) = dump.meta.check(s.n_images) {
        report.shape_issues.push(e.to_string());
    }
    if dump.values.len() != s.element_count() || s.n_tokens == 0 {
        return report;
    }

    let t = s.n_tokens;
    for image in 0..s.n_images {
        for layer in 0..s.n_layers {
            for head in 0..s.n_heads {
                let m = dump.head(image, layer, head);
                for (row, r) in m.chunks_exact(t).enumerate() {
                    let mut sum = 0.0f64;
                    for (col, &v) in r.iter().enumerate() {
                        let issue = if !v.is_finite() {
                            Some(EntryIssue::NonFinite)
                        } else if v < 0.0 {
                            Some(EntryIssue::Negative)
                        } else if v as f64 > 1.0 + ENTRY_UPPER_SLACK {
                            Some(EntryIssue::AboveOne)
                        } else {
                            None
                        };
                        if let Some(issue) = issue {
                            report.entry_violations.push(EntryViolation {
                                image,
                                layer,
                                head,
                                row,
                                col,
                                value: v,
                                issue,
                            });
                        }
                        sum += v as f64;
                    }
                    // NaN sums must count as violations
                    if !((sum - 1.0).abs() <= tol) {
                        report.row_violations.push(RowViolation {
                            image,
                            layer,
                            head,
                            row,
                            sum,
                        });
                    }
                }
            }
        }
    }
    report
}

pub fn read_attention_dump(path: impl AsRef<Path>) -> Result<AttentionDump> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let header = parse_header::<4>(path, &bytes, ATTENTION_MAGIC)?;
    // payload is [N, L, H, T, T]: the token dimension appears twice
    let [.., n_tok] = header.dims;
    let count = checked_count(&[&header.dims[..], &[n_tok]].concat())?;
    let values = decode_payload(path, &bytes, ATTENTION_HEADER_LEN, count)?;
    let [n_images, n_layers, n_heads, n_tokens] = header.dims.map(|d| d as usize);
    let shape = AttentionShape {
        n_images,
        n_layers,
        n_heads,
        n_tokens,
    };
    let meta = read_sidecar(path)?;
    AttentionDump::new(shape, values, meta)
}

/// Writes the binary dump and its sidecar. Refuses dumps that are not
/// row-stochastic within the default tolerance.
pub fn write_attention_dump(dump: &AttentionDump, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let report = validate_dump(dump, DEFAULT_ROW_TOLERANCE);
    if let Some(issue) = report.shape_issues.first() {
        return Err(DumpError::InvalidShape(issue.clone()));
    }
    if let Some(v) = report.entry_violations.first() {
        return Err(DumpError::EntryOutOfRange {
            image: v.image,
            layer: v.layer,
            head: v.head,
            row: v.row,
            col: v.col,
            value: v.value,
        });
    }
    if let Some(v) = report.row_violations.first() {
        return Err(DumpError::RowNotStochastic {
            image: v.image,
            layer: v.layer,
            head: v.head,
            row: v.row,
            sum: v.sum,
        });
    }
    let s = dump.shape;
    let dims = [
        dim_u32("n_images", s.n_images)?,
        dim_u32("n_layers", s.n_layers)?,
        dim_u32("n_heads", s.n_heads)?,
        dim_u32("n_tokens", s.n_tokens)?,
    ];
    let mut bytes = encode_header(ATTENTION_MAGIC, &dims);
    encode_payload(&mut bytes, &dump.values);
    fs::write(path, bytes).map_err(io_err(path))?;
    write_sidecar(path, &dump.meta)
}
