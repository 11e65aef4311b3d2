//! Attention rollout: head-averaged attention mixed with the identity for the
//! residual path and composed across depth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dump::{AttentionDump, DEFAULT_ROW_TOLERANCE};
use crate::metrics::{erf_at, gini, shannon_entropy_bits, MetricError, ProbVector};

/// Weight of the attention term; the identity gets `1 - RESIDUAL_WEIGHT`.
pub const RESIDUAL_WEIGHT: f64 = 0.5;
/// Row-sum tolerance for rollout matrices.
pub const ROLLOUT_ROW_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum RolloutError {
    #[error("layer attention has no heads")]
    NoHeads,
    #[error("expected {expected} values for the layer, got {found}")]
    BadLength { expected: usize, found: usize },
    #[error("head {head} row {row} sums to {sum}, not 1")]
    NotStochastic { head: usize, row: usize, sum: f64 },
    #[error("cannot compose an empty list of layers")]
    Empty,
    #[error("layer {index} is {found}x{found}, expected {expected}x{expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("composed rollout row {row} sums to {sum}")]
    LostStochasticity { row: usize, sum: f64 },
    #[error("degenerate CLS row after dropping CLS self-attention")]
    DegenerateClsRow,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub type Result<T, E = RolloutError> = std::result::Result<T, E>;

/// Row-stochastic `[T, T]` token-mixing matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutMatrix {
    size: usize,
    values: Vec<f64>,
    depth: usize,
}

impl RolloutMatrix {
    pub fn identity(size: usize) -> Self {
        let mut values = vec![0.0; size * size];
        for i in 0..size {
            values[i * size + i] = 1.0;
        }
        Self {
            size,
            values,
            depth: 0,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.size..(i + 1) * self.size]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    fn renormalize_rows(&mut self) {
        let n = self.size;
        for row in self.values.chunks_exact_mut(n) {
            let s: f64 = row.iter().sum();
            for v in row {
                *v /= s;
            }
        }
    }

    fn check_rows(&self) -> Result<()> {
        for (row, r) in self.values.chunks_exact(self.size).enumerate() {
            let sum: f64 = r.iter().sum();
            if !((sum - 1.0).abs() <= ROLLOUT_ROW_TOLERANCE) {
                return Err(RolloutError::LostStochasticity { row, sum });
            }
        }
        Ok(())
    }

    /// `self * rhs`
    fn matmul(&self, rhs: &RolloutMatrix) -> RolloutMatrix {
        let n = self.size;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.values[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let rrow = &rhs.values[k * n..(k + 1) * n];
                for (o, &b) in out[i * n..(i + 1) * n].iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        RolloutMatrix {
            size: n,
            values: out,
            depth: self.depth + rhs.depth,
        }
    }
}

/// `0.5 * mean_heads(A) + 0.5 * I`, rows renormalized. `attention` is `[H, T, T]`.
pub fn layer_rollout_matrix(
    attention: &[f32],
    n_heads: usize,
    n_tokens: usize,
) -> Result<RolloutMatrix> {
    if n_heads == 0 {
        return Err(RolloutError::NoHeads);
    }
    let t = n_tokens;
    let expected = n_heads * t * t;
    if attention.len() != expected {
        return Err(RolloutError::BadLength {
            expected,
            found: attention.len(),
        });
    }
    let mut mean = vec![0.0f64; t * t];
    for (head, block) in attention.chunks_exact(t * t).enumerate() {
        for (row, r) in block.chunks_exact(t).enumerate() {
            let sum: f64 = r.iter().map(|&v| v as f64).sum();
            if !((sum - 1.0).abs() <= DEFAULT_ROW_TOLERANCE) {
                return Err(RolloutError::NotStochastic { head, row, sum });
            }
        }
        for (m, &v) in mean.iter_mut().zip(block) {
            *m += v as f64;
        }
    }
    let h = n_heads as f64;
    for (idx, m) in mean.iter_mut().enumerate() {
        let identity = if idx / t == idx % t { 1.0 } else { 0.0 };
        *m = RESIDUAL_WEIGHT * (*m / h) + (1.0 - RESIDUAL_WEIGHT) * identity;
    }
    let mut out = RolloutMatrix {
        size: t,
        values: mean,
        depth: 1,
    };
    out.renormalize_rows();
    Ok(out)
}

/// Composes layers given first-to-last: `R = M_L * ... * M_1`.
pub fn compose_rollout(layers: &[RolloutMatrix]) -> Result<RolloutMatrix> {
    let first = layers.first().ok_or(RolloutError::Empty)?;
    let n = first.size;
    let mut acc = first.clone();
    for (index, m) in layers.iter().enumerate().skip(1) {
        if m.size != n {
            return Err(RolloutError::DimensionMismatch {
                index,
                expected: n,
                found: m.size,
            });
        }
        acc = m.matmul(&acc);
    }
    acc.check_rows()?;
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RolloutMetrics {
    pub entropy_bits: f64,
    pub erf95: f64,
    pub gini: f64,
}

/// The CLS row of a rollout with the CLS column dropped and renormalized.
pub fn rollout_cls_distribution(r: &RolloutMatrix) -> Result<ProbVector> {
    ProbVector::from_weights(r.row(0)[1..].iter().copied()).map_err(|e| match e {
        MetricError::Degenerate { .. } => RolloutError::DegenerateClsRow,
        other => other.into(),
    })
}

pub fn rollout_metrics(r: &RolloutMatrix) -> Result<RolloutMetrics> {
    let p = rollout_cls_distribution(r)?;
    Ok(RolloutMetrics {
        entropy_bits: shannon_entropy_bits(&p),
        erf95: erf_at(&p, crate::metrics::DEFAULT_ERF_THRESHOLD)?,
        gini: gini(&p),
    })
}

/// Rollout over every layer of one image.
pub fn image_rollout(dump: &AttentionDump, image: usize) -> Result<RolloutMatrix> {
    let s = dump.shape;
    let layers = (0..s.n_layers)
        .map(|layer| layer_rollout_matrix(dump.layer(image, layer), s.n_heads, s.n_tokens))
        .collect::<Result<Vec<_>>>()?;
    compose_rollout(&layers)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub run_id: String,
    pub residual_weight: f64,
    pub per_image: Vec<RolloutMetrics>,
    pub mean: RolloutMetrics,
}

/// Rollout metrics for every image plus their mean in ascending image order.
pub fn rollout_summary(dump: &AttentionDump) -> Result<RolloutSummary> {
    let per_image = (0..dump.shape.n_images)
        .into_par_iter()
        .map(|image| image_rollout(dump, image).and_then(|r| rollout_metrics(&r)))
        .collect::<Result<Vec<_>>>()?;
    let n = per_image.len() as f64;
    let mut mean = RolloutMetrics::default();
    for m in &per_image {
        mean.entropy_bits += m.entropy_bits;
        mean.erf95 += m.erf95;
        mean.gini += m.gini;
    }
    mean.entropy_bits /= n;
    mean.erf95 /= n;
    mean.gini /= n;
    Ok(RolloutSummary {
        run_id: dump.meta.run_id.clone(),
        residual_weight: RESIDUAL_WEIGHT,
        per_image,
        mean,
    })
}
