//! CLS-to-patch structural metrics and percent drift against a baseline.
//!
//! Every metric is computed per head on the renormalized CLS-to-patch
//! distribution and then averaged over heads, images (ascending index) and,
//! for the run-level values, layers. Entropies are in bits.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dump::AttentionDump;
use crate::rollout::RolloutMetrics;

/// Rows whose mass falls below this are treated as broken exports.
pub const DEGENERATE_MASS: f64 = 1e-12;
/// Slack on the cumulative-mass comparison in [`erf_at`].
pub const ERF_EPSILON: f64 = 1e-12;
pub const DEFAULT_ERF_THRESHOLD: f64 = 0.95;
/// Baselines smaller than this in magnitude give undefined drift.
pub const MIN_DRIFT_BASELINE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("distribution has total mass {sum}, cannot renormalize")]
    Degenerate { sum: f64 },
    #[error("distribution entry {index} is invalid: {value}")]
    InvalidEntry { index: usize, value: f64 },
    #[error("degenerate CLS-to-patch row at image {image}, layer {layer}, head {head}")]
    DegenerateClsRow {
        image: usize,
        layer: usize,
        head: usize,
    },
    #[error("degenerate patch row at image {image}, layer {layer}, head {head}, row {row}")]
    DegeneratePatchRow {
        image: usize,
        layer: usize,
        head: usize,
        row: usize,
    },
    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("head diversity needs at least 2 heads, got {0}")]
    TooFewHeads(usize),
    #[error("head {head} has length {found}, expected {expected}")]
    LengthMismatch {
        head: usize,
        expected: usize,
        found: usize,
    },
    #[error("head {head} has zero norm")]
    ZeroNorm { head: usize },
    #[error("baseline has {baseline} layers but the run has {run}")]
    LayerMismatch { run: usize, baseline: usize },
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// A probability distribution over patches.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Renormalizes nonnegative weights to sum to one.
    pub fn from_weights<I>(weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = f64>,
    {
        let mut probs: Vec<f64> = weights.into_iter().collect();
        let mut sum = 0.0;
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(MetricError::InvalidEntry { index, value });
            }
            sum += value;
        }
        if !(sum >= DEGENERATE_MASS) {
            return Err(MetricError::Degenerate { sum });
        }
        for p in &mut probs {
            *p /= sum;
        }
        Ok(Self(probs))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn one_hot(n: usize, hot: usize) -> Self {
        let mut v = vec![0.0; n];
        v[hot] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_index(what: &'static str, index: usize, size: usize) -> Result<()> {
    if index >= size {
        return Err(MetricError::IndexOutOfRange { what, index, size });
    }
    Ok(())
}

/// Row 0 of one head's attention, restricted to the patch columns and renormalized.
pub fn cls_attention(
    dump: &AttentionDump,
    image: usize,
    layer: usize,
    head: usize,
) -> Result<ProbVector> {
    let s = dump.shape;
    check_index("image", image, s.n_images)?;
    check_index("layer", layer, s.n_layers)?;
    check_index("head", head, s.n_heads)?;
    let row = &dump.head(image, layer, head)[..s.n_tokens];
    ProbVector::from_weights(row[1..].iter().map(|&v| v as f64)).map_err(|e| match e {
        MetricError::Degenerate { .. } => MetricError::DegenerateClsRow { image, layer, head },
        other => other,
    })
}

pub fn shannon_entropy_bits(p: &ProbVector) -> f64 {
    -p.0.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.log2())
        .sum::<f64>()
}

/// Fraction of patches needed to reach `threshold` of the attention mass.
pub fn erf_at(p: &ProbVector, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(MetricError::InvalidThreshold(threshold));
    }
    let mut sorted = p.0.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    let mut cum = 0.0;
    let mut k = n;
    for (i, x) in sorted.iter().enumerate() {
        cum += x;
        if cum >= threshold - ERF_EPSILON {
            k = i + 1;
            break;
        }
    }
    Ok(k as f64 / n as f64)
}

/// Mean-absolute-difference Gini index, computed from the sorted values.
pub fn gini(p: &ProbVector) -> f64 {
    let n = p.len();
    let mut sorted = p.0.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let total: f64 = sorted.iter().sum();
    // sum_{i,j} |x_i - x_j| = 2 * sum_i (2i - n - 1) x_(i), 1-based ascending.
    // Pairing i with n + 1 - i keeps every term nonnegative and makes equal
    // values cancel exactly.
    let weighted: f64 = (0..n / 2)
        .map(|i| (n - 1 - 2 * i) as f64 * (sorted[n - 1 - i] - sorted[i]))
        .sum();
    weighted / (n as f64 * total)
}

/// Mean pairwise cosine dissimilarity between heads.
pub fn head_diversity(heads: &[ProbVector]) -> Result<f64> {
    if heads.len() < 2 {
        return Err(MetricError::TooFewHeads(heads.len()));
    }
    let len = heads[0].len();
    let mut norms = Vec::with_capacity(heads.len());
    for (head, h) in heads.iter().enumerate() {
        if h.len() != len {
            return Err(MetricError::LengthMismatch {
                head,
                expected: len,
                found: h.len(),
            });
        }
        let norm = h.0.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(MetricError::ZeroNorm { head });
        }
        norms.push(norm);
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..heads.len() {
        for j in i + 1..heads.len() {
            let dot: f64 = heads[i].0.iter().zip(&heads[j].0).map(|(a, b)| a * b).sum();
            total += 1.0 - dot / (norms[i] * norms[j]);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Row entropy of patch-to-patch attention, averaged over query patches and then heads.
pub fn patch_to_patch_entropy(dump: &AttentionDump, image: usize, layer: usize) -> Result<f64> {
    let s = dump.shape;
    check_index("image", image, s.n_images)?;
    check_index("layer", layer, s.n_layers)?;
    let t = s.n_tokens;
    let mut head_sum = 0.0;
    for head in 0..s.n_heads {
        let m = dump.head(image, layer, head);
        let mut row_sum = 0.0;
        for row in 1..t {
            let cols = &m[row * t + 1..(row + 1) * t];
            let p =
                ProbVector::from_weights(cols.iter().map(|&v| v as f64)).map_err(|e| match e {
                    MetricError::Degenerate { .. } => MetricError::DegeneratePatchRow {
                        image,
                        layer,
                        head,
                        row,
                    },
                    other => other,
                })?;
            row_sum += shannon_entropy_bits(&p);
        }
        head_sum += row_sum / (t - 1) as f64;
    }
    Ok(head_sum / s.n_heads as f64)
}

/// `100 * (adapted - baseline) / baseline`, or `None` when the baseline is ~0.
pub fn percent_drift(adapted: f64, baseline: f64) -> Option<f64> {
    if !(baseline.abs() >= MIN_DRIFT_BASELINE) || !adapted.is_finite() {
        return None;
    }
    Some(100.0 * (adapted - baseline) / baseline)
}

/// Which structural metric to read from a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricName {
    Entropy,
    Erf,
    Gini,
    HeadDiversity,
    PatchEntropy,
}

impl MetricName {
    pub const ALL: [MetricName; 5] = [
        MetricName::Entropy,
        MetricName::Erf,
        MetricName::Gini,
        MetricName::HeadDiversity,
        MetricName::PatchEntropy,
    ];

    pub fn key(self) -> &'static str {
        match self {
            MetricName::Entropy => "entropy_bits",
            MetricName::Erf => "erf95",
            MetricName::Gini => "gini",
            MetricName::HeadDiversity => "head_diversity",
            MetricName::PatchEntropy => "p2p_entropy_bits",
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for MetricName {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" | "entropy_bits" => Ok(MetricName::Entropy),
            "erf" | "erf95" => Ok(MetricName::Erf),
            "gini" => Ok(MetricName::Gini),
            "head_diversity" => Ok(MetricName::HeadDiversity),
            "p2p" | "p2p_entropy" | "p2p_entropy_bits" => Ok(MetricName::PatchEntropy),
            other => Err(MetricError::UnknownMetric(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricValues {
    pub entropy_bits: f64,
    pub erf95: f64,
    pub gini: f64,
    pub head_diversity: f64,
    pub p2p_entropy_bits: f64,
}

impl MetricValues {
    pub fn get(&self, metric: MetricName) -> f64 {
        match metric {
            MetricName::Entropy => self.entropy_bits,
            MetricName::Erf => self.erf95,
            MetricName::Gini => self.gini,
            MetricName::HeadDiversity => self.head_diversity,
            MetricName::PatchEntropy => self.p2p_entropy_bits,
        }
    }

    fn add(&mut self, other: &MetricValues) {
        self.entropy_bits += other.entropy_bits;
        self.erf95 += other.erf95;
        self.gini += other.gini;
        self.head_diversity += other.head_diversity;
        self.p2p_entropy_bits += other.p2p_entropy_bits;
    }

    fn scaled(mut self, factor: f64) -> MetricValues {
        self.entropy_bits *= factor;
        self.erf95 *= factor;
        self.gini *= factor;
        self.head_diversity *= factor;
        self.p2p_entropy_bits *= factor;
        self
    }

    /// Unweighted mean, accumulated in slice order.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a MetricValues>) -> MetricValues {
        let mut acc = MetricValues::default();
        let mut n = 0usize;
        for v in items {
            acc.add(v);
            n += 1;
        }
        acc.scaled(1.0 / n as f64)
    }

    pub fn drift_from(&self, baseline: &MetricValues) -> DriftValues {
        DriftValues {
            entropy_bits: percent_drift(self.entropy_bits, baseline.entropy_bits),
            erf95: percent_drift(self.erf95, baseline.erf95),
            gini: percent_drift(self.gini, baseline.gini),
            head_diversity: percent_drift(self.head_diversity, baseline.head_diversity),
            p2p_entropy_bits: percent_drift(self.p2p_entropy_bits, baseline.p2p_entropy_bits),
        }
    }
}

/// Percent changes; `None` (serialized as `null`) where drift is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DriftValues {
    pub entropy_bits: Option<f64>,
    pub erf95: Option<f64>,
    pub gini: Option<f64>,
    pub head_diversity: Option<f64>,
    pub p2p_entropy_bits: Option<f64>,
}

impl DriftValues {
    pub fn get(&self, metric: MetricName) -> Option<f64> {
        match metric {
            MetricName::Entropy => self.entropy_bits,
            MetricName::Erf => self.erf95,
            MetricName::Gini => self.gini,
            MetricName::HeadDiversity => self.head_diversity,
            MetricName::PatchEntropy => self.p2p_entropy_bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMetrics {
    /// 1-based layer number.
    pub layer: usize,
    #[serde(flatten)]
    pub values: MetricValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDrift {
    pub layer: usize,
    #[serde(flatten)]
    pub values: DriftValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub baseline_run_id: String,
    pub per_layer: Vec<LayerDrift>,
    pub run_level: DriftValues,
}

/// Structural profile of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run_id: String,
    pub n_images: usize,
    pub per_layer: Vec<LayerMetrics>,
    pub run_level: MetricValues,
    pub drift: Option<DriftReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout: Option<RolloutMetrics>,
}

impl MetricReport {
    pub fn n_layers(&self) -> usize {
        self.per_layer.len()
    }

    /// Percent drift of every per-layer and run-level value against `baseline`.
    pub fn drift_against(&self, baseline: &MetricReport) -> Result<DriftReport> {
        if baseline.n_layers() != self.n_layers() {
            return Err(MetricError::LayerMismatch {
                run: self.n_layers(),
                baseline: baseline.n_layers(),
            });
        }
        let per_layer = self
            .per_layer
            .iter()
            .zip(&baseline.per_layer)
            .map(|(run, base)| LayerDrift {
                layer: run.layer,
                values: run.values.drift_from(&base.values),
            })
            .collect();
        Ok(DriftReport {
            baseline_run_id: baseline.run_id.clone(),
            per_layer,
            run_level: self.run_level.drift_from(&baseline.run_level),
        })
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Metrics of one (image, layer) cell, heads averaged.
fn image_layer_metrics(
    dump: &AttentionDump,
    image: usize,
    layer: usize,
    threshold: f64,
) -> Result<MetricValues> {
    let n_heads = dump.shape.n_heads;
    let mut heads = Vec::with_capacity(n_heads);
    let (mut entropy, mut erf, mut g) = (0.0, 0.0, 0.0);
    for head in 0..n_heads {
        let p = cls_attention(dump, image, layer, head)?;
        entropy += shannon_entropy_bits(&p);
        erf += erf_at(&p, threshold)?;
        g += gini(&p);
        heads.push(p);
    }
    let h = n_heads as f64;
    // a single head has no pairs to compare
    let diversity = if n_heads >= 2 {
        head_diversity(&heads)?
    } else {
        0.0
    };
    Ok(MetricValues {
        entropy_bits: entropy / h,
        erf95: erf / h,
        gini: g / h,
        head_diversity: diversity,
        p2p_entropy_bits: patch_to_patch_entropy(dump, image, layer)?,
    })
}

pub fn run_structural_profile(
    dump: &AttentionDump,
    baseline: Option<&MetricReport>,
) -> Result<MetricReport> {
    run_structural_profile_at(dump, baseline, DEFAULT_ERF_THRESHOLD)
}

/// Full structural profile with a custom ERF threshold.
///
/// Images are processed in parallel; the reduction runs in ascending image
/// order so the result does not depend on the thread count.
pub fn run_structural_profile_at(
    dump: &AttentionDump,
    baseline: Option<&MetricReport>,
    threshold: f64,
) -> Result<MetricReport> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(MetricError::InvalidThreshold(threshold));
    }
    let s = dump.shape;
    if let Some(b) = baseline {
        if b.n_layers() != s.n_layers {
            return Err(MetricError::LayerMismatch {
                run: s.n_layers,
                baseline: b.n_layers(),
            });
        }
    }
    let per_image: Vec<Vec<MetricValues>> = (0..s.n_images)
        .into_par_iter()
        .map(|image| {
            (0..s.n_layers)
                .map(|layer| image_layer_metrics(dump, image, layer, threshold))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let per_layer: Vec<LayerMetrics> = (0..s.n_layers)
        .map(|layer| LayerMetrics {
            layer: layer + 1,
            values: MetricValues::mean(per_image.iter().map(|img| &img[layer])),
        })
        .collect();
    let run_level = MetricValues::mean(per_layer.iter().map(|l| &l.values));
    let mut report = MetricReport {
        run_id: dump.meta.run_id.clone(),
        n_images: s.n_images,
        per_layer,
        run_level,
        drift: None,
        rollout: None,
    };
    if let Some(b) = baseline {
        report.drift = Some(report.drift_against(b)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dump::{AttentionShape, DumpMeta, Method};

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::from_weights(v.iter().copied()).unwrap()
    }

    fn meta(n: usize) -> DumpMeta {
        DumpMeta {
            model_id: "m".into(),
            dataset: "d".into(),
            split: "val".into(),
            run_id: "r".into(),
            method: Method::Pretrained,
            variant: None,
            lr: 0.0,
            seed: 0,
            subset_seed: 0,
            image_ids: (0..n).map(|i| i.to_string()).collect(),
        }
    }

    fn uniform_dump(n_images: usize, n_layers: usize, n_heads: usize, t: usize) -> AttentionDump {
        let shape = AttentionShape {
            n_images,
            n_layers,
            n_heads,
            n_tokens: t,
        };
        let values = vec![1.0 / t as f32; shape.element_count()];
        AttentionDump::new(shape, values, meta(n_images)).unwrap()
    }

    #[test]
    fn cls_row_is_renormalized() {
        let shape = AttentionShape {
            n_images: 1,
            n_layers: 1,
            n_heads: 1,
            n_tokens: 3,
        };
        let values = vec![0.2, 0.4, 0.4, 0.1, 0.8, 0.1, 0.3, 0.3, 0.4];
        let d = AttentionDump::new(shape, values, meta(1)).unwrap();
        let p = cls_attention(&d, 0, 0, 0).unwrap();
        assert!((p.as_slice()[0] - 0.5).abs() < 1e-7);
        assert!((p.as_slice()[1] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn cls_degenerate_and_out_of_range() {
        let shape = AttentionShape {
            n_images: 1,
            n_layers: 1,
            n_heads: 1,
            n_tokens: 2,
        };
        let d = AttentionDump::new(shape, vec![1.0, 0.0, 0.0, 1.0], meta(1)).unwrap();
        assert_eq!(
            cls_attention(&d, 0, 0, 0),
            Err(MetricError::DegenerateClsRow {
                image: 0,
                layer: 0,
                head: 0
            })
        );
        assert!(matches!(
            cls_attention(&d, 0, 1, 0),
            Err(MetricError::IndexOutOfRange { what: "layer", .. })
        ));
    }

    #[test]
    fn uniform_cls_gives_uniform_vector() {
        let d = uniform_dump(1, 1, 1, 50);
        let p = cls_attention(&d, 0, 0, 0).unwrap();
        assert_eq!(p.len(), 49);
        for x in p.as_slice() {
            assert!((x - 1.0 / 49.0).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_examples() {
        assert!((shannon_entropy_bits(&ProbVector::uniform(49)) - 49f64.log2()).abs() < 1e-12);
        assert!((49f64.log2() - 5.6147).abs() < 1e-4);
        assert_eq!(shannon_entropy_bits(&ProbVector::one_hot(49, 3)), 0.0);
        assert!((shannon_entropy_bits(&pv(&[0.5, 0.25, 0.25])) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn erf_examples() {
        assert_eq!(erf_at(&ProbVector::uniform(49), 0.95).unwrap(), 47.0 / 49.0);
        assert_eq!(
            erf_at(&ProbVector::one_hot(49, 10), 0.95).unwrap(),
            1.0 / 49.0
        );
        assert_eq!(erf_at(&pv(&[0.05, 0.3, 0.5, 0.15]), 0.95).unwrap(), 0.75);
        assert_eq!(erf_at(&pv(&[0.5, 0.5, 0.0, 0.0]), 1.0).unwrap(), 0.5);
        assert!(matches!(
            erf_at(&ProbVector::uniform(3), 0.0),
            Err(MetricError::InvalidThreshold(_))
        ));
        assert!(erf_at(&ProbVector::uniform(3), 1.5).is_err());
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&ProbVector::uniform(49)), 0.0);
        assert!((gini(&ProbVector::one_hot(49, 0)) - 48.0 / 49.0).abs() < 1e-12);
        assert!((gini(&pv(&[0.5, 0.5, 0.0, 0.0])) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn head_diversity_examples() {
        let a = pv(&[0.2, 0.3, 0.5]);
        assert!(head_diversity(&[a.clone(), a.clone()]).unwrap().abs() < 1e-15);
        let h = head_diversity(&[ProbVector::one_hot(4, 0), ProbVector::one_hot(4, 2)]).unwrap();
        assert_eq!(h, 1.0);
        // cosine only depends on direction, so [1,1] stands in for [sqrt(.5), sqrt(.5)]
        let three = [pv(&[1.0, 0.0]), pv(&[0.0, 1.0]), pv(&[1.0, 1.0])];
        let expected = (1.0 + 2.0 * (1.0 - 0.5f64.sqrt())) / 3.0;
        assert!((head_diversity(&three).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.5286).abs() < 1e-4);
        assert_eq!(
            head_diversity(std::slice::from_ref(&a)),
            Err(MetricError::TooFewHeads(1))
        );
        assert!(matches!(
            head_diversity(&[a, ProbVector::uniform(2)]),
            Err(MetricError::LengthMismatch { head: 1, .. })
        ));
    }

    #[test]
    fn degenerate_weights_rejected() {
        assert!(matches!(
            ProbVector::from_weights([0.0, 0.0]),
            Err(MetricError::Degenerate { .. })
        ));
        assert!(matches!(
            ProbVector::from_weights([0.5, -0.1]),
            Err(MetricError::InvalidEntry { index: 1, .. })
        ));
    }

    #[test]
    fn patch_entropy_uniform_and_one_hot() {
        let d = uniform_dump(1, 2, 3, 5);
        let e = patch_to_patch_entropy(&d, 0, 1).unwrap();
        assert!((e - 2.0).abs() < 1e-6);

        let shape = AttentionShape {
            n_images: 1,
            n_layers: 1,
            n_heads: 1,
            n_tokens: 3,
        };
        let values = vec![0.4, 0.3, 0.3, 0.5, 0.5, 0.0, 0.1, 0.0, 0.9];
        let d = AttentionDump::new(shape, values, meta(1)).unwrap();
        assert_eq!(patch_to_patch_entropy(&d, 0, 0).unwrap(), 0.0);
    }

    #[test]
    fn patch_entropy_degenerate_row_is_named() {
        let shape = AttentionShape {
            n_images: 1,
            n_layers: 1,
            n_heads: 1,
            n_tokens: 3,
        };
        let values = vec![0.4, 0.3, 0.3, 1.0, 0.0, 0.0, 0.1, 0.0, 0.9];
        let d = AttentionDump::new(shape, values, meta(1)).unwrap();
        assert_eq!(
            patch_to_patch_entropy(&d, 0, 0),
            Err(MetricError::DegeneratePatchRow {
                image: 0,
                layer: 0,
                head: 0,
                row: 1
            })
        );
    }

    #[test]
    fn percent_drift_examples() {
        assert!((percent_drift(5.1, 5.0).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(percent_drift(3.7, 3.7), Some(0.0));
        assert!((percent_drift(4.99, 5.20).unwrap() + 4.038_461_538_461_5).abs() < 1e-9);
        assert_eq!(percent_drift(1.0, 0.0), None);
        assert_eq!(percent_drift(1.0, 1e-10), None);
    }

    #[test]
    fn uniform_profile() {
        let d = uniform_dump(2, 3, 2, 50);
        let r = run_structural_profile(&d, None).unwrap();
        assert_eq!(r.per_layer.len(), 3);
        for l in &r.per_layer {
            assert!((l.values.entropy_bits - 49f64.log2()).abs() < 1e-6);
            assert!(l.values.gini.abs() < 1e-6);
            assert!(l.values.head_diversity.abs() < 1e-12);
        }
        assert!(r.drift.is_none());
        let with = run_structural_profile(&d, Some(&r)).unwrap();
        let drift = with.drift.unwrap();
        assert_eq!(drift.run_level.entropy_bits, Some(0.0));
        assert!(drift
            .per_layer
            .iter()
            .all(|l| l.values.entropy_bits == Some(0.0) && l.values.erf95 == Some(0.0)));
        // gini of a uniform row is 0, so its drift is undefined
        assert_eq!(drift.run_level.gini, None);
    }

    #[test]
    fn baseline_layer_mismatch() {
        let r = run_structural_profile(&uniform_dump(1, 3, 2, 4), None).unwrap();
        let d = uniform_dump(1, 2, 2, 4);
        assert_eq!(
            run_structural_profile(&d, Some(&r)),
            Err(MetricError::LayerMismatch {
                run: 2,
                baseline: 3
            })
        );
    }

    #[test]
    fn report_json_shape() {
        let d = uniform_dump(1, 1, 2, 4);
        let r =
            run_structural_profile(&d, Some(&run_structural_profile(&d, None).unwrap())).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json_string()).unwrap();
        assert_eq!(v["per_layer"][0]["layer"], 1);
        assert!(v["per_layer"][0]["p2p_entropy_bits"].is_number());
        assert!(v["drift"]["run_level"]["gini"].is_null());
        assert!(v.get("rollout").is_none());
        let back: MetricReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn metric_names_parse() {
        assert_eq!("entropy".parse::<MetricName>(), Ok(MetricName::Entropy));
        assert_eq!("erf95".parse::<MetricName>(), Ok(MetricName::Erf));
        assert!("nope".parse::<MetricName>().is_err());
    }
}
