//! Linear centered kernel alignment between layerwise features.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dump::FeatureDump;

#[derive(Debug, Error, PartialEq)]
pub enum CkaError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample counts differ: {0} vs {1}")]
    SampleMismatch(usize, usize),
    #[error("non-finite feature value")]
    NonFinite,
    #[error("features are constant after centering")]
    DegenerateFeatures,
    #[error("layer counts differ: {0} vs {1}")]
    LayerMismatch(usize, usize),
    #[error("image order differs at position {index}: `{left}` vs `{right}`")]
    Alignment {
        index: usize,
        left: String,
        right: String,
    },
}

pub type Result<T, E = CkaError> = std::result::Result<T, E>;

fn centered(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mean = x.mean_axis(Axis(0)).expect("at least one row");
    &x - &mean
}

/// Squared Frobenius norm of `x` relative to which centered energy counts as zero.
const DEGENERATE_RELATIVE: f64 = 1e-24;

fn is_degenerate(raw: ArrayView2<'_, f64>, centered: &Array2<f64>) -> bool {
    let energy: f64 = centered.iter().map(|v| v * v).sum();
    let raw_energy: f64 = raw.iter().map(|v| v * v).sum();
    energy == 0.0 || energy <= DEGENERATE_RELATIVE * raw_energy
}

/// `||Yc' Xc||_F^2 / (||Xc' Xc||_F ||Yc' Yc||_F)` with column-centered `x` `[N, D1]`, `y` `[N, D2]`.
pub fn linear_cka(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(CkaError::SampleMismatch(n, y.nrows()));
    }
    if n < 2 {
        return Err(CkaError::TooFewSamples(n));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(CkaError::NonFinite);
    }
    let xc = centered(x);
    let yc = centered(y);
    if is_degenerate(x, &xc) || is_degenerate(y, &yc) {
        return Err(CkaError::DegenerateFeatures);
    }
    let fro2 = |m: Array2<f64>| m.iter().map(|v| v * v).sum::<f64>();
    let cross = fro2(yc.t().dot(&xc));
    let xx = fro2(xc.t().dot(&xc)).sqrt();
    let yy = fro2(yc.t().dot(&yc)).sqrt();
    let denom = xx * yy;
    if !(denom > 0.0) {
        return Err(CkaError::DegenerateFeatures);
    }
    Ok(cross / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkaProfile {
    pub per_layer: Vec<f64>,
    pub mean: f64,
}

/// Per-layer CKA between two dumps of the same images, plus the layer mean.
pub fn layerwise_cka_profile(a: &FeatureDump, b: &FeatureDump) -> Result<CkaProfile> {
    if a.shape.n_layers != b.shape.n_layers {
        return Err(CkaError::LayerMismatch(a.shape.n_layers, b.shape.n_layers));
    }
    if a.shape.n_images != b.shape.n_images {
        return Err(CkaError::SampleMismatch(a.shape.n_images, b.shape.n_images));
    }
    if let Some((index, (l, r))) = a
        .meta
        .image_ids
        .iter()
        .zip(&b.meta.image_ids)
        .enumerate()
        .find(|(_, (l, r))| l != r)
    {
        return Err(CkaError::Alignment {
            index,
            left: l.clone(),
            right: r.clone(),
        });
    }
    let per_layer = (0..a.shape.n_layers)
        .map(|layer| {
            let x = a.layer(layer).mapv(f64::from);
            let y = b.layer(layer).mapv(f64::from);
            linear_cka(x.view(), y.view())
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = per_layer.iter().sum::<f64>() / per_layer.len() as f64;
    Ok(CkaProfile { per_layer, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dump::{DumpMeta, FeatureShape, Method};
    use ndarray::array;

    #[test]
    fn self_similarity_is_one() {
        let x = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0], [2.0, 2.5]];
        assert!((linear_cka(x.view(), x.view()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_features_are_degenerate() {
        let x = array![[0.1, 0.2], [0.1, 0.2], [0.1, 0.2]];
        let y = array![[1.0], [2.0], [4.0]];
        assert_eq!(
            linear_cka(x.view(), y.view()),
            Err(CkaError::DegenerateFeatures)
        );
    }

    #[test]
    fn shape_errors() {
        let x = array![[1.0], [2.0]];
        let y = array![[1.0], [2.0], [3.0]];
        assert_eq!(
            linear_cka(x.view(), y.view()),
            Err(CkaError::SampleMismatch(2, 3))
        );
        let one = array![[1.0]];
        assert_eq!(
            linear_cka(one.view(), one.view()),
            Err(CkaError::TooFewSamples(1))
        );
    }

    fn dump(ids: &[&str], values: Vec<f32>, layers: usize, dim: usize) -> FeatureDump {
        FeatureDump::new(
            FeatureShape {
                n_layers: layers,
                n_images: ids.len(),
                dim,
            },
            values,
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
                image_ids: ids.iter().map(|s| s.to_string()).collect(),
            },
        )
        .unwrap()
    }

    #[test]
    fn misaligned_images_are_rejected() {
        let vals: Vec<f32> = (0..6).map(|v| v as f32 * 0.7 - (v * v) as f32).collect();
        let a = dump(&["a", "b", "c"], vals.clone(), 1, 2);
        let b = dump(&["a", "c", "b"], vals, 1, 2);
        assert_eq!(
            layerwise_cka_profile(&a, &b),
            Err(CkaError::Alignment {
                index: 1,
                left: "b".into(),
                right: "c".into()
            })
        );
    }
}
