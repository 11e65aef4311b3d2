use std::fs;
use std::path::Path;

use ndarray::ArrayView2;
use serde::Serialize;

use super::{
    checked_count, decode_payload, dim_u32, encode_header, encode_payload, io_err, parse_header,
    read_sidecar, write_sidecar, DumpError, DumpMeta, Result, FEATURE_HEADER_LEN, FEATURE_MAGIC,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FeatureShape {
    pub n_layers: usize,
    pub n_images: usize,
    pub dim: usize,
}

impl FeatureShape {
    pub fn element_count(&self) -> usize {
        self.n_layers * self.n_images * self.dim
    }
}

/// Layerwise per-image features `[layer, image, dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDump {
    pub shape: FeatureShape,
    pub values: Vec<f32>,
    pub meta: DumpMeta,
}

impl FeatureDump {
    pub fn new(shape: FeatureShape, values: Vec<f32>, meta: DumpMeta) -> Result<Self> {
        if shape.n_layers < 1 || shape.n_images < 1 || shape.dim < 1 {
            return Err(DumpError::InvalidShape(format!(
                "feature dump dimensions must be positive, got {shape:?}"
            )));
        }
        if values.len() != shape.element_count() {
            return Err(DumpError::InvalidShape(format!(
                "payload has {} values, shape {:?} needs {}",
                values.len(),
                shape,
                shape.element_count()
            )));
        }
        check_finite(&shape, &values)?;
        meta.check(shape.n_images)?;
        Ok(Self {
            shape,
            values,
            meta,
        })
    }

    /// Feature matrix `[N, D]` of one layer.
    pub fn layer(&self, layer: usize) -> ArrayView2<'_, f32> {
        let block = self.shape.n_images * self.shape.dim;
        let start = layer * block;
        ArrayView2::from_shape(
            (self.shape.n_images, self.shape.dim),
            &self.values[start..start + block],
        )
        .expect("shape checked at construction")
    }
}

fn check_finite(shape: &FeatureShape, values: &[f32]) -> Result<()> {
    if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
        let per_layer = shape.n_images * shape.dim;
        return Err(DumpError::NonFiniteFeature {
            layer: idx / per_layer,
            image: (idx % per_layer) / shape.dim,
            dim: idx % shape.dim,
        });
    }
    Ok(())
}

pub fn read_feature_dump(path: impl AsRef<Path>) -> Result<FeatureDump> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let header = parse_header::<3>(path, &bytes, FEATURE_MAGIC)?;
    let count = checked_count(&header.dims)?;
    let values = decode_payload(path, &bytes, FEATURE_HEADER_LEN, count)?;
    let [n_layers, n_images, dim] = header.dims.map(|d| d as usize);
    let meta = read_sidecar(path)?;
    FeatureDump::new(
        FeatureShape {
            n_layers,
            n_images,
            dim,
        },
        values,
        meta,
    )
}

pub fn write_feature_dump(fd: &FeatureDump, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if fd.values.len() != fd.shape.element_count() {
        return Err(DumpError::InvalidShape(format!(
            "payload has {} values, shape needs {}",
            fd.values.len(),
            fd.shape.element_count()
        )));
    }
    check_finite(&fd.shape, &fd.values)?;
    fd.meta.check(fd.shape.n_images)?;
    let dims = [
        dim_u32("n_layers", fd.shape.n_layers)?,
        dim_u32("n_images", fd.shape.n_images)?,
        dim_u32("dim", fd.shape.dim)?,
    ];
    let mut bytes = encode_header(FEATURE_MAGIC, &dims);
    encode_payload(&mut bytes, &fd.values);
    fs::write(path, bytes).map_err(io_err(path))?;
    write_sidecar(path, &fd.meta)
}
