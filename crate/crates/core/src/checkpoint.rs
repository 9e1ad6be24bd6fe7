//! Binary stage checkpoints. All integers are little-endian `u32`; model
//! weights are `f32`, Weibull parameters and the weight decay are `f64`.
//!
//! ```text
//! GZCL  version p d | p*d weights | p bias
//! GZEV  version count d flags | per class: id, d centroid, v, scale, shape (f64), tail_size
//! GZPR  version p d | p class ids | p*d prototypes
//! GZEM  version a h d lambda_e(f64) | h*a W1 | d*h W2
//! ```

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use crate::binio::{ByteReader, ByteWriter};
use crate::classifier::SoftmaxClassifier;
use crate::embedding::{EmbeddingNet, PrototypeSet};
use crate::error::{GzslError, Result};
use crate::evt::{ClassEvtModel, EvtModelSet, WeibullParams};

pub const CLASSIFIER_MAGIC: &[u8; 4] = b"GZCL";
pub const EVT_MAGIC: &[u8; 4] = b"GZEV";
pub const PROTOTYPE_MAGIC: &[u8; 4] = b"GZPR";
pub const EMBEDDING_MAGIC: &[u8; 4] = b"GZEM";
pub const CHECKPOINT_VERSION: u32 = 1;

const FLAG_NORMALIZED: u32 = 1;

fn f32s(a: impl IntoIterator<Item = f64>) -> Vec<f32> {
    a.into_iter().map(|v| v as f32).collect()
}

fn matrix(rows: usize, cols: usize, values: Vec<f32>) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), values.into_iter().map(f64::from).collect())
        .expect("length checked by reader")
}

pub fn classifier_to_bytes(clf: &SoftmaxClassifier) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.magic(CLASSIFIER_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.len_u32(clf.num_classes())?;
    w.len_u32(clf.dim())?;
    w.f32_slice(&f32s(clf.weights().iter().copied()));
    w.f32_slice(&f32s(clf.bias().iter().copied()));
    Ok(w.into_bytes())
}

pub fn classifier_from_bytes(bytes: &[u8]) -> Result<SoftmaxClassifier> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(CLASSIFIER_MAGIC)?;
    r.expect_version(CHECKPOINT_VERSION)?;
    let p = r.u32("p")? as usize;
    let d = r.u32("d")? as usize;
    let weights = r.f32_vec(p * d, "weights")?;
    let bias = r.f32_vec(p, "bias")?;
    r.finish()?;
    SoftmaxClassifier::new(
        matrix(p, d, weights),
        bias.into_iter().map(f64::from).collect::<Array1<f64>>(),
    )
}

pub fn evt_to_bytes(set: &EvtModelSet) -> Result<Vec<u8>> {
    let dim = set.iter().next().map_or(0, |m| m.centroid.len());
    let mut w = ByteWriter::new();
    w.magic(EVT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.len_u32(set.len())?;
    w.len_u32(dim)?;
    w.u32(if set.normalized() { FLAG_NORMALIZED } else { 0 });
    for m in set.iter() {
        if m.centroid.len() != dim {
            return Err(GzslError::Format(
                "EVT centroids differ in dimension".into(),
            ));
        }
        w.u32(m.class_id);
        w.f32_slice(&f32s(m.centroid.iter().copied()));
        w.f64(m.params.location);
        w.f64(m.params.scale);
        w.f64(m.params.shape);
        w.len_u32(m.tail_size)?;
    }
    Ok(w.into_bytes())
}

pub fn evt_from_bytes(bytes: &[u8]) -> Result<EvtModelSet> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(EVT_MAGIC)?;
    r.expect_version(CHECKPOINT_VERSION)?;
    let count = r.u32("count")? as usize;
    let dim = r.u32("d")? as usize;
    let flags = r.u32("flags")?;
    let mut models = BTreeMap::new();
    for _ in 0..count {
        let class_id = r.u32("class id")?;
        let centroid = r
            .f32_vec(dim, "centroid")?
            .into_iter()
            .map(f64::from)
            .collect();
        let params = WeibullParams {
            location: r.f64("location")?,
            scale: r.f64("scale")?,
            shape: r.f64("shape")?,
        };
        let tail_size = r.u32("tail size")? as usize;
        if !(params.scale > 0.0 && params.shape > 0.0 && params.location >= 0.0) || tail_size < 2 {
            return Err(GzslError::Format(format!(
                "invalid EVT parameters for class {class_id}"
            )));
        }
        let model = ClassEvtModel {
            class_id,
            centroid,
            params,
            tail_size,
        };
        if models.insert(class_id, model).is_some() {
            return Err(GzslError::Format(format!(
                "duplicate EVT model for class {class_id}"
            )));
        }
    }
    r.finish()?;
    Ok(EvtModelSet::new(models, flags & FLAG_NORMALIZED != 0))
}

pub fn prototypes_to_bytes(protos: &PrototypeSet) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.magic(PROTOTYPE_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.len_u32(protos.len())?;
    w.len_u32(protos.points().ncols())?;
    w.u32_slice(protos.class_ids());
    w.f32_slice(&f32s(protos.points().iter().copied()));
    Ok(w.into_bytes())
}

pub fn prototypes_from_bytes(bytes: &[u8]) -> Result<PrototypeSet> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(PROTOTYPE_MAGIC)?;
    r.expect_version(CHECKPOINT_VERSION)?;
    let p = r.u32("p")? as usize;
    let d = r.u32("d")? as usize;
    let ids = r.u32_vec(p, "class ids")?;
    let points = r.f32_vec(p * d, "prototypes")?;
    r.finish()?;
    PrototypeSet::new(ids, matrix(p, d, points))
}

pub fn embedding_to_bytes(net: &EmbeddingNet) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.magic(EMBEDDING_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.len_u32(net.sem_dim())?;
    w.len_u32(net.hidden())?;
    w.len_u32(net.dim())?;
    w.f64(net.lambda);
    w.f32_slice(&f32s(net.w1.iter().copied()));
    w.f32_slice(&f32s(net.w2.iter().copied()));
    Ok(w.into_bytes())
}

pub fn embedding_from_bytes(bytes: &[u8]) -> Result<EmbeddingNet> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(EMBEDDING_MAGIC)?;
    r.expect_version(CHECKPOINT_VERSION)?;
    let a = r.u32("a")? as usize;
    let h = r.u32("h")? as usize;
    let d = r.u32("d")? as usize;
    let lambda = r.f64("lambda_e")?;
    let w1 = r.f32_vec(h * a, "W1")?;
    let w2 = r.f32_vec(d * h, "W2")?;
    r.finish()?;
    EmbeddingNet::new(matrix(h, a, w1), matrix(d, h, w2), lambda)
}
