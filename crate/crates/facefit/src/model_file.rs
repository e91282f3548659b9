//! `MM3D` model files.
//!
//! Little-endian layout:
//!
//! | field            | type                         |
//! |------------------|------------------------------|
//! | magic            | `b"MM3D"`                    |
//! | version          | u32 (= 1)                    |
//! | N (vertices)     | u32                          |
//! | K_s, K_e         | u32, u32                     |
//! | mean shape       | 3N f64 (x, y, z per vertex)  |
//! | shape basis      | 3N x K_s f64, column-major   |
//! | expression basis | 3N x K_e f64, column-major   |
//! | landmark indices | 68 u32                       |
//!
//! The JSON sidecar (`<name>.json`) records the generation seed and sizes.

use std::path::{Path, PathBuf};

use facefit_core::model::synthetic::SyntheticModelConfig;
use facefit_core::model::{LinearShapeModel, MorphableModel, LANDMARK_COUNT};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::io::{read_file, write_atomic, ByteReader, ByteWriter};

pub const MAGIC: &[u8; 4] = b"MM3D";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSidecar {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub n_vertices: usize,
    pub k_shape: usize,
    pub k_expr: usize,
}

pub fn encode_model(model: &MorphableModel) -> Vec<u8> {
    let s = model.shape_model();
    let layout = s.layout();
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u32(s.n_vertices() as u32);
    w.u32(layout.k_shape as u32);
    w.u32(layout.k_expr as u32);
    w.f64s(s.mean_shape());
    w.f64s(s.shape_basis());
    w.f64s(s.expr_basis());
    for &i in model.landmark_indices() {
        w.u32(i as u32);
    }
    w.buf
}

pub fn decode_model(bytes: &[u8], file: &Path) -> AppResult<MorphableModel> {
    let bad = |m: String| AppError::integrity(file, None, m);
    let trunc = |_| bad("file is truncated".into());
    let mut r = ByteReader::new(bytes);
    if r.take(4).map_err(trunc)? != MAGIC {
        return Err(bad("not an MM3D model file".into()));
    }
    let version = r.u32().map_err(trunc)?;
    if version != VERSION {
        return Err(bad(format!("unsupported model version {version} (expected {VERSION})")));
    }
    let n = r.u32().map_err(trunc)? as usize;
    let ks = r.u32().map_err(trunc)? as usize;
    let ke = r.u32().map_err(trunc)? as usize;
    let expected = 20 + 8 * 3 * n * (1 + ks + ke) + 4 * LANDMARK_COUNT;
    if bytes.len() < expected {
        return Err(bad(format!("file is truncated ({} of {expected} bytes)", bytes.len())));
    }
    if bytes.len() > expected {
        return Err(bad(format!("{} trailing bytes", bytes.len() - expected)));
    }
    let mean = r.f64s(3 * n).map_err(trunc)?;
    let shape = r.f64s(3 * n * ks).map_err(trunc)?;
    let expr = r.f64s(3 * n * ke).map_err(trunc)?;
    let lm = (0..LANDMARK_COUNT)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>, _>>()
        .map_err(trunc)?;
    let linear = LinearShapeModel::new(mean, shape, ks, expr, ke).map_err(|e| bad(e.to_string()))?;
    MorphableModel::new(linear, lm).map_err(|e| bad(e.to_string()))
}

pub fn sidecar_path(model_path: &Path) -> PathBuf {
    model_path.with_extension("json")
}

pub fn write_model(path: &Path, model: &MorphableModel, cfg: &SyntheticModelConfig) -> AppResult<()> {
    write_atomic(path, &encode_model(model))?;
    let side = ModelSidecar {
        format: "MM3D".into(),
        version: VERSION,
        seed: cfg.seed,
        n_vertices: model.n_vertices(),
        k_shape: model.layout().k_shape,
        k_expr: model.layout().k_expr,
    };
    let mut json = serde_json::to_vec_pretty(&side).map_err(|e| AppError::Other(e.to_string()))?;
    json.push(b'\n');
    write_atomic(&sidecar_path(path), &json)
}

pub fn read_model(path: &Path) -> AppResult<MorphableModel> {
    decode_model(&read_file(path)?, path)
}

pub fn read_sidecar(path: &Path) -> AppResult<ModelSidecar> {
    let p = sidecar_path(path);
    let bytes = read_file(&p)?;
    serde_json::from_slice(&bytes).map_err(|e| AppError::integrity(&p, None, e.to_string()))
}
