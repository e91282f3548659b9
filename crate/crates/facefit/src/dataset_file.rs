//! Dataset files: a header followed by length-prefixed, checksummed records.
//!
//! ```text
//! magic  b"F3DS"
//! version u32
//! count   u64                      number of records
//! record* { len u32, payload[len], crc32(payload) u32 }
//! ```
//!
//! The payload's first byte is the record kind: 0 = generation settings
//! (JSON, always record 0), 1 = annotated, 2 = wild, 3 = eval. Images are
//! stored as u8 pixels, landmark maps as one bit per cell (set = `+1`).
//! The coefficients wild samples were rendered from are never stored.

use std::path::Path;

use facefit_core::model::{CoefficientLayout, CoefficientVector, FacialLandmarkMap, LandmarkSet, LANDMARK_COUNT};
use facefit_core::synth::{Annotated3DSample, DataConfig, EvalSample, ProxyImage, Wild2DSample};

use crate::error::{AppError, AppResult};
use crate::io::{read_file, write_atomic, ByteReader, ByteWriter, Truncated};

pub const MAGIC: &[u8; 4] = b"F3DS";
pub const VERSION: u32 = 1;

const KIND_META: u8 = 0;
const KIND_ANNOTATED: u8 = 1;
const KIND_WILD: u8 = 2;
const KIND_EVAL: u8 = 3;

/// Persisted training and evaluation splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: DataConfig,
    pub annotated: Vec<Annotated3DSample>,
    pub wild: Vec<Wild2DSample>,
    pub eval: Vec<EvalSample>,
}

fn put_image(w: &mut ByteWriter, img: &ProxyImage) {
    let (h, wd) = img.resolution();
    w.u16(h as u16);
    w.u16(wd as u16);
    w.bytes(img.pixels());
}

fn put_flm(w: &mut ByteWriter, m: &FacialLandmarkMap) {
    let (h, wd) = m.resolution();
    w.u16(h as u16);
    w.u16(wd as u16);
    let mut packed = vec![0u8; (h * wd).div_ceil(8)];
    for (i, &c) in m.cells().iter().enumerate() {
        if c > 0 {
            packed[i / 8] |= 1 << (i % 8);
        }
    }
    w.bytes(&packed);
}

fn put_coeff(w: &mut ByteWriter, c: &CoefficientVector) {
    w.u16(c.layout().k_shape as u16);
    w.u16(c.layout().k_expr as u16);
    w.f64s(c.as_slice());
}

fn put_landmarks(w: &mut ByteWriter, l: &LandmarkSet) {
    w.u8(l.dim() as u8);
    w.f64s(l.as_slice());
}

/// Decoding failure inside one record's payload.
enum Bad {
    Truncated,
    Invalid(String),
}

impl From<Truncated> for Bad {
    fn from(_: Truncated) -> Self {
        Bad::Truncated
    }
}

impl From<facefit_core::Error> for Bad {
    fn from(e: facefit_core::Error) -> Self {
        Bad::Invalid(e.to_string())
    }
}

fn get_image(r: &mut ByteReader) -> Result<ProxyImage, Bad> {
    let (h, w) = (r.u16()? as usize, r.u16()? as usize);
    Ok(ProxyImage::from_pixels(h, w, r.take(h * w)?.to_vec())?)
}

fn get_flm(r: &mut ByteReader) -> Result<FacialLandmarkMap, Bad> {
    let (h, w) = (r.u16()? as usize, r.u16()? as usize);
    let packed = r.take((h * w).div_ceil(8))?;
    let cells = (0..h * w).map(|i| if packed[i / 8] >> (i % 8) & 1 == 1 { 1 } else { -1 }).collect();
    Ok(FacialLandmarkMap::from_cells(h, w, cells)?)
}

fn get_coeff(r: &mut ByteReader) -> Result<CoefficientVector, Bad> {
    let layout = CoefficientLayout::new(r.u16()? as usize, r.u16()? as usize);
    let raw = r.f64s(layout.len())?;
    Ok(CoefficientVector::from_raw(layout, raw)?)
}

fn get_landmarks(r: &mut ByteReader) -> Result<LandmarkSet, Bad> {
    let dim = r.u8()? as usize;
    if !(dim == 2 || dim == 3) {
        return Err(Bad::Invalid(format!("landmark dimension {dim}")));
    }
    Ok(LandmarkSet::new(dim, r.f64s(dim * LANDMARK_COUNT)?)?)
}

pub fn encode_dataset(ds: &Dataset) -> AppResult<Vec<u8>> {
    let mut payloads = Vec::with_capacity(1 + ds.annotated.len() + ds.wild.len() + ds.eval.len());
    let mut meta = ByteWriter::new();
    meta.u8(KIND_META);
    meta.bytes(&serde_json::to_vec(&ds.config).map_err(|e| AppError::Other(e.to_string()))?);
    payloads.push(meta.buf);
    for s in &ds.annotated {
        let mut w = ByteWriter::new();
        w.u8(KIND_ANNOTATED);
        put_image(&mut w, &s.proxy);
        put_flm(&mut w, &s.flm);
        put_coeff(&mut w, &s.gt_coeff);
        w.f64(s.yaw_deg);
        payloads.push(w.buf);
    }
    for s in &ds.wild {
        let mut w = ByteWriter::new();
        w.u8(KIND_WILD);
        put_image(&mut w, &s.proxy);
        put_flm(&mut w, &s.flm);
        put_landmarks(&mut w, &s.noisy_landmarks);
        payloads.push(w.buf);
    }
    for s in &ds.eval {
        let mut w = ByteWriter::new();
        w.u8(KIND_EVAL);
        put_image(&mut w, &s.proxy);
        put_flm(&mut w, &s.flm);
        put_landmarks(&mut w, &s.detected_landmarks);
        put_coeff(&mut w, &s.gt_coeff);
        w.f64(s.yaw_deg);
        payloads.push(w.buf);
    }
    let mut out = ByteWriter::new();
    out.bytes(MAGIC);
    out.u32(VERSION);
    out.u64(payloads.len() as u64);
    for p in &payloads {
        out.u32(p.len() as u32);
        out.bytes(p);
        out.u32(crc32fast::hash(p));
    }
    Ok(out.buf)
}

pub fn decode_dataset(bytes: &[u8], file: &Path) -> AppResult<Dataset> {
    let err = |rec: Option<usize>, m: &str| AppError::integrity(file, rec, m);
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4).map_err(|_| err(None, "file is truncated"))?;
    if magic != MAGIC {
        return Err(err(None, "not a dataset file"));
    }
    let version = r.u32().map_err(|_| err(None, "file is truncated"))?;
    if version != VERSION {
        return Err(err(None, &format!("unsupported dataset version {version} (expected {VERSION})")));
    }
    let count = r.u64().map_err(|_| err(None, "file is truncated"))?;
    let mut ds = Dataset {
        config: DataConfig::default(),
        annotated: Vec::new(),
        wild: Vec::new(),
        eval: Vec::new(),
    };
    for i in 0..count as usize {
        let truncated = || err(Some(i), "record is truncated");
        let len = r.u32().map_err(|_| truncated())? as usize;
        let payload = r.take(len).map_err(|_| truncated())?;
        let crc = r.u32().map_err(|_| truncated())?;
        if crc32fast::hash(payload) != crc {
            return Err(err(Some(i), "checksum mismatch"));
        }
        let Some((&kind, body)) = payload.split_first() else {
            return Err(err(Some(i), "empty record"));
        };
        if (i == 0) != (kind == KIND_META) {
            return Err(err(Some(i), "settings record must come first, exactly once"));
        }
        let mut br = ByteReader::new(body);
        let decoded: Result<(), Bad> = (|| {
            match kind {
                KIND_META => {
                    ds.config = serde_json::from_slice(body).map_err(|e| Bad::Invalid(e.to_string()))?;
                    return Ok(());
                }
                KIND_ANNOTATED => {
                    let proxy = get_image(&mut br)?;
                    let flm = get_flm(&mut br)?;
                    let gt_coeff = get_coeff(&mut br)?;
                    let yaw_deg = br.f64()?;
                    ds.annotated.push(Annotated3DSample { proxy, flm, gt_coeff, yaw_deg });
                }
                KIND_WILD => {
                    let proxy = get_image(&mut br)?;
                    let flm = get_flm(&mut br)?;
                    let noisy_landmarks = get_landmarks(&mut br)?;
                    ds.wild.push(Wild2DSample { proxy, flm, noisy_landmarks });
                }
                KIND_EVAL => {
                    let proxy = get_image(&mut br)?;
                    let flm = get_flm(&mut br)?;
                    let detected_landmarks = get_landmarks(&mut br)?;
                    let gt_coeff = get_coeff(&mut br)?;
                    let yaw_deg = br.f64()?;
                    ds.eval.push(EvalSample {
                        proxy,
                        flm,
                        detected_landmarks,
                        gt_coeff,
                        yaw_deg,
                    });
                }
                k => return Err(Bad::Invalid(format!("unknown record kind {k}"))),
            }
            if br.remaining() != 0 {
                return Err(Bad::Invalid(format!("{} unexpected bytes", br.remaining())));
            }
            Ok(())
        })();
        match decoded {
            Ok(()) => {}
            Err(Bad::Truncated) => return Err(err(Some(i), "payload is shorter than its contents")),
            Err(Bad::Invalid(m)) => return Err(err(Some(i), &m)),
        }
    }
    if count == 0 {
        return Err(err(None, "no settings record"));
    }
    if r.remaining() != 0 {
        return Err(err(None, &format!("{} trailing bytes after {count} records", r.remaining())));
    }
    Ok(ds)
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> AppResult<()> {
    write_atomic(path, &encode_dataset(ds)?)
}

pub fn read_dataset(path: &Path) -> AppResult<Dataset> {
    decode_dataset(&read_file(path)?, path)
}
