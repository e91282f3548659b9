//! Versioned binary checkpoints of a training state.
//!
//! ```text
//! magic b"F3CK", version u32
//! blob   training config (JSON)
//! u64    seed
//! u32    K_s, u32 K_e
//! blob   network config (JSON)
//! f64[]  coefficient mean, std
//! net    regressor, encoder, critic   (u32 input, u32 layers, {u32 width, u8 activation}*, f64[] params)
//! opt    regressor, critic, encoder   (u8 kind, f64 hyperparameters, u64 step, u64 epoch, f64[] m, f64[] v)
//! u64    stage-1 epochs, stage-1 steps, stage-2 epochs, stage-2 steps
//! u32    crc32 of everything above
//! ```
//!
//! `f64[]` is a u64 count followed by the values. Batch order is derived
//! from the seed and the progress counters, so they are the complete random
//! state.

use std::path::Path;

use facefit_core::model::CoefficientLayout;
use facefit_core::neural::{Activation, Mlp, NetworkConfig, NetworkStack, OptimizerKind, OptimizerState};
use facefit_core::train::{Progress, TrainState, TrainingConfig};

use crate::error::{AppError, AppResult};
use crate::io::{read_file, write_atomic, ByteReader, ByteWriter, Truncated};

pub const MAGIC: &[u8; 4] = b"F3CK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub training: TrainingConfig,
    pub state: TrainState,
}

fn put_net(w: &mut ByteWriter, m: &Mlp) {
    w.u32(m.input_len() as u32);
    let spec = m.layer_spec();
    w.u32(spec.len() as u32);
    for (width, act) in spec {
        w.u32(width as u32);
        w.u8(act.code());
    }
    w.f64_vec(m.params());
}

fn put_opt(w: &mut ByteWriter, o: &OptimizerState) {
    match o.kind {
        OptimizerKind::Sgd { learning_rate, decay } => {
            w.u8(0);
            w.f64s(&[learning_rate, decay]);
        }
        OptimizerKind::Adam {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } => {
            w.u8(1);
            w.f64s(&[learning_rate, beta1, beta2, epsilon]);
        }
    }
    w.u64(o.step);
    w.u64(o.epoch);
    w.f64_vec(&o.m);
    w.f64_vec(&o.v);
}

fn to_json<T: serde::Serialize>(v: &T) -> AppResult<Vec<u8>> {
    serde_json::to_vec(v).map_err(|e| AppError::Other(e.to_string()))
}

pub fn encode_checkpoint(ck: &Checkpoint) -> AppResult<Vec<u8>> {
    let st = &ck.state;
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.blob(&to_json(&ck.training)?);
    w.u64(st.seed);
    w.u32(st.stack.layout.k_shape as u32);
    w.u32(st.stack.layout.k_expr as u32);
    w.blob(&to_json(&st.stack.config)?);
    w.f64_vec(&st.stack.coeff_mean);
    w.f64_vec(&st.stack.coeff_std);
    put_net(&mut w, &st.stack.regressor);
    put_net(&mut w, &st.stack.encoder);
    put_net(&mut w, &st.stack.critic);
    put_opt(&mut w, &st.regressor_opt);
    put_opt(&mut w, &st.critic_opt);
    put_opt(&mut w, &st.encoder_opt);
    let p = st.progress;
    for v in [p.stage1_epochs, p.stage1_steps, p.stage2_epochs, p.stage2_steps] {
        w.u64(v);
    }
    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    Ok(w.buf)
}

enum Bad {
    Truncated,
    Invalid(String),
}

impl From<Truncated> for Bad {
    fn from(_: Truncated) -> Self {
        Bad::Truncated
    }
}

fn get_net(r: &mut ByteReader) -> Result<Mlp, Bad> {
    let input = r.u32()? as usize;
    let n = r.u32()? as usize;
    let mut spec = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        let width = r.u32()? as usize;
        let code = r.u8()?;
        let act = Activation::from_code(code).ok_or_else(|| Bad::Invalid(format!("unknown activation code {code}")))?;
        spec.push((width, act));
    }
    let params = r.f64_vec()?;
    Mlp::from_params(input, &spec, params).map_err(|e| Bad::Invalid(e.to_string()))
}

fn get_opt(r: &mut ByteReader) -> Result<OptimizerState, Bad> {
    let kind = match r.u8()? {
        0 => {
            let v = r.f64s(2)?;
            OptimizerKind::Sgd {
                learning_rate: v[0],
                decay: v[1],
            }
        }
        1 => {
            let v = r.f64s(4)?;
            OptimizerKind::Adam {
                learning_rate: v[0],
                beta1: v[1],
                beta2: v[2],
                epsilon: v[3],
            }
        }
        k => return Err(Bad::Invalid(format!("unknown optimizer kind {k}"))),
    };
    Ok(OptimizerState {
        kind,
        step: r.u64()?,
        epoch: r.u64()?,
        m: r.f64_vec()?,
        v: r.f64_vec()?,
    })
}

pub fn decode_checkpoint(bytes: &[u8], file: &Path) -> AppResult<Checkpoint> {
    let bad = |m: &str| AppError::integrity(file, None, m);
    if bytes.len() < 12 {
        return Err(bad("file is truncated"));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap_or_default());
    if version != VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version} (expected {VERSION})")));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap_or_default());
    let mut r = ByteReader::new(&body[8..]);
    let parsed: Result<Checkpoint, Bad> = (|| {
        let training: TrainingConfig = serde_json::from_slice(r.blob()?).map_err(|e| Bad::Invalid(e.to_string()))?;
        let seed = r.u64()?;
        let layout = CoefficientLayout::new(r.u32()? as usize, r.u32()? as usize);
        let config: NetworkConfig = serde_json::from_slice(r.blob()?).map_err(|e| Bad::Invalid(e.to_string()))?;
        let coeff_mean = r.f64_vec()?;
        let coeff_std = r.f64_vec()?;
        let regressor = get_net(&mut r)?;
        let encoder = get_net(&mut r)?;
        let critic = get_net(&mut r)?;
        let regressor_opt = get_opt(&mut r)?;
        let critic_opt = get_opt(&mut r)?;
        let encoder_opt = get_opt(&mut r)?;
        let progress = Progress {
            stage1_epochs: r.u64()?,
            stage1_steps: r.u64()?,
            stage2_epochs: r.u64()?,
            stage2_steps: r.u64()?,
        };
        if r.remaining() != 0 {
            return Err(Bad::Invalid(format!("{} unexpected bytes", r.remaining())));
        }
        let stack = NetworkStack {
            config,
            layout,
            regressor,
            encoder,
            critic,
            coeff_mean,
            coeff_std,
            seed,
        };
        Ok(Checkpoint {
            training,
            state: TrainState {
                seed,
                stack,
                regressor_opt,
                critic_opt,
                encoder_opt,
                progress,
            },
        })
    })();
    // a bad checksum takes precedence over whatever the body parse found
    if crc32fast::hash(body) != stored {
        return Err(bad("checksum mismatch (file is corrupt or truncated)"));
    }
    let ck = match parsed {
        Ok(c) => c,
        Err(Bad::Truncated) => return Err(bad("file is truncated")),
        Err(Bad::Invalid(m)) => return Err(bad(&m)),
    };
    validate(&ck).map_err(|m| bad(&m))?;
    Ok(ck)
}

/// Cross-checks that the stored networks match the stored configuration.
fn validate(ck: &Checkpoint) -> Result<(), String> {
    let s = &ck.state.stack;
    let layers = [
        ("regressor", &s.regressor, s.config.regressor_layers(s.layout), s.config.input_len()),
        ("encoder", &s.encoder, s.config.encoder_layers(), s.config.input_len()),
        ("critic", &s.critic, s.config.critic_layers(), s.config.latent + s.layout.len()),
    ];
    for (name, net, spec, input) in layers {
        if net.layer_spec() != spec || net.input_len() != input {
            return Err(format!("{name} architecture does not match the stored network config"));
        }
    }
    if s.coeff_mean.len() != s.layout.len() || s.coeff_std.len() != s.layout.len() {
        return Err("coefficient statistics have the wrong length".into());
    }
    let st = &ck.state;
    for (name, opt, n) in [
        ("regressor", &st.regressor_opt, s.regressor.n_params()),
        ("critic", &st.critic_opt, s.critic.n_params()),
        ("encoder", &st.encoder_opt, s.encoder.n_params()),
    ] {
        let ok_len = |v: &Vec<f64>| v.is_empty() || v.len() == n;
        if !ok_len(&opt.m) || !ok_len(&opt.v) {
            return Err(format!("{name} optimizer state has the wrong length"));
        }
    }
    Ok(())
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> AppResult<()> {
    write_atomic(path, &encode_checkpoint(ck)?)
}

pub fn read_checkpoint(path: &Path) -> AppResult<Checkpoint> {
    decode_checkpoint(&read_file(path)?, path)
}
