//! The JSON lab configuration: one file with a section per pipeline stage.
//! Every field is optional and falls back to its default; unknown fields
//! are rejected with their dotted path.

use std::path::Path;

use facefit_core::eval::{EvalOptions, IcpConfig};
use facefit_core::model::synthetic::SyntheticModelConfig;
use facefit_core::synth::DataConfig;
use facefit_core::train::{AblationConfig, TrainingConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{AppError, AppResult};
use crate::io::read_file;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Worst images dropped before the error-distribution mean.
    pub discard_worst: usize,
    pub discard_worst_in_buckets: bool,
    pub icp: IcpConfig,
    /// Images per regressor forward pass.
    pub batch: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        let o = EvalOptions::default();
        Self {
            discard_worst: o.discard_worst,
            discard_worst_in_buckets: o.discard_worst_in_buckets,
            icp: o.icp,
            batch: 64,
        }
    }
}

impl EvalSettings {
    pub fn options(&self) -> EvalOptions {
        EvalOptions {
            discard_worst: self.discard_worst,
            discard_worst_in_buckets: self.discard_worst_in_buckets,
            icp: self.icp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSettings {
    pub seeds: Vec<u64>,
    pub volume_fractions: Vec<f64>,
}

impl Default for AblationSettings {
    fn default() -> Self {
        let a = AblationConfig::default();
        Self {
            seeds: a.seeds,
            volume_fractions: a.volume_fractions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub model: SyntheticModelConfig,
    pub data: DataConfig,
    pub training: TrainingConfig,
    pub eval: EvalSettings,
    pub ablation: AblationSettings,
}

impl LabConfig {
    pub fn ablation_config(&self) -> AblationConfig {
        AblationConfig {
            seeds: self.ablation.seeds.clone(),
            volume_fractions: self.ablation.volume_fractions.clone(),
            eval_batch: self.eval.batch,
            training: self.training.clone(),
        }
    }

    /// Section-level validation; messages name the offending field.
    pub fn validate(&self) -> AppResult<()> {
        let section = |name: &'static str, r: facefit_core::Result<()>| {
            r.map_err(|e| AppError::config(name, strip_kind(&e.to_string())))
        };
        if self.model.n_vertices < facefit_core::model::LANDMARK_COUNT {
            return Err(AppError::config(
                "model.n_vertices",
                format!("must be at least {}", facefit_core::model::LANDMARK_COUNT),
            ));
        }
        section("data", self.data.validate())?;
        section("training", self.training.validate())?;
        section("ablation", self.ablation_config().validate())?;
        let side = self.training.network.input_side;
        if side > self.data.resolution[0].min(self.data.resolution[1]) {
            return Err(AppError::config(
                "training.network.input_side",
                format!("{side} exceeds the image resolution {:?}", self.data.resolution),
            ));
        }
        if self.training.network.channels != 2 {
            return Err(AppError::config("training.network.channels", "must be 2 (image + landmark map)"));
        }
        if self.eval.batch == 0 {
            return Err(AppError::config("eval.batch", "must be positive"));
        }
        Ok(())
    }
}

fn strip_kind(msg: &str) -> String {
    msg.strip_prefix("configuration error: ").unwrap_or(msg).to_string()
}

/// Parses a config document, reporting the dotted path of the first bad
/// field.
pub fn parse_config(text: &str) -> AppResult<LabConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: LabConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "(root)".to_string() } else { path };
        AppError::config(path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loaded configuration plus the raw document it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: LabConfig,
    pub document: Value,
}

pub fn load_config(path: Option<&Path>) -> AppResult<LoadedConfig> {
    let Some(path) = path else {
        return Ok(LoadedConfig {
            config: LabConfig::default(),
            document: Value::Object(Default::default()),
        });
    };
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| AppError::config("(root)", "config file is not UTF-8"))?;
    let config = parse_config(&text)?;
    let document = serde_json::from_str(&text).map_err(|e| AppError::config("(root)", e.to_string()))?;
    Ok(LoadedConfig { config, document })
}

fn lookup<'a>(doc: &'a Value, path: &[&str]) -> Option<&'a Value> {
    path.iter().try_fold(doc, |v, k| v.get(*k))
}

fn leaves(v: &Value, prefix: &mut Vec<String>, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(m) if !m.is_empty() => {
            for (k, child) in m {
                prefix.push(k.clone());
                leaves(child, prefix, out);
                prefix.pop();
            }
        }
        _ => out.push((prefix.join("."), v.clone())),
    }
}

/// One line per field: `path = value  # source`, where source is
/// `default`, `config` or `flag`.
pub fn explain(cfg: &LabConfig, document: &Value, flag_paths: &[&str]) -> AppResult<String> {
    let full = serde_json::to_value(cfg).map_err(|e| AppError::Other(e.to_string()))?;
    let mut out = Vec::new();
    leaves(&full, &mut Vec::new(), &mut out);
    let mut text = String::from("# effective configuration (JSON paths); every field is optional\n");
    for (path, value) in out {
        let parts: Vec<&str> = path.split('.').collect();
        let from_flag = flag_paths.iter().any(|f| path == *f || path.starts_with(&format!("{f}.")));
        let source = if from_flag {
            "flag"
        } else if lookup(document, &parts).is_some() {
            "config"
        } else {
            "default"
        };
        text.push_str(&format!("{path} = {value}  # {source}\n"));
    }
    Ok(text)
}
