use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::trainer::{train_stage1, train_stage2, TrainState, TrainingData};
use super::{TrainingConfig, Variant};
use crate::error::{config_err, Result};
use crate::eval::{mean_landmark_nme, StackPredictor};
use crate::model::MorphableModel;
use crate::synth::SyntheticData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Training seeds; the dataset stays fixed across seeds.
    pub seeds: Vec<u64>,
    pub volume_fractions: Vec<f64>,
    pub eval_batch: usize,
    pub training: TrainingConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            seeds: (1..=5).collect(),
            volume_fractions: alloc::vec![0.25, 0.5, 0.75, 1.0],
            eval_batch: 64,
            training: TrainingConfig::default(),
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(config_err!("ablation.seeds must not be empty"));
        }
        if self.eval_batch == 0 {
            return Err(config_err!("ablation.eval_batch must be positive"));
        }
        for (i, &f) in self.volume_fractions.iter().enumerate() {
            if !(f > 0.0 && f <= 1.0) {
                return Err(config_err!("ablation.volume_fractions[{i}] must be in (0, 1]"));
            }
        }
        self.training.validate()
    }
}

/// Final mean landmark NME of one training run after each stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub seed: u64,
    pub stage1_nme: Option<f64>,
    pub stage2_nme: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantRow {
    pub variant: Variant,
    pub mask: bool,
    pub stage1_median: Option<f64>,
    pub stage2_median: Option<f64>,
    pub runs: Vec<RunOutcome>,
}

impl VariantRow {
    pub fn label(&self) -> String {
        let mut s = self.variant.name().to_string();
        if !self.mask {
            s.push_str(" w/o mask");
        }
        s
    }
}

/// cyc+sc with mask at a fraction of the wild set, stage-2 NME.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeRow {
    pub fraction: f64,
    pub median: Option<f64>,
    pub runs: Vec<RunOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub variants: Vec<VariantRow>,
    pub volumes: Vec<VolumeRow>,
}

impl AblationTable {
    pub fn variant(&self, v: Variant, mask: bool) -> Option<&VariantRow> {
        self.variants.iter().find(|r| r.variant == v && r.mask == mask)
    }
}

/// Median of the finite values; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Trains both stages and reports the NME after each. Errors end the run
/// but are returned in the outcome rather than propagated.
pub fn run_once(cfg: &TrainingConfig, model: &MorphableModel, data: &SyntheticData, eval_batch: usize) -> RunOutcome {
    let mut out = RunOutcome {
        seed: cfg.seed,
        stage1_nme: None,
        stage2_nme: None,
        error: None,
    };
    let mut go = || -> Result<()> {
        let td = TrainingData {
            annotated: &data.annotated,
            wild: &data.wild,
        };
        let mut st = TrainState::new(cfg, model.layout(), &data.annotated)?;
        let nme = |st: &TrainState| {
            let p = StackPredictor {
                stack: &st.stack,
                use_flm_input: cfg.flags.use_flm_input,
                batch: eval_batch,
            };
            mean_landmark_nme(&p, model, &data.eval)
        };
        train_stage1(cfg, model, &td, &mut st)?;
        out.stage1_nme = Some(nme(&st)?);
        train_stage2(cfg, model, &td, &mut st)?;
        out.stage2_nme = Some(nme(&st)?);
        Ok(())
    };
    if let Err(e) = go() {
        out.error = Some(e.to_string());
    }
    out
}

/// What a progress callback is told after each run.
#[derive(Debug, Clone, Copy)]
pub enum RunLabel<'a> {
    Variant(&'a VariantRow),
    Volume(f64),
}

/// Every variant with and without mask over all seeds, then the wild-volume
/// sweep. The full-volume cell reuses the cyc+sc/mask runs.
pub fn run_ablation_suite(
    cfg: &AblationConfig,
    model: &MorphableModel,
    data: &SyntheticData,
    on_run: &mut dyn FnMut(RunLabel<'_>, &RunOutcome),
) -> Result<AblationTable> {
    cfg.validate()?;
    let mut variants = Vec::new();
    for v in Variant::ALL {
        for mask in [true, false] {
            let mut row = VariantRow {
                variant: v,
                mask,
                stage1_median: None,
                stage2_median: None,
                runs: Vec::new(),
            };
            for &seed in &cfg.seeds {
                let tc = TrainingConfig {
                    seed,
                    wild_fraction: 1.0,
                    ..cfg.training.clone().with_variant(v, mask)
                };
                let r = run_once(&tc, model, data, cfg.eval_batch);
                on_run(RunLabel::Variant(&row), &r);
                row.runs.push(r);
            }
            row.stage1_median = median(&row.runs.iter().filter_map(|r| r.stage1_nme).collect::<Vec<_>>());
            row.stage2_median = median(&row.runs.iter().filter_map(|r| r.stage2_nme).collect::<Vec<_>>());
            variants.push(row);
        }
    }
    let mut volumes = Vec::new();
    for &fraction in &cfg.volume_fractions {
        let runs = match variants.iter().find(|r| r.variant == Variant::CycSc && r.mask) {
            Some(full) if fraction == 1.0 => full.runs.clone(),
            _ => cfg
                .seeds
                .iter()
                .map(|&seed| {
                    let tc = TrainingConfig {
                        seed,
                        wild_fraction: fraction,
                        ..cfg.training.clone().with_variant(Variant::CycSc, true)
                    };
                    let r = run_once(&tc, model, data, cfg.eval_batch);
                    on_run(RunLabel::Volume(fraction), &r);
                    r
                })
                .collect(),
        };
        volumes.push(VolumeRow {
            fraction,
            median: median(&runs.iter().filter_map(|r| r.stage2_nme).collect::<Vec<_>>()),
            runs,
        });
    }
    Ok(AblationTable { variants, volumes })
}
