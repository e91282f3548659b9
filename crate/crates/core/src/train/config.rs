use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::loss::{Lambdas, WeightMask};
use crate::neural::{NetworkConfig, OptimizerKind};

/// The four switches that define the ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariantFlags {
    /// Feed the landmark map channel (zero-filled otherwise).
    pub use_flm_input: bool,
    /// 2D consistency, 3D consistency and cycle losses on wild data.
    pub use_cycle_losses: bool,
    pub use_self_critic: bool,
    /// Tiered mask weights; otherwise every mask point weighs 1.
    pub use_weight_mask: bool,
}

impl Default for VariantFlags {
    fn default() -> Self {
        Variant::CycSc.flags(true)
    }
}

impl VariantFlags {
    pub fn uses_wild(&self) -> bool {
        self.use_cycle_losses || self.use_self_critic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "cyc")]
    Cyc,
    #[serde(rename = "sc")]
    Sc,
    #[serde(rename = "cyc+sc")]
    CycSc,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Base, Variant::Cyc, Variant::Sc, Variant::CycSc];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Cyc => "cyc",
            Variant::Sc => "sc",
            Variant::CycSc => "cyc+sc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    pub fn flags(self, mask: bool) -> VariantFlags {
        let (flm, cyc, sc) = match self {
            Variant::Base => (false, false, false),
            Variant::Cyc => (true, true, false),
            Variant::Sc => (true, false, true),
            Variant::CycSc => (true, true, true),
        };
        VariantFlags {
            use_flm_input: flm,
            use_cycle_losses: cyc,
            use_self_critic: sc,
            use_weight_mask: mask,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Network initialization and batch order.
    pub seed: u64,
    pub batch_size: usize,
    pub lambdas: Lambdas,
    pub regressor_lr: f64,
    /// Per-epoch multiplier of the regressor learning rate.
    pub lr_decay: f64,
    pub critic_lr: f64,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    /// Stop a stage after this many steps even mid-epoch.
    pub max_steps_per_stage: Option<usize>,
    pub flags: VariantFlags,
    /// Mask used when `flags.use_weight_mask` is on; its selectors with unit
    /// weights are used otherwise.
    pub mask: WeightMask,
    /// Prefix fraction of the wild set used for training.
    pub wild_fraction: f64,
    /// Stage 2 minimizes the vertex distance cost plus the stage-1 loss.
    pub stage2_with_overall_loss: bool,
    /// Clip the regressor gradient to this Euclidean norm before each step.
    pub grad_clip_norm: Option<f64>,
    pub network: NetworkConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            batch_size: 32,
            lambdas: Lambdas::default(),
            regressor_lr: 5e-5,
            lr_decay: 0.95,
            critic_lr: 1e-4,
            stage1_epochs: 2,
            stage2_epochs: 10,
            max_steps_per_stage: None,
            flags: VariantFlags::default(),
            mask: WeightMask::tiered(),
            wild_fraction: 1.0,
            stage2_with_overall_loss: false,
            grad_clip_norm: None,
            network: NetworkConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(config_err!("training.batch_size must be positive"));
        }
        for (name, v) in [
            ("regressor_lr", self.regressor_lr),
            ("critic_lr", self.critic_lr),
            ("lr_decay", self.lr_decay),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_err!("training.{name} must be finite and positive"));
            }
        }
        let l = &self.lambdas;
        for (name, v) in [("l2d_con", l.l2d_con), ("l3d_con", l.l3d_con), ("cyc", l.cyc), ("sc", l.sc)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(config_err!("training.lambdas.{name} must be finite and >= 0"));
            }
        }
        if !(self.wild_fraction > 0.0 && self.wild_fraction <= 1.0) {
            return Err(config_err!("training.wild_fraction must be in (0, 1]"));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(config_err!("training.grad_clip_norm must be finite and positive"));
            }
        }
        self.network.validate()
    }

    pub fn regressor_optimizer(&self) -> OptimizerKind {
        OptimizerKind::Sgd {
            learning_rate: self.regressor_lr,
            decay: self.lr_decay,
        }
    }

    pub fn critic_optimizer(&self) -> OptimizerKind {
        OptimizerKind::adam(self.critic_lr)
    }

    pub fn active_mask(&self) -> WeightMask {
        if self.flags.use_weight_mask {
            self.mask.clone()
        } else {
            self.mask.unweighted()
        }
    }

    pub fn with_variant(mut self, v: Variant, mask: bool) -> Self {
        self.flags = v.flags(mask);
        self
    }

    /// Number of wild samples used out of `n`.
    pub fn wild_count(&self, n: usize) -> usize {
        if n == 0 {
            return 0;
        }
        (libm::ceil(self.wild_fraction * n as f64) as usize).clamp(1, n)
    }
}
