//! Argument parsing and dispatch. Every failure is reported on stderr and
//! mapped to an exit status: 2 usage/config, 3 file integrity, 4 numeric
//! failure, 1 anything else.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use facefit_core::eval::Metric;
use facefit_core::train::Variant;

use crate::commands::{self, Context, StageSelection, GRAD_CHECK_TOL};
use crate::config::{explain, load_config, LabConfig};
use crate::error::{AppError, AppResult};

/// Environment variable holding the log filter (`error`..`trace`, or
/// env_logger directives). Defaults to `info`.
pub const LOG_ENV: &str = "FACEFIT_LOG";

#[derive(Debug, Parser)]
#[command(name = "facefit", version, about = "Synthetic 3D face model fitting lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file; missing fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed for the command's own random stream (model, data or training).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print the effective configuration with the source of every field and exit.
    #[arg(long, global = true)]
    pub explain_config: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Base,
    Cyc,
    Sc,
    #[value(name = "cyc+sc")]
    CycSc,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Base => Variant::Base,
            VariantArg::Cyc => Variant::Cyc,
            VariantArg::Sc => Variant::Sc,
            VariantArg::CycSc => Variant::CycSc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    #[value(name = "nme_2d_sparse")]
    Nme2dSparse,
    #[value(name = "nme_3d_sparse")]
    Nme3dSparse,
    #[value(name = "nme_2d_dense")]
    Nme2dDense,
    #[value(name = "nme_3d_dense")]
    Nme3dDense,
    #[value(name = "nme_reconstruction")]
    Reconstruction,
}

impl MetricArg {
    fn metric(self) -> Metric {
        let name = self.to_possible_value().expect("no skipped values");
        Metric::from_name(name.get_name()).expect("metric names agree")
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the morphable model (model.mm3d + model.json).
    GenModel {
        #[command(flatten)]
        common: Common,
    },
    /// Generate annotated, wild and eval samples (data.f3ds).
    GenData {
        #[command(flatten)]
        common: Common,
        /// Model file [default: <out>/model.mm3d].
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train the regressor (stage 1, stage 2 or both).
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value = "both")]
        stage: StageArg,
        /// Overrides training.flags with a named variant.
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Overrides training.flags.use_weight_mask.
        #[arg(long, value_enum)]
        mask: Option<Switch>,
        /// Stop each stage after this many steps.
        #[arg(long)]
        max_steps: Option<usize>,
        /// Stage-1 checkpoint for `--stage 2` [default: <out>/checkpoint_stage1.ckpt].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the eval split (report.csv, edc_*.csv).
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// [default: the newest of <out>/checkpoint_stage{2,1}.ckpt].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run every variant and the wild-volume sweep over the configured seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Write the error distribution curve of one metric from a report.
    EdcExport {
        #[command(flatten)]
        common: Common,
        /// [default: <out>/report.csv].
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "nme_2d_sparse")]
        metric: MetricArg,
    },
    /// Finite-difference check of every loss gradient; exits 0 iff all pass.
    GradCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// [default: <out>/model.mm3d].
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// [default: <out>/data.f3ds].
    #[arg(long)]
    pub data: Option<PathBuf>,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GenModel { common }
            | Command::GenData { common, .. }
            | Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Ablate { common, .. }
            | Command::EdcExport { common, .. }
            | Command::GradCheck { common, .. } => common,
        }
    }

    /// Applies command-line overrides; returns the config paths they set.
    fn apply_overrides(&self, cfg: &mut LabConfig) -> Vec<&'static str> {
        let mut set = Vec::new();
        if let Some(seed) = self.common().seed {
            match self {
                Command::GenModel { .. } => {
                    cfg.model.seed = seed;
                    set.push("model.seed");
                }
                Command::GenData { .. } => {
                    cfg.data.seed = seed;
                    set.push("data.seed");
                }
                Command::Ablate { .. } => {
                    cfg.ablation.seeds = vec![seed];
                    set.push("ablation.seeds");
                }
                Command::Train { .. } | Command::GradCheck { .. } => {
                    cfg.training.seed = seed;
                    set.push("training.seed");
                }
                Command::Eval { .. } | Command::EdcExport { .. } => {}
            }
        }
        if let Command::Train { variant, mask, max_steps, .. } = self {
            let use_mask = mask.map(|m| m == Switch::On).unwrap_or(cfg.training.flags.use_weight_mask);
            if let Some(v) = variant {
                cfg.training.flags = Variant::from(*v).flags(use_mask);
                set.push("training.flags");
            } else if mask.is_some() {
                cfg.training.flags.use_weight_mask = use_mask;
                set.push("training.flags.use_weight_mask");
            }
            if let Some(n) = max_steps {
                cfg.training.max_steps_per_stage = Some(*n);
                set.push("training.max_steps_per_stage");
            }
        }
        set
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "info");
    // A second initialization (tests calling `main_with` repeatedly) is harmless.
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging();
    match run(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn opt(p: &Option<PathBuf>) -> Option<&Path> {
    p.as_deref()
}

pub fn run(cmd: &Command) -> AppResult<i32> {
    let common = cmd.common();
    let loaded = load_config(common.config.as_deref())?;
    let mut config = loaded.config;
    let flagged = cmd.apply_overrides(&mut config);
    config.validate()?;
    if common.explain_config {
        print!("{}", explain(&config, &loaded.document, &flagged)?);
        return Ok(0);
    }
    // grad-check writes nothing
    if !matches!(cmd, Command::GradCheck { .. }) {
        std::fs::create_dir_all(&common.out).map_err(|e| AppError::io(&common.out, e))?;
    }
    let ctx = Context {
        config,
        out: common.out.clone(),
    };
    match cmd {
        Command::GenModel { .. } => {
            commands::gen_model(&ctx)?;
        }
        Command::GenData { model, .. } => {
            commands::gen_data(&ctx, opt(model))?;
        }
        Command::Train {
            inputs, stage, checkpoint, ..
        } => {
            let stages = match stage {
                StageArg::One => StageSelection::One,
                StageArg::Two => StageSelection::Two,
                StageArg::Both => StageSelection::Both,
            };
            commands::train(&ctx, stages, opt(&inputs.model), opt(&inputs.data), opt(checkpoint))?;
        }
        Command::Eval { inputs, checkpoint, .. } => {
            commands::eval(&ctx, opt(checkpoint), opt(&inputs.model), opt(&inputs.data))?;
        }
        Command::Ablate { inputs, .. } => {
            commands::ablate(&ctx, opt(&inputs.model), opt(&inputs.data))?;
        }
        Command::EdcExport { report, metric, .. } => {
            commands::edc_export(&ctx, opt(report), metric.metric())?;
        }
        Command::GradCheck { trials, .. } => {
            let reports = commands::grad_check(&ctx, *trials)?;
            let worst = reports.iter().map(|(_, r)| r.max_rel_error).fold(0.0, f64::max);
            for (term, r) in &reports {
                println!("{:<8} max_rel_error={:.3e} trials={}", term.name(), r.max_rel_error, r.trials);
            }
            let pass = worst < GRAD_CHECK_TOL;
            println!("max_rel_error={worst:.3e} tolerance={GRAD_CHECK_TOL:e} {}", if pass { "PASS" } else { "FAIL" });
            return Ok(if pass { 0 } else { 1 });
        }
    }
    Ok(0)
}
