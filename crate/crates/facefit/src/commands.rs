//! The pipeline steps behind each subcommand. Every command reads its
//! inputs, computes, and writes its artifacts under the output directory;
//! rerunning with the same configuration rewrites identical bytes.

use std::path::{Path, PathBuf};

use facefit_core::eval::{edc, evaluate_checkpoint, mean_landmark_nme, mean_vertex_distance, Metric, StackPredictor};
use facefit_core::loss::WeightMask;
use facefit_core::model::synthetic::generate_model;
use facefit_core::model::MorphableModel;
use facefit_core::neural::{GradCheckReport, NetworkStack};
use facefit_core::rng::{self, streams};
use facefit_core::synth::{annotated_sample, coefficient_stats, generate_data, wild_sample, SyntheticData};
use facefit_core::train::{
    check_loss_term, run_ablation_suite, train_stage1_with, train_stage2_with, GradCheckSetup, LossTerm, RunLabel, StepLog,
    TrainState, TrainingData,
};
use log::info;

use crate::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use crate::config::LabConfig;
use crate::dataset_file::{read_dataset, write_dataset, Dataset};
use crate::error::{AppError, AppResult};
use crate::io::{read_file, write_atomic};
use crate::model_file::{read_model, write_model};
use crate::tables;

pub const MODEL_FILE: &str = "model.mm3d";
pub const DATA_FILE: &str = "data.f3ds";
pub const STAGE1_CHECKPOINT: &str = "checkpoint_stage1.ckpt";
pub const STAGE2_CHECKPOINT: &str = "checkpoint_stage2.ckpt";
pub const REPORT_FILE: &str = "report.csv";

/// Which training stages a `train` invocation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageSelection {
    One,
    Two,
    Both,
}

pub struct Context {
    pub config: LabConfig,
    pub out: PathBuf,
}

impl Context {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn or_default(&self, given: Option<&Path>, name: &str) -> PathBuf {
        given.map(Path::to_path_buf).unwrap_or_else(|| self.path(name))
    }
}

pub fn gen_model(ctx: &Context) -> AppResult<PathBuf> {
    let model = generate_model(&ctx.config.model)?;
    let path = ctx.path(MODEL_FILE);
    write_model(&path, &model, &ctx.config.model)?;
    info!("event=model_written path={} vertices={}", path.display(), model.n_vertices());
    Ok(path)
}

pub fn gen_data(ctx: &Context, model_path: Option<&Path>) -> AppResult<PathBuf> {
    let model = read_model(&ctx.or_default(model_path, MODEL_FILE))?;
    let data = generate_data(&model, &ctx.config.data)?;
    let ds = Dataset {
        config: ctx.config.data.clone(),
        annotated: data.annotated,
        wild: data.wild,
        eval: data.eval,
    };
    let path = ctx.path(DATA_FILE);
    write_dataset(&path, &ds)?;
    info!(
        "event=data_written path={} annotated={} wild={} eval={}",
        path.display(),
        ds.annotated.len(),
        ds.wild.len(),
        ds.eval.len()
    );
    Ok(path)
}

fn load_inputs(ctx: &Context, model: Option<&Path>, data: Option<&Path>) -> AppResult<(MorphableModel, Dataset)> {
    let model = read_model(&ctx.or_default(model, MODEL_FILE))?;
    let ds = read_dataset(&ctx.or_default(data, DATA_FILE))?;
    if let Some(s) = ds.annotated.first() {
        if s.gt_coeff.layout() != model.layout() {
            return Err(AppError::Other("dataset coefficients do not match the model's layout".into()));
        }
    }
    Ok((model, ds))
}

fn log_steps(stage: u8, logs: &[StepLog]) {
    let every = 50;
    for l in logs.iter().filter(|l| l.step == 1 || l.step % every == 0 || l.step == logs.len() as u64) {
        info!(
            "event=step stage={stage} step={} objective={} total={} vdc={} lr={}",
            l.step, l.objective, l.breakdown.total, l.vdc, l.lr
        );
    }
}

fn predictor<'a>(ctx: &Context, st: &'a TrainState, use_flm: bool) -> StackPredictor<'a> {
    StackPredictor {
        stack: &st.stack,
        use_flm_input: use_flm,
        batch: ctx.config.eval.batch,
    }
}

/// Outcome of a `train` run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub stage1: Vec<StepLog>,
    pub stage2: Vec<StepLog>,
    /// Eval-split VDC and NME before stage 2 and after each of its epochs.
    pub stage2_eval: Vec<(u64, f64, f64)>,
}

pub fn train(
    ctx: &Context,
    stages: StageSelection,
    model: Option<&Path>,
    data: Option<&Path>,
    checkpoint: Option<&Path>,
) -> AppResult<TrainOutcome> {
    let cfg = &ctx.config.training;
    let (model, ds) = load_inputs(ctx, model, data)?;
    let td = TrainingData {
        annotated: &ds.annotated,
        wild: &ds.wild,
    };
    let mut st = if stages == StageSelection::Two {
        let ck = read_checkpoint(&ctx.or_default(checkpoint, STAGE1_CHECKPOINT))?;
        if ck.state.stack.config != cfg.network {
            return Err(AppError::config("training.network", "does not match the checkpoint's networks"));
        }
        ck.state
    } else {
        TrainState::new(cfg, model.layout(), &ds.annotated)?
    };
    let mut outcome = TrainOutcome {
        checkpoint: PathBuf::new(),
        stage1: Vec::new(),
        stage2: Vec::new(),
        stage2_eval: Vec::new(),
    };
    if stages != StageSelection::Two {
        info!("event=stage_start stage=1 variant_flags={:?}", cfg.flags);
        let logs = train_stage1_with(cfg, &model, &td, &mut st, &mut |_, epoch, st| {
            info!("event=epoch_done stage=1 epoch={epoch} steps={}", st.progress.stage1_steps);
            Ok(())
        })?;
        log_steps(1, &logs);
        write_atomic(&ctx.path("loss_stage1.csv"), &tables::loss_log_csv(&logs, false)?)?;
        if cfg.flags.use_self_critic {
            write_atomic(&ctx.path("critic_stage1.csv"), &tables::critic_log_csv(&logs)?)?;
        }
        outcome.checkpoint = ctx.path(STAGE1_CHECKPOINT);
        write_checkpoint(
            &outcome.checkpoint,
            &Checkpoint {
                training: cfg.clone(),
                state: st.clone(),
            },
        )?;
        outcome.stage1 = logs;
    }
    if stages != StageSelection::One {
        info!("event=stage_start stage=2");
        let use_flm = cfg.flags.use_flm_input;
        let measure = |st: &TrainState| -> facefit_core::Result<(f64, f64)> {
            let p = predictor(ctx, st, use_flm);
            Ok((mean_vertex_distance(&p, &model, &ds.eval)?, mean_landmark_nme(&p, &model, &ds.eval)?))
        };
        let (v0, n0) = measure(&st)?;
        let start_epoch = st.progress.stage2_epochs;
        let mut evals = vec![(start_epoch, v0, n0)];
        info!("event=eval stage=2 epoch={start_epoch} eval_vdc={v0} eval_nme={n0}");
        let logs = train_stage2_with(cfg, &model, &td, &mut st, &mut |_, epoch, st| {
            let (v, n) = measure(st)?;
            info!("event=eval stage=2 epoch={epoch} eval_vdc={v} eval_nme={n}");
            evals.push((epoch, v, n));
            Ok(())
        })?;
        log_steps(2, &logs);
        write_atomic(&ctx.path("loss_stage2.csv"), &tables::loss_log_csv(&logs, true)?)?;
        write_atomic(&ctx.path("stage2_eval.csv"), &tables::epoch_eval_csv(&evals)?)?;
        outcome.checkpoint = ctx.path(STAGE2_CHECKPOINT);
        write_checkpoint(
            &outcome.checkpoint,
            &Checkpoint {
                training: cfg.clone(),
                state: st,
            },
        )?;
        outcome.stage2 = logs;
        outcome.stage2_eval = evals;
    }
    Ok(outcome)
}

fn latest_checkpoint(ctx: &Context) -> PathBuf {
    let s2 = ctx.path(STAGE2_CHECKPOINT);
    if s2.exists() {
        s2
    } else {
        ctx.path(STAGE1_CHECKPOINT)
    }
}

pub fn eval(ctx: &Context, checkpoint: Option<&Path>, model: Option<&Path>, data: Option<&Path>) -> AppResult<PathBuf> {
    let (model, ds) = load_inputs(ctx, model, data)?;
    let ck_path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| latest_checkpoint(ctx));
    let ck = read_checkpoint(&ck_path)?;
    let opts = ctx.config.eval.options();
    let p = predictor(ctx, &ck.state, ck.training.flags.use_flm_input);
    let report = evaluate_checkpoint(&p, &model, &ds.eval, &opts)?;
    let path = ctx.path(REPORT_FILE);
    write_atomic(&path, &tables::report_csv(&report, opts.discard_worst)?)?;
    for (m, curve) in &report.edc {
        if let Some(c) = curve {
            write_atomic(&ctx.path(&format!("edc_{}.csv", m.name())), &tables::edc_csv(c)?)?;
        }
    }
    let o = &report.overall;
    info!(
        "event=eval_done checkpoint={} samples={} nme_2d_sparse={} nme_3d_sparse={} nme_2d_dense={} nme_3d_dense={} nme_reconstruction={}",
        ck_path.display(),
        o.count,
        o.means[0],
        o.means[1],
        o.means[2],
        o.means[3],
        o.means[4]
    );
    Ok(path)
}

pub fn ablate(ctx: &Context, model: Option<&Path>, data: Option<&Path>) -> AppResult<PathBuf> {
    let (model, ds) = load_inputs(ctx, model, data)?;
    let data = SyntheticData {
        annotated: ds.annotated,
        wild: ds.wild,
        wild_truth: Vec::new(),
        eval: ds.eval,
    };
    let cfg = ctx.config.ablation_config();
    let table = run_ablation_suite(&cfg, &model, &data, &mut |label, run| {
        let row = match label {
            RunLabel::Variant(r) => r.label(),
            RunLabel::Volume(f) => format!("wild {}%", 100.0 * f),
        };
        info!(
            "event=ablation_run row={row:?} seed={} stage1_nme={:?} stage2_nme={:?} error={:?}",
            run.seed, run.stage1_nme, run.stage2_nme, run.error
        );
    })?;
    let path = ctx.path("ablation.csv");
    write_atomic(&path, &tables::ablation_csv(&table)?)?;
    write_atomic(&ctx.path("ablation_runs.csv"), &tables::ablation_runs_csv(&table)?)?;
    Ok(path)
}

pub fn edc_export(ctx: &Context, report: Option<&Path>, metric: Metric) -> AppResult<PathBuf> {
    let report_path = ctx.or_default(report, REPORT_FILE);
    let records = tables::parse_report_records(&read_file(&report_path)?)?;
    let discard = ctx.config.eval.discard_worst;
    let values: Vec<f64> = records.iter().map(|r| r.get(metric)).collect();
    if values.len() <= discard {
        return Err(AppError::config(
            "eval.discard_worst",
            format!("{discard} leaves nothing of {} records", values.len()),
        ));
    }
    let curve = edc(&values, discard)?;
    let path = ctx.path(&format!("edc_{}.csv", metric.name()));
    write_atomic(&path, &tables::edc_csv(&curve)?)?;
    info!("event=edc_written path={} mean={} discarded={}", path.display(), curve.mean, curve.discarded);
    Ok(path)
}

/// The gradient-check tolerance on the maximum relative error.
pub const GRAD_CHECK_TOL: f64 = 1e-4;

/// Finite-difference check of every loss term through a freshly
/// initialized stack, on a handful of generated samples.
pub fn grad_check(ctx: &Context, trials: usize) -> AppResult<Vec<(LossTerm, GradCheckReport)>> {
    let cfg = &ctx.config;
    let model = generate_model(&cfg.model)?;
    let n = 4;
    let annotated = (0..n).map(|i| annotated_sample(&model, &cfg.data, i)).collect::<Result<Vec<_>, _>>()?;
    let wild = (0..n)
        .map(|i| wild_sample(&model, &cfg.data, i).map(|(s, _)| s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut stack = NetworkStack::new(cfg.training.network.clone(), model.layout(), cfg.training.seed)?;
    let (mean, std) = coefficient_stats(&annotated)?;
    stack.set_coefficient_stats(mean, std)?;
    let mask: WeightMask = cfg.training.active_mask();
    let idx: Vec<usize> = (0..n).collect();
    let setup = GradCheckSetup {
        model: &model,
        stack: &stack,
        data: TrainingData {
            annotated: &annotated,
            wild: &wild,
        },
        mask: &mask,
        annotated: &idx,
        wild: &idx,
        use_flm_input: cfg.training.flags.use_flm_input,
    };
    let mut r = rng::stream(cfg.training.seed, streams::GRAD_CHECK);
    let mut out = Vec::new();
    for term in LossTerm::ALL {
        let rep = check_loss_term(term, &setup, trials, &mut r)?;
        info!(
            "event=grad_check term={} max_rel_error={:e} index={} analytic={:e} numeric={:e}",
            term.name(),
            rep.max_rel_error,
            rep.worst_index,
            rep.analytic,
            rep.numeric
        );
        out.push((term, rep));
    }
    Ok(out)
}
