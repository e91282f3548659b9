use alloc::vec::Vec;

use super::terms::{annotated_term, wild_terms};
use super::TrainingConfig;
use crate::error::{config_err, Error, Result};
use crate::loss::{self_critic_losses, total_loss, vertex_distance_cost, LossBreakdown, LossParts, WeightMask};
use crate::model::{rasterize_flm, CoefficientLayout, CoefficientVector, MorphableModel};
use crate::neural::{clip_grad_norm, BackwardOptions, NetworkStack, OptimizerState};
use crate::rng::{self, streams};
use crate::synth::{build_input, coefficient_stats, Annotated3DSample, Wild2DSample};

/// Borrowed training splits. Wild samples carry no coefficients, so they
/// cannot reach the coefficient or vertex losses.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub annotated: &'a [Annotated3DSample],
    pub wild: &'a [Wild2DSample],
}

/// Completed epochs and steps per stage. Batch order is a pure function of
/// `(seed, stage, epoch)`, so these counters are the whole random state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Progress {
    pub stage1_epochs: u64,
    pub stage1_steps: u64,
    pub stage2_epochs: u64,
    pub stage2_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub seed: u64,
    pub stack: NetworkStack,
    pub regressor_opt: OptimizerState,
    pub critic_opt: OptimizerState,
    pub encoder_opt: OptimizerState,
    pub progress: Progress,
}

impl TrainState {
    /// Fresh networks; the regressor output scale comes from the annotated
    /// coefficient statistics.
    pub fn new(cfg: &TrainingConfig, layout: CoefficientLayout, annotated: &[Annotated3DSample]) -> Result<Self> {
        cfg.validate()?;
        let mut stack = NetworkStack::new(cfg.network.clone(), layout, cfg.seed)?;
        let (mean, std) = coefficient_stats(annotated)?;
        stack.set_coefficient_stats(mean, std)?;
        Ok(Self {
            seed: cfg.seed,
            regressor_opt: OptimizerState::new(cfg.regressor_optimizer(), stack.regressor.n_params()),
            critic_opt: OptimizerState::new(cfg.critic_optimizer(), stack.critic.n_params()),
            encoder_opt: OptimizerState::new(cfg.critic_optimizer(), stack.encoder.n_params()),
            stack,
            progress: Progress::default(),
        })
    }
}

/// One row of the loss history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub stage: u8,
    /// 1-based within the stage.
    pub step: u64,
    pub breakdown: LossBreakdown,
    /// Stage-2 vertex distance cost (0 in stage 1).
    pub vdc: f64,
    /// Value minimized by the regressor update.
    pub objective: f64,
    /// Critic objective and accuracy (NaN when no critic update ran).
    pub critic_loss: f64,
    pub critic_accuracy: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticReport {
    pub loss: f64,
    /// Fraction of real pairs scored > 0.5 and fake pairs scored < 0.5.
    pub accuracy: f64,
}

/// One critic + encoder update (Adam): real pairs are `(E(real_images),
/// real_coeffs)`, fake pairs `(E(fake_images), fake_coeffs)`, coefficients
/// in the stack's normalized form.
#[allow(clippy::too_many_arguments)]
pub fn critic_step(
    stack: &mut NetworkStack,
    critic_opt: &mut OptimizerState,
    encoder_opt: &mut OptimizerState,
    real_images: &[f64],
    real_coeffs: &[f64],
    fake_images: &[f64],
    fake_coeffs: &[f64],
    batch: usize,
) -> Result<CriticReport> {
    let zl = stack.config.latent;
    let cl = stack.layout.len();
    let tz_r = stack.encoder.forward(real_images, batch)?;
    let tz_f = stack.encoder.forward(fake_images, batch)?;
    let tr = stack.critic.forward(&stack.critic_input(tz_r.output(), real_coeffs, batch)?, batch)?;
    let tf = stack.critic.forward(&stack.critic_input(tz_f.output(), fake_coeffs, batch)?, batch)?;
    let (mut loss, mut hits) = (0.0, 0usize);
    let mut gr = alloc::vec![0.0; batch];
    let mut gf = alloc::vec![0.0; batch];
    let bf = batch as f64;
    for i in 0..batch {
        let (sr, sf) = (tr.output()[i], tf.output()[i]);
        let l = self_critic_losses(sr, sf);
        loss += l.critic_loss / bf;
        gr[i] = l.critic_grad_real_logit / bf;
        gf[i] = l.critic_grad_fake_logit / bf;
        hits += usize::from(sr > 0.5) + usize::from(sf < 0.5);
    }
    let opts = BackwardOptions {
        params: true,
        input: true,
        from_preactivation: true,
    };
    let br = stack.critic.backward_with(&tr, &gr, opts)?;
    let bfk = stack.critic.backward_with(&tf, &gf, opts)?;
    let latent_grad = |input: &[f64]| -> Vec<f64> {
        input.chunks_exact(zl + cl).flat_map(|row| row[..zl].iter().copied()).collect()
    };
    let enc_opts = BackwardOptions {
        params: true,
        input: false,
        from_preactivation: false,
    };
    let er = stack.encoder.backward_with(&tz_r, &latent_grad(&br.input), enc_opts)?;
    let ef = stack.encoder.backward_with(&tz_f, &latent_grad(&bfk.input), enc_opts)?;
    let cg: Vec<f64> = br.params.iter().zip(&bfk.params).map(|(a, b)| a + b).collect();
    let eg: Vec<f64> = er.params.iter().zip(&ef.params).map(|(a, b)| a + b).collect();
    critic_opt.step(&mut stack.critic, &cg)?;
    encoder_opt.step(&mut stack.encoder, &eg)?;
    Ok(CriticReport {
        loss,
        accuracy: hits as f64 / (2.0 * bf),
    })
}

pub(crate) fn annotated_inputs(data: &TrainingData<'_>, idx: &[usize], use_flm: bool, side: usize) -> Result<Vec<f64>> {
    let mut x = Vec::with_capacity(idx.len() * 2 * side * side);
    for &i in idx {
        let s = &data.annotated[i];
        build_input(&s.proxy, use_flm.then_some(&s.flm), side, &mut x)?;
    }
    Ok(x)
}

pub(crate) fn wild_inputs(data: &TrainingData<'_>, idx: &[usize], use_flm: bool, side: usize) -> Result<Vec<f64>> {
    let mut x = Vec::with_capacity(idx.len() * 2 * side * side);
    for &i in idx {
        let s = &data.wild[i];
        build_input(&s.proxy, use_flm.then_some(&s.flm), side, &mut x)?;
    }
    Ok(x)
}

/// Inputs for the cycle's backward pass: each wild proxy image paired with
/// the map rasterized from the forward prediction's landmarks.
pub(crate) fn cycle_inputs(
    model: &MorphableModel,
    data: &TrainingData<'_>,
    idx: &[usize],
    forward: &[CoefficientVector],
    use_flm: bool,
    side: usize,
) -> Result<Vec<f64>> {
    let mut x = Vec::with_capacity(idx.len() * 2 * side * side);
    for (&i, c) in idx.iter().zip(forward) {
        let s = &data.wild[i];
        let flm = rasterize_flm(&model.landmarks_2d(c)?, s.flm.resolution()).map;
        build_input(&s.proxy, use_flm.then_some(&flm), side, &mut x)?;
    }
    Ok(x)
}

fn check(v: f64, term: &'static str, step: u64, batch_seed: u64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss {
            step: step as usize,
            term,
            batch_seed,
        })
    }
}

/// Numeric failures inside a loss term surface as a non-finite loss.
fn in_term<T>(r: Result<T>, term: &'static str, step: u64, batch_seed: u64) -> Result<T> {
    r.map_err(|e| match e {
        Error::Numeric(_) => Error::NonFiniteLoss {
            step: step as usize,
            term,
            batch_seed,
        },
        other => other,
    })
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

struct StepPlan<'a> {
    annotated: &'a [usize],
    wild: &'a [usize],
    overall: bool,
    vdc: bool,
    stage: u8,
    step: u64,
    batch_seed: u64,
}

fn regressor_step(
    cfg: &TrainingConfig,
    model: &MorphableModel,
    data: &TrainingData<'_>,
    state: &mut TrainState,
    mask: &WeightMask,
    plan: &StepPlan<'_>,
) -> Result<StepLog> {
    let flags = cfg.flags;
    let side = cfg.network.input_side;
    let lam = cfg.lambdas;
    let (step, seed) = (plan.step, plan.batch_seed);
    let n_out = state.stack.layout.len();
    let ba = plan.annotated.len();
    let bw = plan.wild.len();
    let use_wild = plan.overall && flags.uses_wild() && bw > 0;

    let x_a = annotated_inputs(data, plan.annotated, flags.use_flm_input, side)?;
    let x_w = if use_wild {
        wild_inputs(data, plan.wild, flags.use_flm_input, side)?
    } else {
        Vec::new()
    };
    let tape_w = if use_wild {
        Some(state.stack.regressor.forward(&x_w, bw)?)
    } else {
        None
    };

    // critic first; it does not touch the regressor, so tape_w stays valid
    let (mut critic_loss, mut critic_accuracy) = (f64::NAN, f64::NAN);
    if use_wild && flags.use_self_critic {
        let tw = tape_w.as_ref().ok_or_else(|| config_err!("missing wild forward pass"))?;
        let real: Vec<f64> = plan
            .annotated
            .iter()
            .flat_map(|&i| state.stack.normalize(&data.annotated[i].gt_coeff))
            .collect();
        let fake = tw.output().to_vec();
        let rep = critic_step(
            &mut state.stack,
            &mut state.critic_opt,
            &mut state.encoder_opt,
            &x_a,
            &real,
            &x_w,
            &fake,
            ba.min(bw),
        )?;
        critic_loss = check(rep.loss, "critic", step, seed)?;
        critic_accuracy = rep.accuracy;
    }

    let mut parts = LossParts::default();
    let mut vdc = 0.0;
    let (coeff_a, tape_a) = state.stack.forward_regressor(&x_a, ba)?;
    let mut g_a = alloc::vec![0.0; ba * n_out];
    let fa = ba as f64;
    for (k, (&i, pred)) in plan.annotated.iter().zip(&coeff_a).enumerate() {
        let gt = &data.annotated[i].gt_coeff;
        let mut g = alloc::vec![0.0; n_out];
        if plan.overall {
            let (v, gr) = in_term(annotated_term(model, pred, gt), "l3d", step, seed)?;
            parts.l3d += v / fa;
            add_into(&mut g, &gr);
        }
        if plan.vdc {
            let r = in_term(vertex_distance_cost(pred, gt, model), "vdc", step, seed)?;
            vdc += r.value / fa;
            add_into(&mut g, &r.grad);
        }
        let go = state.stack.output_grad(&g);
        for (d, v) in g_a[k * n_out..(k + 1) * n_out].iter_mut().zip(go) {
            *d = v / fa;
        }
    }
    check(parts.l3d, "l3d", step, seed)?;
    check(vdc, "vdc", step, seed)?;

    let mut grad = alloc::vec![0.0; state.stack.regressor.n_params()];
    let popts = BackwardOptions {
        params: true,
        input: false,
        from_preactivation: false,
    };
    add_into(&mut grad, &state.stack.regressor.backward_with(&tape_a, &g_a, popts)?.params);

    if let Some(tw) = tape_w.as_ref() {
        let fw = bw as f64;
        let coeff_w = tw
            .output()
            .chunks_exact(n_out)
            .map(|o| state.stack.decode(o))
            .collect::<Result<Vec<_>>>()?;
        let mut g_w = alloc::vec![0.0; bw * n_out];
        if flags.use_cycle_losses {
            let x_c = in_term(cycle_inputs(model, data, plan.wild, &coeff_w, flags.use_flm_input, side), "lcyc", step, seed)?;
            let (coeff_c, tape_c) = state.stack.forward_regressor(&x_c, bw)?;
            let mut g_c = alloc::vec![0.0; bw * n_out];
            for (k, &i) in plan.wild.iter().enumerate() {
                let t = in_term(
                    wild_terms(
                        model,
                        &data.wild[i].noisy_landmarks,
                        &coeff_w[k],
                        &coeff_c[k],
                        mask,
                        (lam.l2d_con, lam.l3d_con, lam.cyc),
                    ),
                    "l2d_con",
                    step,
                    seed,
                )?;
                parts.l2d_con += t.l2d_con / fw;
                parts.l3d_con += t.l3d_con / fw;
                parts.lcyc += t.lcyc / fw;
                for (d, v) in g_w[k * n_out..(k + 1) * n_out].iter_mut().zip(state.stack.output_grad(&t.grad_forward)) {
                    *d += v / fw;
                }
                for (d, v) in g_c[k * n_out..(k + 1) * n_out].iter_mut().zip(state.stack.output_grad(&t.grad_backward)) {
                    *d += v / fw;
                }
            }
            check(parts.l2d_con, "l2d_con", step, seed)?;
            check(parts.l3d_con, "l3d_con", step, seed)?;
            check(parts.lcyc, "lcyc", step, seed)?;
            add_into(&mut grad, &state.stack.regressor.backward_with(&tape_c, &g_c, popts)?.params);
        }
        if flags.use_self_critic {
            // fresh critic pass with the just-updated critic and encoder
            let zl = state.stack.config.latent;
            let tz = state.stack.encoder.forward(&x_w, bw)?;
            let cin = state.stack.critic_input(tz.output(), tw.output(), bw)?;
            let tc = state.stack.critic.forward(&cin, bw)?;
            let mut gl = alloc::vec![0.0; bw];
            for k in 0..bw {
                let l = self_critic_losses(0.5, tc.output()[k]);
                parts.lsc += l.regressor_loss / fw;
                gl[k] = lam.sc * l.regressor_grad_fake_logit / fw;
            }
            check(parts.lsc, "lsc", step, seed)?;
            let gi = state.stack.critic.backward_with(
                &tc,
                &gl,
                BackwardOptions {
                    params: false,
                    input: true,
                    from_preactivation: true,
                },
            )?;
            for (k, row) in gi.input.chunks_exact(zl + n_out).enumerate() {
                for (d, v) in g_w[k * n_out..(k + 1) * n_out].iter_mut().zip(&row[zl..]) {
                    *d += v;
                }
            }
        }
        add_into(&mut grad, &state.stack.regressor.backward_with(tw, &g_w, popts)?.params);
    }

    let breakdown = total_loss(&parts, &lam);
    let total = check(breakdown.total, "total", step, seed)?;
    let gnorm = match cfg.grad_clip_norm {
        Some(c) => clip_grad_norm(&mut grad, c),
        None => crate::linalg::norm2(&grad),
    };
    check(gnorm, "gradient", step, seed)?;
    let lr = state.regressor_opt.current_lr();
    state.regressor_opt.step(&mut state.stack.regressor, &grad)?;
    let objective = if plan.overall { total } else { 0.0 } + vdc;
    Ok(StepLog {
        stage: plan.stage,
        step,
        breakdown,
        vdc,
        objective,
        critic_loss,
        critic_accuracy,
        lr,
    })
}

/// Permutation of `0..n` for one epoch.
fn epoch_order(seed: u64, stage: u8, epoch: u64, which: u64, n: usize) -> (Vec<usize>, u64) {
    let id = streams::TRAINING + ((stage as u64) << 32) + (epoch << 1) + which;
    let mut r = rng::stream(seed, id);
    let mut v: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut r, &mut v);
    (v, id)
}

fn take_batch(order: &[usize], step: usize, batch: usize) -> Vec<usize> {
    (0..batch).map(|k| order[(step * batch + k) % order.len()]).collect()
}

/// Called after every completed epoch with `(stage, epochs done in stage, state)`.
pub type EpochHook<'a> = dyn FnMut(u8, u64, &TrainState) -> Result<()> + 'a;

fn run_stage(
    cfg: &TrainingConfig,
    model: &MorphableModel,
    data: &TrainingData<'_>,
    state: &mut TrainState,
    stage: u8,
    hook: &mut EpochHook<'_>,
) -> Result<Vec<StepLog>> {
    cfg.validate()?;
    if data.annotated.is_empty() {
        return Err(config_err!("training needs annotated samples"));
    }
    let overall = stage == 1 || cfg.stage2_with_overall_loss;
    let wild_on = overall && cfg.flags.uses_wild();
    let n_wild = if wild_on { cfg.wild_count(data.wild.len()) } else { 0 };
    if wild_on && n_wild == 0 {
        return Err(config_err!("the selected variant needs wild samples"));
    }
    let b = cfg.batch_size;
    let n_a = data.annotated.len();
    // stage 1 epochs run over the wild set when it is in use
    let primary = if stage == 1 && wild_on { n_wild } else { n_a };
    let steps_per_epoch = primary.div_ceil(b);
    let epochs = if stage == 1 { cfg.stage1_epochs } else { cfg.stage2_epochs };
    let mask = cfg.active_mask();
    let mut logs = Vec::new();
    let mut stage_step: u64 = 0;
    for _ in 0..epochs {
        let epoch = if stage == 1 {
            state.progress.stage1_epochs
        } else {
            state.progress.stage2_epochs
        };
        let (order_a, id) = epoch_order(state.seed, stage, epoch, 0, n_a);
        let (order_w, _) = epoch_order(state.seed, stage, epoch, 1, n_wild);
        let mut completed = true;
        for j in 0..steps_per_epoch {
            if cfg.max_steps_per_stage.is_some_and(|m| stage_step >= m as u64) {
                completed = false;
                break;
            }
            stage_step += 1;
            let ai = take_batch(&order_a, j, b.min(n_a));
            let wi = if n_wild > 0 { take_batch(&order_w, j, b.min(n_wild)) } else { Vec::new() };
            let plan = StepPlan {
                annotated: &ai,
                wild: &wi,
                overall,
                vdc: stage == 2,
                stage,
                step: stage_step,
                batch_seed: id ^ ((j as u64) << 40),
            };
            logs.push(regressor_step(cfg, model, data, state, &mask, &plan)?);
            if stage == 1 {
                state.progress.stage1_steps += 1;
            } else {
                state.progress.stage2_steps += 1;
            }
        }
        if !completed {
            break;
        }
        state.regressor_opt.end_epoch();
        let done = if stage == 1 {
            state.progress.stage1_epochs += 1;
            state.progress.stage1_epochs
        } else {
            state.progress.stage2_epochs += 1;
            state.progress.stage2_epochs
        };
        hook(stage, done, state)?;
    }
    Ok(logs)
}

/// Stage 1: the overall loss on paired annotated and wild batches.
pub fn train_stage1(cfg: &TrainingConfig, model: &MorphableModel, data: &TrainingData<'_>, state: &mut TrainState) -> Result<Vec<StepLog>> {
    run_stage(cfg, model, data, state, 1, &mut |_, _, _| Ok(()))
}

pub fn train_stage1_with(
    cfg: &TrainingConfig,
    model: &MorphableModel,
    data: &TrainingData<'_>,
    state: &mut TrainState,
    hook: &mut EpochHook<'_>,
) -> Result<Vec<StepLog>> {
    run_stage(cfg, model, data, state, 1, hook)
}

/// Stage 2: vertex distance cost on annotated batches, continuing the
/// regressor's learning-rate schedule.
pub fn train_stage2(cfg: &TrainingConfig, model: &MorphableModel, data: &TrainingData<'_>, state: &mut TrainState) -> Result<Vec<StepLog>> {
    run_stage(cfg, model, data, state, 2, &mut |_, _, _| Ok(()))
}

pub fn train_stage2_with(
    cfg: &TrainingConfig,
    model: &MorphableModel,
    data: &TrainingData<'_>,
    state: &mut TrainState,
    hook: &mut EpochHook<'_>,
) -> Result<Vec<StepLog>> {
    run_stage(cfg, model, data, state, 2, hook)
}
