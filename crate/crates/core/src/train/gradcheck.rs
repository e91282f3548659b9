//! Finite-difference checks of every loss term composed with the regressor
//! (and, for the self-critic term, the frozen critic and encoder).

use alloc::vec::Vec;

use rand_core::RngCore;

use super::trainer::{annotated_inputs, cycle_inputs, wild_inputs, TrainingData};
use crate::error::{config_err, Result};
use crate::loss::{
    cycle_loss, importance_weights, landmark_2d_consistency, landmark_3d_consistency, self_critic_losses,
    vertex_distance_cost, weighted_coeff_loss_with, WeightMask,
};
use crate::model::{CoefficientVector, MorphableModel};
use crate::neural::{grad_check, BackwardOptions, GradCheckReport, Mlp, NetworkStack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossTerm {
    Coefficient,
    Consistency2d,
    Consistency3d,
    Cycle,
    SelfCritic,
    VertexDistance,
}

impl LossTerm {
    pub const ALL: [LossTerm; 6] = [
        LossTerm::Coefficient,
        LossTerm::Consistency2d,
        LossTerm::Consistency3d,
        LossTerm::Cycle,
        LossTerm::SelfCritic,
        LossTerm::VertexDistance,
    ];

    /// Same names as the loss-log columns.
    pub fn name(self) -> &'static str {
        match self {
            LossTerm::Coefficient => "l3d",
            LossTerm::Consistency2d => "l2d_con",
            LossTerm::Consistency3d => "l3d_con",
            LossTerm::Cycle => "lcyc",
            LossTerm::SelfCritic => "lsc",
            LossTerm::VertexDistance => "vdc",
        }
    }
}

/// Everything a check needs; the networks are not modified.
pub struct GradCheckSetup<'a> {
    pub model: &'a MorphableModel,
    pub stack: &'a NetworkStack,
    pub data: TrainingData<'a>,
    pub mask: &'a WeightMask,
    pub annotated: &'a [usize],
    pub wild: &'a [usize],
    pub use_flm_input: bool,
}

type OutputLoss<'a> = dyn Fn(&[f64]) -> Result<(f64, Vec<f64>)> + 'a;

/// Mean loss over a batch as a function of the raw regressor output
/// (`batch * n_out` values), with its gradient.
struct Composed<'a> {
    inputs: Vec<f64>,
    batch: usize,
    loss: &'a OutputLoss<'a>,
}

fn value_and_grad(reg: &Mlp, c: &Composed<'_>) -> Result<(f64, Vec<f64>)> {
    let tape = reg.forward(&c.inputs, c.batch)?;
    let (v, g) = (c.loss)(tape.output())?;
    let grads = reg.backward_with(
        &tape,
        &g,
        BackwardOptions {
            params: true,
            input: false,
            from_preactivation: false,
        },
    )?;
    Ok((v, grads.params))
}

fn check_composed<R: RngCore + ?Sized>(reg: &Mlp, c: &Composed<'_>, trials: usize, r: &mut R) -> Result<GradCheckReport> {
    let (_, analytic) = value_and_grad(reg, c)?;
    let mut probe = reg.clone();
    let f = |p: &[f64]| -> f64 {
        probe.params_mut().copy_from_slice(p);
        probe
            .forward(&c.inputs, c.batch)
            .and_then(|t| (c.loss)(t.output()))
            .map_or(f64::NAN, |(v, _)| v)
    };
    grad_check(f, reg.params(), &analytic, trials, r)
}

fn decode_all(stack: &NetworkStack, out: &[f64]) -> Result<Vec<CoefficientVector>> {
    out.chunks_exact(stack.layout.len()).map(|o| stack.decode(o)).collect()
}

/// Checks one term with `trials` random regressor coordinates.
pub fn check_loss_term<R: RngCore + ?Sized>(
    term: LossTerm,
    setup: &GradCheckSetup<'_>,
    trials: usize,
    r: &mut R,
) -> Result<GradCheckReport> {
    let s = setup;
    let stack = s.stack;
    let model = s.model;
    let side = stack.config.input_side;
    let n_out = stack.layout.len();
    let (ba, bw) = (s.annotated.len(), s.wild.len());
    let needs_wild = !matches!(term, LossTerm::Coefficient | LossTerm::VertexDistance);
    if (needs_wild && bw == 0) || (!needs_wild && ba == 0) {
        return Err(config_err!("gradient check of {} needs samples", term.name()));
    }
    let gt: Vec<&CoefficientVector> = s.annotated.iter().map(|&i| &s.data.annotated[i].gt_coeff).collect();
    let x: Vec<_> = s.wild.iter().map(|&i| &s.data.wild[i].noisy_landmarks).collect();

    // per-sample loss on decoded coefficients, scattered back to raw outputs
    let per_coeff = |coeffs: Vec<CoefficientVector>, f: &dyn Fn(usize, &[CoefficientVector]) -> Result<(f64, Vec<Vec<f64>>)>, n: usize| {
        let mut value = 0.0;
        let mut grad = alloc::vec![0.0; coeffs.len() * n_out];
        for k in 0..n {
            let (v, gs) = f(k, &coeffs)?;
            value += v / n as f64;
            for (slot, g) in gs.into_iter().enumerate() {
                let row = slot * n + k;
                for (d, v) in grad[row * n_out..(row + 1) * n_out].iter_mut().zip(stack.output_grad(&g)) {
                    *d += v / n as f64;
                }
            }
        }
        Ok::<_, crate::Error>((value, grad))
    };

    let report = match term {
        LossTerm::Coefficient => {
            let inputs = annotated_inputs(&s.data, s.annotated, s.use_flm_input, side)?;
            let (pred0, _) = stack.forward_regressor(&inputs, ba)?;
            // importance weights are treated as constants
            let weights = pred0
                .iter()
                .zip(&gt)
                .map(|(p, g)| importance_weights(p, g, model))
                .collect::<Result<Vec<_>>>()?;
            let loss = |out: &[f64]| {
                per_coeff(
                    decode_all(stack, out)?,
                    &|k, c| {
                        let l = weighted_coeff_loss_with(&weights[k], &c[k], gt[k])?;
                        Ok((l.value, alloc::vec![l.grad]))
                    },
                    ba,
                )
            };
            check_composed(&stack.regressor, &Composed { inputs, batch: ba, loss: &loss }, trials, r)?
        }
        LossTerm::VertexDistance => {
            let inputs = annotated_inputs(&s.data, s.annotated, s.use_flm_input, side)?;
            let loss = |out: &[f64]| {
                per_coeff(
                    decode_all(stack, out)?,
                    &|k, c| {
                        let l = vertex_distance_cost(&c[k], gt[k], model)?;
                        Ok((l.value, alloc::vec![l.grad]))
                    },
                    ba,
                )
            };
            check_composed(&stack.regressor, &Composed { inputs, batch: ba, loss: &loss }, trials, r)?
        }
        LossTerm::Consistency2d => {
            let inputs = wild_inputs(&s.data, s.wild, s.use_flm_input, side)?;
            let loss = |out: &[f64]| {
                per_coeff(
                    decode_all(stack, out)?,
                    &|k, c| {
                        let l = landmark_2d_consistency(x[k], &model.landmarks_2d(&c[k])?, s.mask)?;
                        Ok((l.value, alloc::vec![model.landmark_pullback(&c[k], &l.grad_second, 2)?]))
                    },
                    bw,
                )
            };
            check_composed(&stack.regressor, &Composed { inputs, batch: bw, loss: &loss }, trials, r)?
        }
        LossTerm::Consistency3d | LossTerm::Cycle => {
            // forward rows then backward rows; the rasterized maps of the
            // backward inputs are fixed at the base point
            let mut inputs = wild_inputs(&s.data, s.wild, s.use_flm_input, side)?;
            let (fwd0, _) = stack.forward_regressor(&inputs, bw)?;
            inputs.extend(cycle_inputs(model, &s.data, s.wild, &fwd0, s.use_flm_input, side)?);
            let cyc = term == LossTerm::Cycle;
            let loss = |out: &[f64]| {
                per_coeff(
                    decode_all(stack, out)?,
                    &|k, c| {
                        let (f, b) = (&c[k], &c[bw + k]);
                        if cyc {
                            let l = cycle_loss(x[k], &model.landmarks_2d(b)?, s.mask)?;
                            let gb = model.landmark_pullback(b, &l.grad_second, 2)?;
                            Ok((l.value, alloc::vec![alloc::vec![0.0; n_out], gb]))
                        } else {
                            let l = landmark_3d_consistency(&model.landmarks_3d(f)?, &model.landmarks_3d(b)?)?;
                            let gf = model.landmark_pullback(f, &l.grad_first, 3)?;
                            let gb = model.landmark_pullback(b, &l.grad_second, 3)?;
                            Ok((l.value, alloc::vec![gf, gb]))
                        }
                    },
                    bw,
                )
            };
            check_composed(&stack.regressor, &Composed { inputs, batch: 2 * bw, loss: &loss }, trials, r)?
        }
        LossTerm::SelfCritic => {
            let inputs = wild_inputs(&s.data, s.wild, s.use_flm_input, side)?;
            let latents = stack.encoder.forward(&inputs, bw)?.output().to_vec();
            let zl = stack.config.latent;
            let loss = |out: &[f64]| {
                let cin = stack.critic_input(&latents, out, bw)?;
                let tc = stack.critic.forward(&cin, bw)?;
                let mut value = 0.0;
                let mut gl = alloc::vec![0.0; bw];
                for k in 0..bw {
                    let l = self_critic_losses(0.5, tc.output()[k]);
                    value += l.regressor_loss / bw as f64;
                    gl[k] = l.regressor_grad_fake_logit / bw as f64;
                }
                let gi = stack.critic.backward_with(
                    &tc,
                    &gl,
                    BackwardOptions {
                        params: false,
                        input: true,
                        from_preactivation: true,
                    },
                )?;
                let grad = gi.input.chunks_exact(zl + n_out).flat_map(|row| row[zl..].iter().copied()).collect();
                Ok((value, grad))
            };
            check_composed(&stack.regressor, &Composed { inputs, batch: bw, loss: &loss }, trials, r)?
        }
    };
    Ok(report)
}
