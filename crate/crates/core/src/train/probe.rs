//! Loss evaluation without gradients through the same per-sample terms the
//! trainer uses, driven by any coefficient predictor.

use alloc::vec::Vec;

use super::terms::{annotated_term, wild_terms};
use super::trainer::{annotated_inputs, cycle_inputs, wild_inputs, TrainingData};
use super::TrainingConfig;
use crate::error::{config_err, Result};
use crate::loss::{total_loss, LossBreakdown, LossParts};
use crate::model::{CoefficientVector, MorphableModel};
use crate::neural::NetworkStack;

/// Which pass of the training step a batch belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Annotated,
    Wild,
    Cycle,
}

/// A batch coefficient predictor. `indices` are sample indices into the
/// pass's split; `inputs` the flattened network inputs for them.
pub trait BatchRegressor {
    fn predict(&self, pass: Pass, indices: &[usize], inputs: &[f64]) -> Result<Vec<CoefficientVector>>;
}

impl BatchRegressor for NetworkStack {
    fn predict(&self, _pass: Pass, indices: &[usize], inputs: &[f64]) -> Result<Vec<CoefficientVector>> {
        Ok(self.forward_regressor(inputs, indices.len())?.0)
    }
}

/// Answers every pass with the true coefficients of the underlying face.
pub struct OracleRegressor<'a> {
    pub annotated: &'a [CoefficientVector],
    pub wild: &'a [CoefficientVector],
}

impl BatchRegressor for OracleRegressor<'_> {
    fn predict(&self, pass: Pass, indices: &[usize], _inputs: &[f64]) -> Result<Vec<CoefficientVector>> {
        let src = match pass {
            Pass::Annotated => self.annotated,
            Pass::Wild | Pass::Cycle => self.wild,
        };
        indices
            .iter()
            .map(|&i| src.get(i).cloned().ok_or_else(|| config_err!("oracle has no sample {i}")))
            .collect()
    }
}

/// Stage-1 loss terms (batch means) on the given batches. The critic term
/// is not evaluated here and stays 0.
pub fn probe_losses<R: BatchRegressor + ?Sized>(
    cfg: &TrainingConfig,
    model: &MorphableModel,
    data: &TrainingData<'_>,
    regressor: &R,
    annotated: &[usize],
    wild: &[usize],
) -> Result<LossBreakdown> {
    let side = cfg.network.input_side;
    let flm = cfg.flags.use_flm_input;
    let mask = cfg.active_mask();
    let lam = cfg.lambdas;
    let mut parts = LossParts::default();
    if !annotated.is_empty() {
        let x = annotated_inputs(data, annotated, flm, side)?;
        let pred = regressor.predict(Pass::Annotated, annotated, &x)?;
        for (&i, p) in annotated.iter().zip(&pred) {
            parts.l3d += annotated_term(model, p, &data.annotated[i].gt_coeff)?.0 / annotated.len() as f64;
        }
    }
    if cfg.flags.use_cycle_losses && !wild.is_empty() {
        let x = wild_inputs(data, wild, flm, side)?;
        let fwd = regressor.predict(Pass::Wild, wild, &x)?;
        let xc = cycle_inputs(model, data, wild, &fwd, flm, side)?;
        let bwd = regressor.predict(Pass::Cycle, wild, &xc)?;
        let n = wild.len() as f64;
        for (k, &i) in wild.iter().enumerate() {
            let t = wild_terms(model, &data.wild[i].noisy_landmarks, &fwd[k], &bwd[k], &mask, (0.0, 0.0, 0.0))?;
            parts.l2d_con += t.l2d_con / n;
            parts.l3d_con += t.l3d_con / n;
            parts.lcyc += t.lcyc / n;
        }
    }
    Ok(total_loss(&parts, &lam))
}
