//! Per-sample loss terms with gradients w.r.t. predicted coefficients,
//! shared by the training step and the oracle probes.

use alloc::vec::Vec;

use crate::error::Result;
use crate::loss::{cycle_loss, landmark_2d_consistency, landmark_3d_consistency, weighted_coeff_loss, WeightMask};
use crate::model::{CoefficientVector, LandmarkSet, MorphableModel};

/// Weighted coefficient loss on one annotated sample.
pub fn annotated_term(model: &MorphableModel, pred: &CoefficientVector, gt: &CoefficientVector) -> Result<(f64, Vec<f64>)> {
    let r = weighted_coeff_loss(pred, gt, model)?;
    Ok((r.value, r.grad))
}

/// Landmark terms of one wild sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WildSampleTerms {
    pub l2d_con: f64,
    pub l3d_con: f64,
    pub lcyc: f64,
    /// Gradient w.r.t. the forward-pass coefficients (lambda-weighted).
    pub grad_forward: Vec<f64>,
    /// Gradient w.r.t. the backward-pass coefficients (lambda-weighted).
    pub grad_backward: Vec<f64>,
}

/// `forward` is predicted from the noisy input landmarks `x`; `backward`
/// is re-predicted from the map rasterized from `forward`'s own landmarks.
pub fn wild_terms(
    model: &MorphableModel,
    x: &LandmarkSet,
    forward: &CoefficientVector,
    backward: &CoefficientVector,
    mask: &WeightMask,
    weights: (f64, f64, f64),
) -> Result<WildSampleTerms> {
    let (w2d, w3d, wcyc) = weights;
    let n = forward.len();
    let mut gf = alloc::vec![0.0; n];
    let mut gb = alloc::vec![0.0; n];

    let y2d = model.landmarks_2d(forward)?;
    let con2 = landmark_2d_consistency(x, &y2d, mask)?;
    if w2d != 0.0 {
        let g = model.landmark_pullback(forward, &con2.grad_second, 2)?;
        crate::linalg::axpy(w2d, &g, &mut gf);
    }

    let x3d = model.landmarks_3d(forward)?;
    let xh3d = model.landmarks_3d(backward)?;
    let con3 = landmark_3d_consistency(&x3d, &xh3d)?;
    if w3d != 0.0 {
        let g1 = model.landmark_pullback(forward, &con3.grad_first, 3)?;
        crate::linalg::axpy(w3d, &g1, &mut gf);
        let g2 = model.landmark_pullback(backward, &con3.grad_second, 3)?;
        crate::linalg::axpy(w3d, &g2, &mut gb);
    }

    let xh2d = model.landmarks_2d(backward)?;
    let cyc = cycle_loss(x, &xh2d, mask)?;
    if wcyc != 0.0 {
        let g = model.landmark_pullback(backward, &cyc.grad_second, 2)?;
        crate::linalg::axpy(wcyc, &g, &mut gb);
    }

    Ok(WildSampleTerms {
        l2d_con: con2.value,
        l3d_con: con3.value,
        lcyc: cyc.value,
        grad_forward: gf,
        grad_backward: gb,
    })
}
