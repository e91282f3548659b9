use alloc::vec::Vec;

use crate::error::{config_err, Result};
use crate::model::{Camera, CoefficientLayout, CoefficientVector, MorphableModel};

use super::ValueGrad;

fn check_pair(pred: &CoefficientVector, gt: &CoefficientVector) -> Result<()> {
    if pred.layout() != gt.layout() {
        return Err(config_err!("prediction and ground truth have different coefficient layouts"));
    }
    Ok(())
}

/// Per-coefficient importance: how far the projected landmarks move when
/// only coefficient `i` is taken from `pred` and the rest from `gt`,
/// normalized to sum to one (uniform when nothing moves).
pub fn importance_weights(pred: &CoefficientVector, gt: &CoefficientVector, model: &MorphableModel) -> Result<Vec<f64>> {
    check_pair(pred, gt)?;
    let n = gt.len();
    let base = model.landmarks_2d(gt)?;
    let mut raw = alloc::vec![0.0; n];

    // camera entries: re-project with the hybrid camera
    for (i, r) in raw.iter_mut().enumerate().take(CoefficientLayout::CAMERA_LEN) {
        if pred.as_slice()[i] == gt.as_slice()[i] {
            continue;
        }
        let mut hybrid = gt.clone();
        hybrid.as_mut_slice()[i] = pred.as_slice()[i];
        let moved = model.landmarks_2d(&hybrid)?;
        *r = crate::linalg::sqrt(
            moved
                .as_slice()
                .iter()
                .zip(base.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
        );
    }

    // basis entries: the landmarks move by delta * f * Pr * Pi * column
    let cam = Camera::of(gt)?;
    for i in CoefficientLayout::CAMERA_LEN..n {
        let delta = pred.as_slice()[i] - gt.as_slice()[i];
        if delta == 0.0 {
            continue;
        }
        let column = model.landmark_column(i - CoefficientLayout::CAMERA_LEN);
        let mut acc = 0.0;
        for d in column.chunks_exact(3) {
            let r = crate::linalg::mat3_vec(&cam.pi, &[d[0], d[1], d[2]]);
            let (dx, dy) = (cam.f * delta * r[0], cam.f * delta * r[1]);
            acc += dx * dx + dy * dy;
        }
        raw[i] = crate::linalg::sqrt(acc);
    }

    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        return Ok(alloc::vec![1.0 / n as f64; n]);
    }
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// `sum_i w_i (gt_i - pred_i)^2` with fixed weights; gradient w.r.t. `pred`.
pub fn weighted_coeff_loss_with(weights: &[f64], pred: &CoefficientVector, gt: &CoefficientVector) -> Result<ValueGrad> {
    check_pair(pred, gt)?;
    if weights.len() != pred.len() {
        return Err(config_err!("{} weights for {} coefficients", weights.len(), pred.len()));
    }
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for ((w, p), g) in weights.iter().zip(pred.as_slice()).zip(gt.as_slice()) {
        let d = g - p;
        value += w * d * d;
        grad.push(-2.0 * w * d);
    }
    Ok(ValueGrad { value, grad })
}

/// Weighted coefficient loss with importance weights computed from the
/// current prediction and held constant for the gradient.
pub fn weighted_coeff_loss(pred: &CoefficientVector, gt: &CoefficientVector, model: &MorphableModel) -> Result<ValueGrad> {
    let w = importance_weights(pred, gt, model)?;
    weighted_coeff_loss_with(&w, pred, gt)
}
