use crate::error::{config_err, Result};
use crate::model::{project, CoefficientVector, MorphableModel};

use super::ValueGrad;

/// Vertex distance cost: mean over vertices of the squared distance between
/// the projected predicted and ground-truth shapes; gradient w.r.t. `pred`.
pub fn vertex_distance_cost(pred: &CoefficientVector, gt: &CoefficientVector, model: &MorphableModel) -> Result<ValueGrad> {
    if pred.layout() != gt.layout() {
        return Err(config_err!("prediction and ground truth have different coefficient layouts"));
    }
    let n = model.n_vertices() as f64;
    let shape = model.render_shape(pred)?;
    let vp = project(&shape, pred)?;
    let vg = model.vertices_2d(gt)?;
    let mut value = 0.0;
    let mut d = alloc::vec![0.0; vp.len()];
    for ((di, a), b) in d.iter_mut().zip(&vp).zip(&vg) {
        let e = a - b;
        value += e * e;
        *di = 2.0 * e / n;
    }
    let grad = model.vertices_2d_pullback(pred, &shape, &d)?;
    Ok(ValueGrad { value: value / n, grad })
}
