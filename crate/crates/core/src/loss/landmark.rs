use crate::error::{config_err, Result};
use crate::model::{LandmarkSet, LANDMARK_COUNT};

use super::{PairGrad, WeightMask};

#[inline]
fn unit_diff(a: &[f64; 3], b: &[f64; 3]) -> (f64, [f64; 3]) {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let n = crate::linalg::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    if n == 0.0 {
        // subgradient 0 at coincident points
        (0.0, [0.0; 3])
    } else {
        (n, [d[0] / n, d[1] / n, d[2] / n])
    }
}

/// `sum_i v_i * ||x_i - y_i||` over the 18 mask points.
pub fn landmark_2d_consistency(x: &LandmarkSet, y: &LandmarkSet, mask: &WeightMask) -> Result<PairGrad> {
    if x.dim() != 2 || y.dim() != 2 {
        return Err(config_err!("2D consistency needs 2D landmarks, got {}D and {}D", x.dim(), y.dim()));
    }
    let mut out = PairGrad::zeros(2 * LANDMARK_COUNT);
    for e in mask.entries() {
        let (a, b) = (e.selector.resolve(x), e.selector.resolve(y));
        let (dist, u) = unit_diff(&a, &b);
        out.value += e.weight * dist;
        let g = [e.weight * u[0], e.weight * u[1]];
        e.selector.scatter(&g, 2, &mut out.grad_first);
        e.selector.scatter(&[-g[0], -g[1]], 2, &mut out.grad_second);
    }
    Ok(out)
}

/// `sum_{i<68} ||forward_i - backward_i||` over 3D landmarks.
pub fn landmark_3d_consistency(forward: &LandmarkSet, backward: &LandmarkSet) -> Result<PairGrad> {
    if forward.dim() != 3 || backward.dim() != 3 {
        return Err(config_err!("3D consistency needs 3D landmarks"));
    }
    let mut out = PairGrad::zeros(3 * LANDMARK_COUNT);
    for i in 0..LANDMARK_COUNT {
        let (p, q) = (forward.point(i), backward.point(i));
        let (dist, u) = unit_diff(&[p[0], p[1], p[2]], &[q[0], q[1], q[2]]);
        out.value += dist;
        for c in 0..3 {
            out.grad_first[3 * i + c] = u[c];
            out.grad_second[3 * i + c] = -u[c];
        }
    }
    Ok(out)
}

/// Cycle loss: the 2D consistency between the input landmarks and the
/// landmarks recovered after mapping forward and back.
pub fn cycle_loss(x_input: &LandmarkSet, x_recovered: &LandmarkSet, mask: &WeightMask) -> Result<PairGrad> {
    landmark_2d_consistency(x_input, x_recovered, mask)
}
