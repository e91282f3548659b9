use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::rng;

pub const FD_STEP: f64 = 1e-6;

/// Worst coordinate found by [`grad_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub trials: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`. The floor scales with the loss value so
/// that coordinates whose gradient is at the level of finite-difference
/// round-off do not dominate the report.
pub fn relative_error(analytic: f64, numeric: f64, loss_value: f64) -> f64 {
    let floor = 1e-5 * loss_value.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against central differences of `f` on `trials`
/// coordinates sampled uniformly with replacement.
pub fn grad_check<F, R>(mut f: F, params: &[f64], analytic: &[f64], trials: usize, r: &mut R) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
    R: RngCore + ?Sized,
{
    if params.len() != analytic.len() || params.is_empty() {
        return Err(Error::Config(alloc::format!(
            "{} parameters but {} gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    let f0 = f(params);
    if !f0.is_finite() {
        return Err(Error::Numeric(alloc::format!("loss is {f0} at the base point")));
    }
    let mut x: Vec<f64> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: analytic[0],
        numeric: f64::NAN,
        trials,
    };
    for _ in 0..trials {
        let i = rng::below(r, params.len());
        x[i] = params[i] + FD_STEP;
        let up = f(&x);
        x[i] = params[i] - FD_STEP;
        let down = f(&x);
        x[i] = params[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(alloc::format!("non-finite loss when perturbing coordinate {i}")));
        }
        let num = (up - down) / (2.0 * FD_STEP);
        let e = relative_error(analytic[i], num, f0);
        if e > report.max_rel_error || report.numeric.is_nan() {
            report = GradCheckReport {
                max_rel_error: e,
                worst_index: i,
                analytic: analytic[i],
                numeric: num,
                trials,
            };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v * v).sum()
    }

    fn quadratic_grad(x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(i, v)| 2.0 * (i as f64 + 1.0) * v).collect()
    }

    #[test]
    fn exact_gradient_of_quadratic() {
        let x = [0.5, -1.2, 2.0, 0.7];
        let rep = grad_check(quadratic, &x, &quadratic_grad(&x), 50, &mut rng::stream(1, 0)).unwrap();
        assert!(rep.max_rel_error < 1e-9, "{rep:?}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let x = [0.5, -1.2, 2.0, 0.7];
        let g: Vec<f64> = quadratic_grad(&x).iter().map(|v| v * 1.1).collect();
        let rep = grad_check(quadratic, &x, &g, 20, &mut rng::stream(2, 0)).unwrap();
        assert!(rep.max_rel_error > 1e-2);
    }

    #[test]
    fn non_finite_loss_names_coordinate() {
        let f = |x: &[f64]| if x[2] > 1.0 { f64::NAN } else { x[2] };
        let err = grad_check(f, &[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0], 200, &mut rng::stream(3, 0)).unwrap_err();
        match err {
            Error::Numeric(m) => assert!(m.contains("coordinate 2"), "{m}"),
            e => panic!("{e:?}"),
        }
    }
}
