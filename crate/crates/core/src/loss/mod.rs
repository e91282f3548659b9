//! Training losses with analytic gradients.
//!
//! Coefficient-level losses return gradients w.r.t. the predicted
//! coefficients; landmark-level losses return gradients w.r.t. both landmark
//! sets, which callers pull back through the camera with
//! [`MorphableModel::landmark_pullback`](crate::model::MorphableModel::landmark_pullback).

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

mod coefficient;
mod critic;
mod landmark;
mod mask;
mod vdc;

pub use coefficient::{importance_weights, weighted_coeff_loss, weighted_coeff_loss_with};
pub use critic::{self_critic_losses, sigmoid, SelfCriticLosses, SCORE_EPS};
pub use landmark::{cycle_loss, landmark_2d_consistency, landmark_3d_consistency};
pub use mask::{LandmarkSelector, MaskEntry, WeightMask, MASK_SIZE};
pub use vdc::vertex_distance_cost;

/// A scalar loss and its gradient w.r.t. one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// A scalar loss comparing two inputs, with the gradient w.r.t. each.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrad {
    pub value: f64,
    pub grad_first: Vec<f64>,
    pub grad_second: Vec<f64>,
}

impl PairGrad {
    pub(crate) fn zeros(n: usize) -> Self {
        Self {
            value: 0.0,
            grad_first: alloc::vec![0.0; n],
            grad_second: alloc::vec![0.0; n],
        }
    }
}

/// Weights of the four self-supervised terms in the overall loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lambdas {
    pub l2d_con: f64,
    pub l3d_con: f64,
    pub cyc: f64,
    pub sc: f64,
}

impl Default for Lambdas {
    fn default() -> Self {
        Self {
            l2d_con: 0.005,
            l3d_con: 0.005,
            cyc: 1.0,
            sc: 0.005,
        }
    }
}

/// Unweighted loss terms of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub l3d: f64,
    pub l2d_con: f64,
    pub l3d_con: f64,
    pub lcyc: f64,
    pub lsc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l3d: f64,
    pub l2d_con: f64,
    pub l3d_con: f64,
    pub lcyc: f64,
    pub lsc: f64,
    pub total: f64,
    pub lambdas: Lambdas,
}

impl LossBreakdown {
    /// Recomputes the weighted sum from the stored parts.
    pub fn recomputed_total(&self) -> f64 {
        let l = &self.lambdas;
        self.l3d + l.l2d_con * self.l2d_con + l.l3d_con * self.l3d_con + l.cyc * self.lcyc + l.sc * self.lsc
    }

    /// First non-finite term, by name.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("l3d", self.l3d),
            ("l2d_con", self.l2d_con),
            ("l3d_con", self.l3d_con),
            ("lcyc", self.lcyc),
            ("lsc", self.lsc),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// `L = L_3d + l1 L_2d-con + l2 L_3d-con + l3 L_cyc + l4 L_sc`.
pub fn total_loss(parts: &LossParts, lambdas: &Lambdas) -> LossBreakdown {
    let mut b = LossBreakdown {
        l3d: parts.l3d,
        l2d_con: parts.l2d_con,
        l3d_con: parts.l3d_con,
        lcyc: parts.lcyc,
        lsc: parts.lsc,
        total: 0.0,
        lambdas: *lambdas,
    };
    b.total = b.recomputed_total();
    b
}
