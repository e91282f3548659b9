//! Hand-differentiated dense networks, optimizers and a finite-difference
//! gradient checker.

mod gradcheck;
mod mlp;
mod optim;
mod stack;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, FD_STEP};
pub use mlp::{Activation, BackwardOptions, Gradients, LayerShape, Mlp, Tape};
pub use optim::{clip_grad_norm, OptimizerKind, OptimizerState};
pub use stack::{NetworkConfig, NetworkStack};
