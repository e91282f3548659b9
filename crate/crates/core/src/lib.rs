//! Self-supervised 3D morphable face model fitting at desk scale.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece:
//!
//! - [`model`]: the linear morphable model, the 62-element coefficient
//!   layout, scaled orthographic projection, landmark gathering and
//!   facial-landmark-map rasterization.
//! - [`loss`]: weighted coefficient loss, 2D/3D landmark consistency, cycle
//!   loss, self-critic losses, vertex distance cost, each with analytic
//!   gradients.
//! - [`neural`]: dense networks with a reverse-mode tape, SGD/Adam and a
//!   finite-difference gradient checker.
//! - [`synth`]: synthetic annotated and in-the-wild samples.
//! - [`train`]: the two-stage training loop and the ablation suite.
//! - [`eval`]: NME, error distribution curves, ICP and checkpoint reports.
//!
//! File formats, configuration files and the command line live in the
//! companion `facefit` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod eval;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod neural;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use model::{
    CoefficientLayout, CoefficientVector, FacialLandmarkMap, LandmarkSet, MorphableModel,
    LANDMARK_COUNT,
};
