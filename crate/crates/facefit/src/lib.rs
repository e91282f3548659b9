//! File formats, configuration, CSV reporting and the command-line front
//! end for `facefit-core`.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset_file;
pub mod error;
pub mod io;
pub mod model_file;
pub mod tables;
