//! Synthetic stand-ins for coefficient-annotated and landmark-only face
//! datasets.

mod dataset;
mod image;
mod sampling;

pub use dataset::{
    annotated_sample, coefficient_stats, eval_sample, generate_data, wild_sample, Annotated3DSample, DataConfig,
    EvalSample, SyntheticData, Wild2DSample,
};
pub use image::{build_input, render_proxy_image, ProxyImage};
pub use sampling::{corrupt_landmarks, sample_coefficients, NoiseConfig, SampledPose, SamplingConfig, YawBucket};
