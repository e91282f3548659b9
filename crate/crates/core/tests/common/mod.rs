#![allow(dead_code)]

use facefit_core::model::synthetic::{generate_model, SyntheticModelConfig};
use facefit_core::model::MorphableModel;
use facefit_core::neural::NetworkConfig;
use facefit_core::synth::{generate_data, DataConfig, NoiseConfig, SyntheticData};
use facefit_core::train::{TrainingConfig, TrainingData};

pub fn small_model() -> MorphableModel {
    generate_model(&SyntheticModelConfig {
        n_vertices: 150,
        ..Default::default()
    })
    .unwrap()
}

pub fn small_data(model: &MorphableModel, noisy: bool) -> SyntheticData {
    let noise = if noisy { NoiseConfig::default() } else { NoiseConfig::NONE };
    generate_data(
        model,
        &DataConfig {
            n_annotated: 48,
            n_wild: 64,
            n_eval: 16,
            resolution: [64, 64],
            noise,
            eval_noise: noise,
            ..Default::default()
        },
    )
    .unwrap()
}

pub fn tiny_network() -> NetworkConfig {
    NetworkConfig {
        input_side: 8,
        channels: 2,
        regressor_hidden: vec![24],
        encoder_hidden: vec![12],
        latent: 6,
        critic_hidden: vec![24, 16],
    }
}

pub fn small_config() -> TrainingConfig {
    TrainingConfig {
        batch_size: 8,
        stage1_epochs: 1,
        stage2_epochs: 1,
        network: tiny_network(),
        ..Default::default()
    }
}

pub fn split(data: &SyntheticData) -> TrainingData<'_> {
    TrainingData {
        annotated: &data.annotated,
        wild: &data.wild,
    }
}
