use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{corrupt_landmarks, render_proxy_image, sample_coefficients, NoiseConfig, ProxyImage, SamplingConfig};
use crate::error::{config_err, Result};
use crate::model::{rasterize_flm, CoefficientVector, FacialLandmarkMap, LandmarkSet, MorphableModel, DEFAULT_RESOLUTION};
use crate::rng::{self, streams};

/// Coefficient-annotated training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotated3DSample {
    pub proxy: ProxyImage,
    /// Rasterized from the clean ground-truth landmarks.
    pub flm: FacialLandmarkMap,
    pub gt_coeff: CoefficientVector,
    pub yaw_deg: f64,
}

/// Landmark-only training sample; carries no coefficient annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct Wild2DSample {
    pub proxy: ProxyImage,
    /// Rasterized from `noisy_landmarks`.
    pub flm: FacialLandmarkMap,
    pub noisy_landmarks: LandmarkSet,
}

/// Held-out sample: network input built from detector-style landmarks,
/// scored against the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSample {
    pub proxy: ProxyImage,
    pub flm: FacialLandmarkMap,
    pub detected_landmarks: LandmarkSet,
    pub gt_coeff: CoefficientVector,
    pub yaw_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub seed: u64,
    pub n_annotated: usize,
    pub n_wild: usize,
    pub n_eval: usize,
    pub resolution: [usize; 2],
    pub sampling: SamplingConfig,
    /// Noise on wild-sample landmarks.
    pub noise: NoiseConfig,
    /// Noise on the landmarks that build eval-sample inputs.
    pub eval_noise: NoiseConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_annotated: 2000,
            n_wild: 8000,
            n_eval: 500,
            resolution: [DEFAULT_RESOLUTION.0, DEFAULT_RESOLUTION.1],
            sampling: SamplingConfig::default(),
            noise: NoiseConfig::default(),
            eval_noise: NoiseConfig::default(),
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution[0] == 0 || self.resolution[1] == 0 {
            return Err(config_err!("data.resolution must be positive"));
        }
        self.sampling.validate()?;
        self.noise.validate()?;
        self.eval_noise.validate()
    }

    fn res(&self) -> (usize, usize) {
        (self.resolution[0], self.resolution[1])
    }
}

/// Everything generated from one [`DataConfig`]. `wild_truth` holds the
/// coefficients wild samples were rendered from; it exists for diagnostics
/// and oracle tests only and is never written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub annotated: Vec<Annotated3DSample>,
    pub wild: Vec<Wild2DSample>,
    pub wild_truth: Vec<CoefficientVector>,
    pub eval: Vec<EvalSample>,
}

pub fn annotated_sample(model: &MorphableModel, cfg: &DataConfig, index: usize) -> Result<Annotated3DSample> {
    let mut r = rng::stream(cfg.seed, streams::ANNOTATED + index as u64);
    let s = sample_coefficients(&mut r, &cfg.sampling, model.layout());
    let lm = model.landmarks_2d(&s.coeff)?;
    Ok(Annotated3DSample {
        proxy: render_proxy_image(model, &s.coeff, cfg.res())?,
        flm: rasterize_flm(&lm, cfg.res()).map,
        gt_coeff: s.coeff,
        yaw_deg: s.yaw_deg,
    })
}

pub fn wild_sample(model: &MorphableModel, cfg: &DataConfig, index: usize) -> Result<(Wild2DSample, CoefficientVector)> {
    let mut r = rng::stream(cfg.seed, streams::WILD + index as u64);
    let s = sample_coefficients(&mut r, &cfg.sampling, model.layout());
    let noisy = corrupt_landmarks(&model.landmarks_2d(&s.coeff)?, &mut r, &cfg.noise)?;
    let sample = Wild2DSample {
        proxy: render_proxy_image(model, &s.coeff, cfg.res())?,
        flm: rasterize_flm(&noisy, cfg.res()).map,
        noisy_landmarks: noisy,
    };
    Ok((sample, s.coeff))
}

pub fn eval_sample(model: &MorphableModel, cfg: &DataConfig, index: usize) -> Result<EvalSample> {
    let mut r = rng::stream(cfg.seed, streams::EVAL + index as u64);
    let s = sample_coefficients(&mut r, &cfg.sampling, model.layout());
    let detected = corrupt_landmarks(&model.landmarks_2d(&s.coeff)?, &mut r, &cfg.eval_noise)?;
    Ok(EvalSample {
        proxy: render_proxy_image(model, &s.coeff, cfg.res())?,
        flm: rasterize_flm(&detected, cfg.res()).map,
        detected_landmarks: detected,
        gt_coeff: s.coeff,
        yaw_deg: s.yaw_deg,
    })
}

/// Generates all three splits. Each sample draws from its own stream, so
/// the result is a pure function of `(model, cfg)`.
pub fn generate_data(model: &MorphableModel, cfg: &DataConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let annotated = (0..cfg.n_annotated)
        .map(|i| annotated_sample(model, cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let mut wild = Vec::with_capacity(cfg.n_wild);
    let mut wild_truth = Vec::with_capacity(cfg.n_wild);
    for i in 0..cfg.n_wild {
        let (s, t) = wild_sample(model, cfg, i)?;
        wild.push(s);
        wild_truth.push(t);
    }
    let eval = (0..cfg.n_eval).map(|i| eval_sample(model, cfg, i)).collect::<Result<Vec<_>>>()?;
    Ok(SyntheticData {
        annotated,
        wild,
        wild_truth,
        eval,
    })
}

/// Per-coefficient mean and (population) standard deviation.
pub fn coefficient_stats(samples: &[Annotated3DSample]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = samples
        .first()
        .ok_or_else(|| config_err!("coefficient statistics need at least one annotated sample"))?;
    let n = first.gt_coeff.len();
    let mut mean = alloc::vec![0.0; n];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s.gt_coeff.as_slice()) {
            *m += v;
        }
    }
    let k = samples.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    let mut var = alloc::vec![0.0; n];
    for s in samples {
        for ((q, v), m) in var.iter_mut().zip(s.gt_coeff.as_slice()).zip(&mean) {
            *q += (v - m) * (v - m);
        }
    }
    let std = var.into_iter().map(|q| libm::sqrt(q / k)).collect();
    Ok((mean, std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::synthetic::{generate_model, SyntheticModelConfig};

    fn small_cfg() -> DataConfig {
        DataConfig {
            n_annotated: 12,
            n_wild: 10,
            n_eval: 6,
            ..Default::default()
        }
    }

    #[test]
    fn annotated_flm_matches_ground_truth_rasterization() {
        let model = generate_model(&SyntheticModelConfig::default()).unwrap();
        let data = generate_data(&model, &small_cfg()).unwrap();
        for s in &data.annotated {
            let lm = crate::model::sparse_landmarks(
                &model,
                &crate::model::project(&model.render_shape(&s.gt_coeff).unwrap(), &s.gt_coeff).unwrap(),
            )
            .unwrap();
            assert_eq!(rasterize_flm(&lm, (120, 120)).map, s.flm);
        }
        for s in &data.wild {
            assert_eq!(rasterize_flm(&s.noisy_landmarks, (120, 120)).map, s.flm);
        }
    }

    #[test]
    fn generation_is_a_pure_function_of_config() {
        let model = generate_model(&SyntheticModelConfig::default()).unwrap();
        let a = generate_data(&model, &small_cfg()).unwrap();
        let b = generate_data(&model, &small_cfg()).unwrap();
        assert_eq!(a, b);
        let c = generate_data(&model, &DataConfig { seed: 8, ..small_cfg() }).unwrap();
        assert_ne!(a.annotated, c.annotated);
        // a prefix of a larger split is the smaller split
        let d = generate_data(&model, &DataConfig { n_wild: 20, ..small_cfg() }).unwrap();
        assert_eq!(&d.wild[..10], &a.wild[..]);
    }

    #[test]
    fn noise_free_wild_landmarks_are_exact() {
        let model = generate_model(&SyntheticModelConfig::default()).unwrap();
        let cfg = DataConfig {
            noise: NoiseConfig::NONE,
            ..small_cfg()
        };
        let data = generate_data(&model, &cfg).unwrap();
        for (s, t) in data.wild.iter().zip(&data.wild_truth) {
            assert_eq!(s.noisy_landmarks, model.landmarks_2d(t).unwrap());
        }
    }

    #[test]
    fn stats_of_constant_set() {
        let model = generate_model(&SyntheticModelConfig::default()).unwrap();
        let s = annotated_sample(&model, &small_cfg(), 0).unwrap();
        let (m, sd) = coefficient_stats(&[s.clone(), s.clone()]).unwrap();
        assert_eq!(m, s.gt_coeff.as_slice());
        assert!(sd.iter().all(|&v| v == 0.0));
        assert!(coefficient_stats(&[]).is_err());
    }
}
