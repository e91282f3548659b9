use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::linalg::rotation_from_euler;
use crate::model::{CoefficientLayout, CoefficientVector, LandmarkSet};
use crate::rng;

/// Ground-truth coefficient distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub shape_sigma: f64,
    pub expr_sigma: f64,
    /// `|yaw|` is uniform in this range (degrees); the sign is random.
    pub yaw_range_deg: [f64; 2],
    pub pitch_max_deg: f64,
    pub roll_max_deg: f64,
    pub scale_range: [f64; 2],
    pub center: [f64; 2],
    /// Translation is `center` plus a uniform offset in `±translation_jitter`.
    pub translation_jitter: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            shape_sigma: 0.5,
            expr_sigma: 0.5,
            yaw_range_deg: [0.0, 90.0],
            pitch_max_deg: 10.0,
            roll_max_deg: 10.0,
            scale_range: [36.0, 44.0],
            center: [60.0, 60.0],
            translation_jitter: 4.0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.shape_sigma,
            self.expr_sigma,
            self.yaw_range_deg[0],
            self.yaw_range_deg[1],
            self.pitch_max_deg,
            self.roll_max_deg,
            self.scale_range[0],
            self.scale_range[1],
            self.center[0],
            self.center[1],
            self.translation_jitter,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(config_err!("sampling: all values must be finite"));
        }
        if self.shape_sigma < 0.0 || self.expr_sigma < 0.0 {
            return Err(config_err!("sampling.shape_sigma / sampling.expr_sigma must be >= 0"));
        }
        let [lo, hi] = self.yaw_range_deg;
        if !(0.0 <= lo && lo <= hi && hi <= 90.0) {
            return Err(config_err!("sampling.yaw_range_deg must satisfy 0 <= lo <= hi <= 90"));
        }
        if self.pitch_max_deg < 0.0 || self.roll_max_deg < 0.0 || self.translation_jitter < 0.0 {
            return Err(config_err!("sampling: pitch_max_deg, roll_max_deg and translation_jitter must be >= 0"));
        }
        if !(0.0 < self.scale_range[0] && self.scale_range[0] <= self.scale_range[1]) {
            return Err(config_err!("sampling.scale_range must satisfy 0 < lo <= hi"));
        }
        Ok(())
    }
}

/// Detector-noise simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub outlier_prob: f64,
    pub outlier_range: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma: 1.5,
            outlier_prob: 0.05,
            outlier_range: 10.0,
        }
    }
}

impl NoiseConfig {
    pub const NONE: NoiseConfig = NoiseConfig {
        sigma: 0.0,
        outlier_prob: 0.0,
        outlier_range: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(config_err!("noise.sigma must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.outlier_prob) {
            return Err(config_err!("noise.outlier_prob must be in [0, 1]"));
        }
        if !(self.outlier_range.is_finite() && self.outlier_range >= 0.0) {
            return Err(config_err!("noise.outlier_range must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Pose buckets by absolute yaw: `[0,30)`, `[30,60)`, `[60,90]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum YawBucket {
    Frontal,
    Medium,
    Profile,
}

impl YawBucket {
    pub const ALL: [YawBucket; 3] = [YawBucket::Frontal, YawBucket::Medium, YawBucket::Profile];

    pub fn of(yaw_deg: f64) -> Self {
        let a = yaw_deg.abs();
        if a < 30.0 {
            YawBucket::Frontal
        } else if a < 60.0 {
            YawBucket::Medium
        } else {
            YawBucket::Profile
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            YawBucket::Frontal => "0-30",
            YawBucket::Medium => "30-60",
            YawBucket::Profile => "60-90",
        }
    }
}

/// A sampled ground truth and the yaw it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPose {
    pub coeff: CoefficientVector,
    pub yaw_deg: f64,
}

pub fn sample_coefficients<R: RngCore + ?Sized>(r: &mut R, cfg: &SamplingConfig, layout: CoefficientLayout) -> SampledPose {
    let [lo, hi] = cfg.yaw_range_deg;
    let mag = if hi > lo { rng::uniform(r, lo, hi) } else { lo };
    let sign = if rng::bernoulli(r, 0.5) { -1.0 } else { 1.0 };
    let yaw_deg = sign * mag;
    let sym = |r: &mut R, m: f64| if m > 0.0 { rng::uniform(r, -m, m) } else { 0.0 };
    let pitch = sym(r, cfg.pitch_max_deg);
    let roll = sym(r, cfg.roll_max_deg);
    let rad = core::f64::consts::PI / 180.0;
    let pi = rotation_from_euler(yaw_deg * rad, pitch * rad, roll * rad);
    let [f_lo, f_hi] = cfg.scale_range;
    let f = if f_hi > f_lo { rng::uniform(r, f_lo, f_hi) } else { f_lo };
    let t = [
        cfg.center[0] + sym(r, cfg.translation_jitter),
        cfg.center[1] + sym(r, cfg.translation_jitter),
    ];
    let a_s: Vec<f64> = (0..layout.k_shape).map(|_| rng::normal(r, 0.0, cfg.shape_sigma)).collect();
    let a_e: Vec<f64> = (0..layout.k_expr).map(|_| rng::normal(r, 0.0, cfg.expr_sigma)).collect();
    SampledPose {
        coeff: CoefficientVector::from_parts(f, t, &pi, &a_s, &a_e),
        yaw_deg,
    }
}

/// Gaussian jitter per coordinate, or with probability `outlier_prob` a
/// uniform offset in `±outlier_range` replacing it.
pub fn corrupt_landmarks<R: RngCore + ?Sized>(landmarks: &LandmarkSet, r: &mut R, noise: &NoiseConfig) -> Result<LandmarkSet> {
    let dim = landmarks.dim();
    let mut pts = landmarks.as_slice().to_vec();
    for p in pts.chunks_exact_mut(dim) {
        if rng::bernoulli(r, noise.outlier_prob) {
            for v in p.iter_mut() {
                *v += rng::uniform(r, -noise.outlier_range, noise.outlier_range);
            }
        } else {
            for v in p.iter_mut() {
                *v += rng::normal(r, 0.0, noise.sigma);
            }
        }
    }
    LandmarkSet::new(dim, pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::IDENTITY3;
    use crate::model::synthetic::{generate_model, SyntheticModelConfig};

    #[test]
    fn zero_pose_range_gives_identity_rotation() {
        let cfg = SamplingConfig {
            yaw_range_deg: [0.0, 0.0],
            pitch_max_deg: 0.0,
            roll_max_deg: 0.0,
            ..Default::default()
        };
        let s = sample_coefficients(&mut rng::stream(1, 0), &cfg, CoefficientLayout::default());
        assert_eq!(s.coeff.projection(), IDENTITY3);
    }

    #[test]
    fn zero_sigma_gives_zero_blocks() {
        let cfg = SamplingConfig {
            shape_sigma: 0.0,
            expr_sigma: 0.0,
            ..Default::default()
        };
        let s = sample_coefficients(&mut rng::stream(2, 0), &cfg, CoefficientLayout::default());
        assert!(s.coeff.alpha().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn yaw_buckets_are_uniform() {
        // multinomial with p = 1/3: each count within 3 sigma of n/3
        let n = 10_000;
        let cfg = SamplingConfig::default();
        let mut r = rng::stream(3, 0);
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let s = sample_coefficients(&mut r, &cfg, CoefficientLayout::default());
            counts[YawBucket::of(s.yaw_deg).index()] += 1;
        }
        let expect = n as f64 / 3.0;
        let sd = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - expect).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn landmarks_land_in_frame() {
        let model = generate_model(&SyntheticModelConfig::default()).unwrap();
        let cfg = SamplingConfig::default();
        let mut r = rng::stream(4, 0);
        let n = 2000;
        let inside = (0..n)
            .filter(|_| {
                let s = sample_coefficients(&mut r, &cfg, model.layout());
                let l = model.landmarks_2d(&s.coeff).unwrap();
                l.as_slice().iter().all(|&v| (0.0..119.5).contains(&v))
            })
            .count();
        assert!(inside as f64 / n as f64 >= 0.99, "{inside}/{n}");
    }

    fn grid_points(n: usize) -> LandmarkSet {
        LandmarkSet::new(2, (0..2 * n).map(|i| (i % 97) as f64).collect()).unwrap()
    }

    #[test]
    fn no_noise_is_identity() {
        let l = grid_points(68);
        let out = corrupt_landmarks(&l, &mut rng::stream(5, 0), &NoiseConfig::NONE).unwrap();
        assert_eq!(out, l);
    }

    #[test]
    fn gaussian_jitter_has_rayleigh_mean() {
        let noise = NoiseConfig {
            sigma: 1.5,
            outlier_prob: 0.0,
            outlier_range: 10.0,
        };
        let l = grid_points(68);
        let mut r = rng::stream(6, 0);
        let mut total = 0.0;
        let mut count = 0;
        while count < 10_000 {
            let out = corrupt_landmarks(&l, &mut r, &noise).unwrap();
            for i in 0..68 {
                if count == 10_000 {
                    break;
                }
                let (a, b) = (l.point(i), out.point(i));
                total += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                count += 1;
            }
        }
        let expect = 1.5 * (core::f64::consts::PI / 2.0).sqrt();
        assert!((total / count as f64 - expect).abs() / expect < 0.02);
    }

    #[test]
    fn outliers_are_bounded() {
        let noise = NoiseConfig {
            sigma: 1.5,
            outlier_prob: 1.0,
            outlier_range: 10.0,
        };
        let l = grid_points(68);
        let mut r = rng::stream(7, 0);
        for _ in 0..50 {
            let out = corrupt_landmarks(&l, &mut r, &noise).unwrap();
            for i in 0..68 {
                let (a, b) = (l.point(i), out.point(i));
                let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                assert!(d <= 10.0 * 2f64.sqrt() && d.is_finite());
            }
        }
    }

    #[test]
    fn bucket_edges() {
        assert_eq!(YawBucket::of(29.999), YawBucket::Frontal);
        assert_eq!(YawBucket::of(-30.0), YawBucket::Medium);
        assert_eq!(YawBucket::of(60.0), YawBucket::Profile);
        assert_eq!(YawBucket::of(90.0), YawBucket::Profile);
    }
}
