use alloc::vec::Vec;

use crate::error::{config_err, Error, Result};

/// Mean per-point Euclidean distance divided by `sqrt(w * h)`, in percent.
pub fn nme(pred: &[f64], gt: &[f64], dim: usize, bbox: (f64, f64)) -> Result<f64> {
    if dim == 0 || pred.len() != gt.len() || pred.len() % dim != 0 || pred.is_empty() {
        return Err(config_err!(
            "nme needs equal non-empty point sets of dimension {dim}, got {} and {} values",
            pred.len(),
            gt.len()
        ));
    }
    let area = bbox.0 * bbox.1;
    if !(area.is_finite() && area > 0.0 && bbox.0 > 0.0) {
        return Err(Error::Domain(alloc::format!("bounding box {}x{} has no area", bbox.0, bbox.1)));
    }
    let n = pred.len() / dim;
    let mut sum = 0.0;
    for (p, q) in pred.chunks_exact(dim).zip(gt.chunks_exact(dim)) {
        let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        sum += libm::sqrt(d2);
    }
    Ok(100.0 * sum / n as f64 / libm::sqrt(area))
}

/// Error distribution curve after dropping the worst cases.
#[derive(Debug, Clone, PartialEq)]
pub struct EdcCurve {
    /// Kept values in ascending order; point `i` covers `i + 1` images.
    pub values: Vec<f64>,
    pub mean: f64,
    pub discarded: usize,
}

impl EdcCurve {
    /// `(nme_percent, image_count)` pairs.
    pub fn points(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (v, i + 1))
    }
}

pub fn edc(values: &[f64], discard_worst: usize) -> Result<EdcCurve> {
    if values.len() <= discard_worst {
        return Err(Error::Domain(alloc::format!(
            "{} values cannot survive discarding the worst {discard_worst}",
            values.len()
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("EDC input contains NaN".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.truncate(values.len() - discard_worst);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    Ok(EdcCurve {
        values: v,
        mean,
        discarded: discard_worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn nme_examples() {
        let gt = [0.0, 0.0, 10.0, 10.0];
        assert_eq!(nme(&gt, &gt, 2, (100.0, 100.0)).unwrap(), 0.0);
        let pred = [3.0, 0.0, 10.0, 14.0];
        assert!((nme(&pred, &gt, 2, (100.0, 100.0)).unwrap() - 3.5).abs() < 1e-12);
        assert!(matches!(nme(&pred, &gt, 2, (0.0, 100.0)), Err(Error::Domain(_))));
        assert!(matches!(nme(&pred, &gt[..2], 2, (1.0, 1.0)), Err(Error::Config(_))));
    }

    #[test]
    fn nme_matches_hand_sum() {
        let mut r = rng::stream(1, 0);
        let p: Vec<f64> = (0..90).map(|_| rng::uniform(&mut r, -5.0, 5.0)).collect();
        let q: Vec<f64> = (0..90).map(|_| rng::uniform(&mut r, -5.0, 5.0)).collect();
        let mut s = 0.0;
        for i in 0..30 {
            let (dx, dy, dz) = (p[3 * i] - q[3 * i], p[3 * i + 1] - q[3 * i + 1], p[3 * i + 2] - q[3 * i + 2]);
            s += (dx * dx + dy * dy + dz * dz).sqrt();
        }
        let expect = 100.0 * s / 30.0 / (4.0f64 * 9.0).sqrt();
        assert!((nme(&p, &q, 3, (4.0, 9.0)).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn edc_examples() {
        let flat = edc(&[2.5; 100], 20).unwrap();
        assert_eq!(flat.values.len(), 80);
        assert_eq!(flat.mean, 2.5);
        let series: Vec<f64> = (1..=100).rev().map(|v| v as f64).collect();
        let c = edc(&series, 20).unwrap();
        assert_eq!(c.mean, 40.5);
        assert_eq!(c.points().last(), Some((80.0, 80)));
        assert!(matches!(edc(&[1.0; 20], 20), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn nme_is_permutation_invariant(seed in 0u64..300) {
            let mut r = rng::stream(seed, 0);
            let p: Vec<f64> = (0..40).map(|_| rng::uniform(&mut r, 0.0, 50.0)).collect();
            let q: Vec<f64> = (0..40).map(|_| rng::uniform(&mut r, 0.0, 50.0)).collect();
            let mut order: Vec<usize> = (0..20).collect();
            rng::shuffle(&mut r, &mut order);
            let pp: Vec<f64> = order.iter().flat_map(|&i| [p[2 * i], p[2 * i + 1]]).collect();
            let qq: Vec<f64> = order.iter().flat_map(|&i| [q[2 * i], q[2 * i + 1]]).collect();
            let a = nme(&p, &q, 2, (30.0, 40.0)).unwrap();
            let b = nme(&pp, &qq, 2, (30.0, 40.0)).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }

        #[test]
        fn discarding_never_raises_mean(v in proptest::collection::vec(0.0f64..100.0, 21..200)) {
            let c = edc(&v, 20).unwrap();
            let full = v.iter().sum::<f64>() / v.len() as f64;
            prop_assert!(c.mean <= full + 1e-12);
        }
    }
}
