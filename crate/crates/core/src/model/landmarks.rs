use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

/// Number of landmarks in the 68-point convention.
pub const LANDMARK_COUNT: usize = 68;

/// Landmarks of the 68-point convention that the losses refer to by name.
pub mod idx {
    pub const RIGHT_EYE_OUTER: usize = 36;
    pub const RIGHT_EYE_INNER: usize = 39;
    pub const LEFT_EYE_INNER: usize = 42;
    pub const LEFT_EYE_OUTER: usize = 45;
    pub const NOSE_TIP: usize = 30;
    pub const MOUTH_RIGHT: usize = 48;
    pub const MOUTH_LEFT: usize = 54;
}

/// Ordered 68 landmarks, 2D (image plane) or 3D, stored interleaved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    dim: usize,
    points: Vec<f64>,
}

impl LandmarkSet {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(config_err!("landmark dimension must be 2 or 3, got {dim}"));
        }
        if points.len() != dim * LANDMARK_COUNT {
            return Err(config_err!(
                "expected {} landmark coordinates, got {}",
                dim * LANDMARK_COUNT,
                points.len()
            ));
        }
        if let Some(i) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(alloc::format!(
                "landmark {} has a non-finite coordinate",
                i / dim
            )));
        }
        Ok(Self { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        LANDMARK_COUNT
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    pub fn into_raw(self) -> Vec<f64> {
        self.points
    }

    /// Tight axis-aligned box of the first two coordinates: `(min_x, min_y, max_x, max_y)`.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.points.chunks_exact(self.dim) {
            b.0 = b.0.min(p[0]);
            b.1 = b.1.min(p[1]);
            b.2 = b.2.max(p[0]);
            b.3 = b.3.max(p[1]);
        }
        b
    }

    /// Bounding-box `(width, height)`.
    pub fn bbox_size(&self) -> (f64, f64) {
        let (x0, y0, x1, y1) = self.bounding_box();
        (x1 - x0, y1 - y0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_count_dim_and_finiteness() {
        assert!(LandmarkSet::new(2, alloc::vec![0.0; 136]).is_ok());
        assert!(LandmarkSet::new(3, alloc::vec![0.0; 204]).is_ok());
        assert!(LandmarkSet::new(2, alloc::vec![0.0; 135]).is_err());
        assert!(LandmarkSet::new(4, alloc::vec![0.0; 272]).is_err());
        let mut bad = alloc::vec![0.0; 136];
        bad[7] = f64::NAN;
        assert!(matches!(LandmarkSet::new(2, bad), Err(Error::Numeric(_))));
    }

    #[test]
    fn bbox_spans_points() {
        let mut pts = alloc::vec![5.0; 136];
        pts[0] = 1.0;
        pts[3] = 9.0;
        let l = LandmarkSet::new(2, pts).unwrap();
        assert_eq!(l.bounding_box(), (1.0, 5.0, 5.0, 9.0));
        assert_eq!(l.bbox_size(), (4.0, 4.0));
    }
}
