use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::linalg::{mat3_from_row_major, Mat3};

/// Sizes of the coefficient partition `[f, t, Pi, alpha_s, alpha_e]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoefficientLayout {
    pub k_shape: usize,
    pub k_expr: usize,
}

impl Default for CoefficientLayout {
    fn default() -> Self {
        Self {
            k_shape: 40,
            k_expr: 10,
        }
    }
}

impl CoefficientLayout {
    pub const SCALE: usize = 0;
    pub const TRANSLATION: core::ops::Range<usize> = 1..3;
    pub const PROJECTION: core::ops::Range<usize> = 3..12;
    pub const CAMERA_LEN: usize = 12;

    pub fn new(k_shape: usize, k_expr: usize) -> Self {
        Self { k_shape, k_expr }
    }

    pub fn len(&self) -> usize {
        Self::CAMERA_LEN + self.k_shape + self.k_expr
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shape_range(&self) -> core::ops::Range<usize> {
        Self::CAMERA_LEN..Self::CAMERA_LEN + self.k_shape
    }

    pub fn expr_range(&self) -> core::ops::Range<usize> {
        let start = Self::CAMERA_LEN + self.k_shape;
        start..start + self.k_expr
    }
}

/// The regressed parameter vector: scale, 2D translation, 3x3 projection
/// (row-major), shape and expression coefficients, stored contiguously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    layout: CoefficientLayout,
    raw: Vec<f64>,
}

impl CoefficientVector {
    pub fn from_raw(layout: CoefficientLayout, raw: Vec<f64>) -> Result<Self> {
        if raw.len() != layout.len() {
            return Err(config_err!(
                "coefficient vector has {} values, layout expects {}",
                raw.len(),
                layout.len()
            ));
        }
        Ok(Self { layout, raw })
    }

    pub fn zeros(layout: CoefficientLayout) -> Self {
        Self {
            layout,
            raw: alloc::vec![0.0; layout.len()],
        }
    }

    /// Identity camera (`f = 1`, `t = 0`, `Pi = I`) with zero shape/expression.
    pub fn identity(layout: CoefficientLayout) -> Self {
        let mut c = Self::zeros(layout);
        c.raw[CoefficientLayout::SCALE] = 1.0;
        for i in 0..3 {
            c.raw[CoefficientLayout::PROJECTION.start + 4 * i] = 1.0;
        }
        c
    }

    pub fn from_parts(
        f: f64,
        t: [f64; 2],
        pi: &Mat3,
        alpha_s: &[f64],
        alpha_e: &[f64],
    ) -> Self {
        let layout = CoefficientLayout::new(alpha_s.len(), alpha_e.len());
        let mut raw = Vec::with_capacity(layout.len());
        raw.push(f);
        raw.extend_from_slice(&t);
        for row in pi {
            raw.extend_from_slice(row);
        }
        raw.extend_from_slice(alpha_s);
        raw.extend_from_slice(alpha_e);
        Self { layout, raw }
    }

    pub fn layout(&self) -> CoefficientLayout {
        self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.raw
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.raw
    }

    pub fn into_raw(self) -> Vec<f64> {
        self.raw
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn scale(&self) -> f64 {
        self.raw[CoefficientLayout::SCALE]
    }

    pub fn translation(&self) -> [f64; 2] {
        [self.raw[1], self.raw[2]]
    }

    pub fn projection_raw(&self) -> &[f64] {
        &self.raw[CoefficientLayout::PROJECTION]
    }

    pub fn projection(&self) -> Mat3 {
        mat3_from_row_major(self.projection_raw())
    }

    pub fn alpha_shape(&self) -> &[f64] {
        &self.raw[self.layout.shape_range()]
    }

    pub fn alpha_expr(&self) -> &[f64] {
        &self.raw[self.layout.expr_range()]
    }

    /// The shape and expression block, in basis order.
    pub fn alpha(&self) -> &[f64] {
        &self.raw[CoefficientLayout::CAMERA_LEN..]
    }

    pub fn is_finite(&self) -> bool {
        self.raw.iter().all(|v| v.is_finite())
    }

    pub fn camera_is_finite(&self) -> bool {
        self.raw[..CoefficientLayout::CAMERA_LEN].iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_layout_has_62_entries() {
        assert_eq!(CoefficientLayout::default().len(), 62);
    }

    #[test]
    fn accessors_slice_the_partition() {
        let raw: Vec<f64> = (0..62).map(|i| i as f64).collect();
        let c = CoefficientVector::from_raw(CoefficientLayout::default(), raw).unwrap();
        assert_eq!(c.scale(), 0.0);
        assert_eq!(c.translation(), [1.0, 2.0]);
        assert_eq!(c.projection_raw(), &[3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
        assert_eq!(c.alpha_shape()[0], 12.0);
        assert_eq!(c.alpha_shape().len(), 40);
        assert_eq!(c.alpha_expr()[0], 52.0);
        assert_eq!(c.alpha_expr().len(), 10);
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert!(CoefficientVector::from_raw(CoefficientLayout::default(), alloc::vec![0.0; 61]).is_err());
    }

    proptest! {
        #[test]
        fn parts_round_trip_bit_exactly(raw in proptest::collection::vec(any::<f64>(), 62)) {
            let c = CoefficientVector::from_raw(CoefficientLayout::default(), raw.clone()).unwrap();
            let rebuilt = CoefficientVector::from_parts(
                c.scale(),
                c.translation(),
                &c.projection(),
                c.alpha_shape(),
                c.alpha_expr(),
            );
            let a: Vec<u64> = rebuilt.as_slice().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = raw.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
