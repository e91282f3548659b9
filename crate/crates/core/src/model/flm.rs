use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::model::LandmarkSet;

/// Default crop resolution `(height, width)`.
pub const DEFAULT_RESOLUTION: (usize, usize) = (120, 120);

/// Binary landmark image: `+1` at landmark cells, `-1` elsewhere. Row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacialLandmarkMap {
    height: usize,
    width: usize,
    grid: Vec<i8>,
}

/// Result of rasterizing a landmark set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rasterized {
    pub map: FacialLandmarkMap,
    /// Landmarks that fell outside the grid.
    pub skipped: usize,
}

impl FacialLandmarkMap {
    pub fn blank(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            grid: alloc::vec![-1; height * width],
        }
    }

    /// Builds a map from stored cells; every cell must be `+1` or `-1`.
    pub fn from_cells(height: usize, width: usize, grid: Vec<i8>) -> Result<Self> {
        if grid.len() != height * width {
            return Err(config_err!("landmark map needs {} cells, got {}", height * width, grid.len()));
        }
        if let Some(i) = grid.iter().position(|&v| v != 1 && v != -1) {
            return Err(config_err!("landmark map cell {i} is {}, expected +1 or -1", grid[i]));
        }
        Ok(Self { height, width, grid })
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.grid[row * self.width + col]
    }

    pub fn cells(&self) -> &[i8] {
        &self.grid
    }

    pub fn positive_count(&self) -> usize {
        self.grid.iter().filter(|&&v| v == 1).count()
    }
}

/// Round half up.
#[inline]
fn round_half_up(v: f64) -> f64 {
    libm::floor(v + 0.5)
}

/// Marks the cell `(round(y), round(x))` of every in-bounds landmark.
/// Out-of-bounds landmarks are skipped and counted. Coincident landmarks
/// overwrite each other (the value is `+1` either way).
pub fn rasterize_flm(landmarks: &LandmarkSet, resolution: (usize, usize)) -> Rasterized {
    let (height, width) = resolution;
    let mut map = FacialLandmarkMap::blank(height, width);
    let mut skipped = 0;
    for i in 0..landmarks.len() {
        let p = landmarks.point(i);
        let col = round_half_up(p[0]);
        let row = round_half_up(p[1]);
        if row >= 0.0 && col >= 0.0 && row < height as f64 && col < width as f64 {
            map.grid[row as usize * width + col as usize] = 1;
        } else {
            skipped += 1;
        }
    }
    Rasterized { map, skipped }
}
