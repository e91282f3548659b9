use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::model::{CoefficientVector, FacialLandmarkMap, MorphableModel};

/// Grayscale stand-in for the face crop, stored quantized to 8 bits.
/// `value = pixel / 255`, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl ProxyImage {
    pub fn blank(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: alloc::vec![0; height * width],
        }
    }

    pub fn from_pixels(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(config_err!("proxy image needs {} pixels, got {}", height * width, pixels.len()));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col] as f64 / 255.0
    }
}

/// Splats every projected vertex onto the grid with bilinear weights (cell
/// `(r, c)` is centred on `(x, y) = (c, r)`), then scales the maximum to 1.
pub fn render_proxy_image(model: &MorphableModel, coeff: &CoefficientVector, resolution: (usize, usize)) -> Result<ProxyImage> {
    let v = model.vertices_2d(coeff)?;
    Ok(splat(&v, resolution))
}

pub(crate) fn splat(vertices_2d: &[f64], (height, width): (usize, usize)) -> ProxyImage {
    let mut acc = alloc::vec![0.0f64; height * width];
    let mut add = |r: f64, c: f64, w: f64| {
        if r >= 0.0 && c >= 0.0 && (r as usize) < height && (c as usize) < width && w > 0.0 {
            acc[r as usize * width + c as usize] += w;
        }
    };
    for p in vertices_2d.chunks_exact(2) {
        let (x, y) = (p[0], p[1]);
        if !(x.is_finite() && y.is_finite()) {
            continue;
        }
        let (x0, y0) = (libm::floor(x), libm::floor(y));
        let (fx, fy) = (x - x0, y - y0);
        add(y0, x0, (1.0 - fx) * (1.0 - fy));
        add(y0, x0 + 1.0, fx * (1.0 - fy));
        add(y0 + 1.0, x0, (1.0 - fx) * fy);
        add(y0 + 1.0, x0 + 1.0, fx * fy);
    }
    let max = acc.iter().copied().fold(0.0, f64::max);
    let pixels = if max > 0.0 {
        acc.iter().map(|a| libm::round(255.0 * a / max) as u8).collect()
    } else {
        alloc::vec![0; height * width]
    };
    ProxyImage { height, width, pixels }
}

/// Target cell of source index `i` when mapping `n` cells onto `m`.
#[inline]
fn bin(i: usize, n: usize, m: usize) -> usize {
    i * m / n
}

/// Network input for one sample: the proxy image area-averaged onto a
/// `side x side` grid, followed by the landmark map max-pooled onto the same
/// grid (or zeros when `flm` is `None`).
pub fn build_input(proxy: &ProxyImage, flm: Option<&FacialLandmarkMap>, side: usize, out: &mut Vec<f64>) -> Result<()> {
    let (h, w) = proxy.resolution();
    if side == 0 || side > h || side > w {
        return Err(config_err!("input side {side} does not fit a {h}x{w} image"));
    }
    let start = out.len();
    out.resize(start + 2 * side * side, 0.0);
    let (img, rest) = out[start..].split_at_mut(side * side);
    let mut count = alloc::vec![0u32; side * side];
    for r in 0..h {
        let br = bin(r, h, side);
        for c in 0..w {
            let k = br * side + bin(c, w, side);
            img[k] += proxy.value(r, c);
            count[k] += 1;
        }
    }
    for (v, n) in img.iter_mut().zip(&count) {
        *v /= *n as f64;
    }
    if let Some(map) = flm {
        let (fh, fw) = map.resolution();
        if side > fh || side > fw {
            return Err(config_err!("input side {side} does not fit a {fh}x{fw} landmark map"));
        }
        rest.iter_mut().for_each(|v| *v = -1.0);
        for r in 0..fh {
            let br = bin(r, fh, side);
            for c in 0..fw {
                if map.get(r, c) == 1 {
                    rest[br * side + bin(c, fw, side)] = 1.0;
                }
            }
        }
    }
    Ok(())
}
