//! Seeded synthetic face model: a smooth height-field mean shape over an
//! elliptical footprint, smooth random shape/expression fields made
//! orthonormal by Gram-Schmidt, and 68 landmark vertices placed on a
//! canonical face layout.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::linalg::{axpy, dot, norm2};
use crate::model::{LinearShapeModel, MorphableModel, LANDMARK_COUNT};
use crate::rng::{self, streams, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticModelConfig {
    pub seed: u64,
    pub n_vertices: usize,
    pub k_shape: usize,
    pub k_expr: usize,
}

impl Default for SyntheticModelConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_vertices: 500,
            k_shape: 40,
            k_expr: 10,
        }
    }
}

// face footprint semi-axes in model units (y grows downwards, as in images)
const SEMI_X: f64 = 0.75;
const SEMI_Y: f64 = 0.9;

/// Canonical 68-point layout in model units.
pub fn landmark_template() -> [[f64; 2]; LANDMARK_COUNT] {
    let mut t = [[0.0; 2]; LANDMARK_COUNT];
    // jaw 0..=16, from the right temple round the chin to the left temple
    for (i, p) in t.iter_mut().enumerate().take(17) {
        let phi = core::f64::consts::PI * (1.0 - i as f64 / 16.0);
        *p = [0.68 * libm::cos(phi), 0.1 + 0.72 * libm::sin(phi)];
    }
    // brows 17..=21 and 22..=26
    for i in 0..5 {
        let u = i as f64 / 4.0;
        let x = 0.55 - 0.43 * u;
        let y = -0.36 - 0.06 * libm::sin(core::f64::consts::PI * u);
        t[17 + i] = [-x, y];
        t[26 - i] = [x, y];
    }
    // nose bridge 27..=30, 30 is the tip
    for i in 0..4 {
        t[27 + i] = [0.0, -0.22 + 0.12 * i as f64];
    }
    // nose base 31..=35
    for i in 0..5 {
        let u = i as f64 - 2.0;
        t[31 + i] = [0.075 * u, 0.24 + 0.02 * (2.0 - libm::fabs(u))];
    }
    // eyes 36..=41 (image left) and 42..=47
    let eye = [
        [-0.43, -0.2],
        [-0.35, -0.25],
        [-0.25, -0.25],
        [-0.17, -0.2],
        [-0.25, -0.15],
        [-0.35, -0.15],
    ];
    for (i, e) in eye.iter().enumerate() {
        t[36 + i] = *e;
    }
    let mirror = [45, 44, 43, 42, 47, 46];
    for (i, m) in mirror.iter().enumerate() {
        t[*m] = [-eye[i][0], eye[i][1]];
    }
    // outer lips 48..=59, inner lips 60..=67
    let lips = [
        [-0.28, 0.48],
        [-0.18, 0.42],
        [-0.08, 0.40],
        [0.0, 0.41],
        [0.08, 0.40],
        [0.18, 0.42],
        [0.28, 0.48],
        [0.18, 0.56],
        [0.08, 0.60],
        [0.0, 0.61],
        [-0.08, 0.60],
        [-0.18, 0.56],
        [-0.2, 0.48],
        [-0.07, 0.45],
        [0.0, 0.45],
        [0.07, 0.45],
        [0.2, 0.48],
        [0.07, 0.52],
        [0.0, 0.52],
        [-0.07, 0.52],
    ];
    for (i, p) in lips.iter().enumerate() {
        t[48 + i] = *p;
    }
    t
}

struct Bump {
    center: [f64; 2],
    width: f64,
    amplitude: f64,
}

fn sq(v: f64) -> f64 {
    v * v
}

fn depth(x: f64, y: f64, bumps: &[Bump]) -> f64 {
    let r: f64 = 1.0 - sq(x / (SEMI_X + 0.05)) - sq(y / (SEMI_Y + 0.05));
    let dome = -0.45 * libm::sqrt(r.max(0.0));
    let nose = -0.22 * libm::exp(-(x * x / (2.0 * 0.06 * 0.06) + sq(y - 0.05) / (2.0 * 0.14 * 0.14)));
    let extra: f64 = bumps
        .iter()
        .map(|b| {
            let d2 = sq(x - b.center[0]) + sq(y - b.center[1]);
            b.amplitude * libm::exp(-d2 / (2.0 * b.width * b.width))
        })
        .sum();
    dome + nose + extra
}

fn point_in_footprint(rng: &mut SeededRng) -> [f64; 2] {
    loop {
        let x = rng::uniform(rng, -SEMI_X, SEMI_X);
        let y = rng::uniform(rng, -SEMI_Y, SEMI_Y);
        if sq(x / SEMI_X) + sq(y / SEMI_Y) <= 1.0 {
            return [x, y];
        }
    }
}

/// Generates a smooth displacement field over the vertices.
fn smooth_field(rng: &mut SeededRng, vertices: &[f64]) -> Vec<f64> {
    const CENTERS: usize = 12;
    let bumps: Vec<([f64; 2], f64, [f64; 3])> = (0..CENTERS)
        .map(|_| {
            let c = point_in_footprint(rng);
            let w = rng::uniform(rng, 0.2, 0.5);
            let a = [rng::normal(rng, 0.0, 1.0), rng::normal(rng, 0.0, 1.0), rng::normal(rng, 0.0, 1.0)];
            (c, w, a)
        })
        .collect();
    let mut out = Vec::with_capacity(vertices.len());
    for v in vertices.chunks_exact(3) {
        let mut d = [0.0; 3];
        for (c, w, a) in &bumps {
            let d2 = sq(v[0] - c[0]) + sq(v[1] - c[1]);
            let phi = libm::exp(-d2 / (2.0 * w * w));
            for k in 0..3 {
                d[k] += a[k] * phi;
            }
        }
        for dk in d {
            out.push(dk + 0.05 * rng::normal(rng, 0.0, 1.0));
        }
    }
    out
}

/// Modified Gram-Schmidt with one re-orthogonalization pass.
fn orthonormalize(columns: &mut [Vec<f64>]) -> Result<()> {
    for j in 0..columns.len() {
        let (done, rest) = columns.split_at_mut(j);
        let col = &mut rest[0];
        for _pass in 0..2 {
            for q in done.iter() {
                let p = dot(q, col);
                axpy(-p, q, col);
            }
        }
        let n = norm2(col);
        if !(n > 1e-8) {
            return Err(config_err!("basis column {j} is degenerate"));
        }
        col.iter_mut().for_each(|x| *x /= n);
    }
    Ok(())
}

/// Builds the seeded synthetic morphable model.
pub fn generate_model(config: &SyntheticModelConfig) -> Result<MorphableModel> {
    let n = config.n_vertices;
    if n < LANDMARK_COUNT {
        return Err(config_err!("n_vertices must be at least {LANDMARK_COUNT}, got {n}"));
    }
    let k_total = config.k_shape + config.k_expr;
    if k_total > 3 * n {
        return Err(config_err!("{k_total} basis columns do not fit in {} dimensions", 3 * n));
    }
    let mut rng = rng::stream(config.seed, streams::MODEL);

    let bumps: Vec<Bump> = (0..4)
        .map(|_| Bump {
            center: point_in_footprint(&mut rng),
            width: rng::uniform(&mut rng, 0.15, 0.35),
            amplitude: rng::uniform(&mut rng, -0.05, 0.05),
        })
        .collect();

    let mut xy: Vec<[f64; 2]> = landmark_template()
        .iter()
        .map(|p| [p[0] + rng::normal(&mut rng, 0.0, 0.008), p[1] + rng::normal(&mut rng, 0.0, 0.008)])
        .collect();
    while xy.len() < n {
        xy.push(point_in_footprint(&mut rng));
    }

    // shuffle so landmark vertices sit at seed-dependent indices
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng, &mut order);
    let mut landmark_indices = alloc::vec![0usize; LANDMARK_COUNT];
    let mut mean = alloc::vec![0.0; 3 * n];
    for (new_idx, &old_idx) in order.iter().enumerate() {
        let [x, y] = xy[old_idx];
        mean[3 * new_idx] = x;
        mean[3 * new_idx + 1] = y;
        mean[3 * new_idx + 2] = depth(x, y, &bumps);
        if old_idx < LANDMARK_COUNT {
            landmark_indices[old_idx] = new_idx;
        }
    }

    let mut columns: Vec<Vec<f64>> = (0..k_total).map(|_| smooth_field(&mut rng, &mean)).collect();
    orthonormalize(&mut columns)?;
    let shape_basis: Vec<f64> = columns[..config.k_shape].concat();
    let expr_basis: Vec<f64> = columns[config.k_shape..].concat();

    let shape = LinearShapeModel::new(mean, shape_basis, config.k_shape, expr_basis, config.k_expr)?;
    MorphableModel::new(shape, landmark_indices)
}
