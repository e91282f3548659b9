use alloc::vec::Vec;

use crate::error::{config_err, Error, Result};
use crate::linalg::{dot, mat3_vec, Mat3, Vec3};
use crate::model::{CoefficientLayout, CoefficientVector, LandmarkSet, LANDMARK_COUNT};

/// Mean shape plus linear shape and expression bases. Bases are stored
/// column-major (`3N` values per column), vertices interleaved `x, y, z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearShapeModel {
    n_vertices: usize,
    k_shape: usize,
    k_expr: usize,
    mean_shape: Vec<f64>,
    shape_basis: Vec<f64>,
    expr_basis: Vec<f64>,
}

impl LinearShapeModel {
    pub fn new(
        mean_shape: Vec<f64>,
        shape_basis: Vec<f64>,
        k_shape: usize,
        expr_basis: Vec<f64>,
        k_expr: usize,
    ) -> Result<Self> {
        if mean_shape.is_empty() || mean_shape.len() % 3 != 0 {
            return Err(config_err!("mean shape length {} is not a positive multiple of 3", mean_shape.len()));
        }
        let rows = mean_shape.len();
        if shape_basis.len() != rows * k_shape {
            return Err(config_err!("shape basis has {} values, expected {}x{}", shape_basis.len(), rows, k_shape));
        }
        if expr_basis.len() != rows * k_expr {
            return Err(config_err!("expression basis has {} values, expected {}x{}", expr_basis.len(), rows, k_expr));
        }
        Ok(Self {
            n_vertices: rows / 3,
            k_shape,
            k_expr,
            mean_shape,
            shape_basis,
            expr_basis,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn layout(&self) -> CoefficientLayout {
        CoefficientLayout::new(self.k_shape, self.k_expr)
    }

    pub fn mean_shape(&self) -> &[f64] {
        &self.mean_shape
    }

    pub fn shape_basis(&self) -> &[f64] {
        &self.shape_basis
    }

    pub fn expr_basis(&self) -> &[f64] {
        &self.expr_basis
    }

    /// Column `k` of the stacked basis `[A_s | A_exp]`.
    pub fn column(&self, k: usize) -> &[f64] {
        let rows = self.mean_shape.len();
        if k < self.k_shape {
            &self.shape_basis[k * rows..(k + 1) * rows]
        } else {
            let k = k - self.k_shape;
            &self.expr_basis[k * rows..(k + 1) * rows]
        }
    }

    fn check_layout(&self, coeff: &CoefficientVector) -> Result<()> {
        if coeff.layout() != self.layout() {
            return Err(config_err!(
                "coefficients carry {}+{} basis weights, model has {}+{}",
                coeff.layout().k_shape,
                coeff.layout().k_expr,
                self.k_shape,
                self.k_expr
            ));
        }
        Ok(())
    }

    /// `S = mean + A_s alpha_s + A_exp alpha_exp`.
    pub fn render(&self, coeff: &CoefficientVector) -> Result<Vec<f64>> {
        self.check_layout(coeff)?;
        let mut shape = self.mean_shape.clone();
        for (k, &a) in coeff.alpha().iter().enumerate() {
            if a != 0.0 {
                crate::linalg::axpy(a, self.column(k), &mut shape);
            }
        }
        Ok(shape)
    }

    /// Largest deviation of `B^T B` from the identity, per basis.
    pub fn orthonormality_error(&self) -> f64 {
        let rows = self.mean_shape.len();
        let mut worst: f64 = 0.0;
        for (basis, k) in [(&self.shape_basis, self.k_shape), (&self.expr_basis, self.k_expr)] {
            for i in 0..k {
                for j in i..k {
                    let g = dot(&basis[i * rows..(i + 1) * rows], &basis[j * rows..(j + 1) * rows]);
                    let e = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max(libm::fabs(g - e));
                }
            }
        }
        worst
    }
}

/// Scaled orthographic camera `x = f * Pi * s + (t, 0)`; the first two
/// components are the image-plane projection.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Camera {
    pub f: f64,
    pub t: [f64; 2],
    pub pi: Mat3,
}

impl Camera {
    pub fn of(coeff: &CoefficientVector) -> Result<Self> {
        if !coeff.camera_is_finite() {
            return Err(Error::Numeric("non-finite camera coefficients".into()));
        }
        Ok(Self {
            f: coeff.scale(),
            t: coeff.translation(),
            pi: coeff.projection(),
        })
    }

    #[inline]
    pub fn apply(&self, s: &Vec3) -> Vec3 {
        let r = mat3_vec(&self.pi, s);
        [self.f * r[0] + self.t[0], self.f * r[1] + self.t[1], self.f * r[2]]
    }

    /// Accumulates the camera part of the pullback of `d` (gradient w.r.t.
    /// the camera-space point) into `grad`, and returns the gradient w.r.t.
    /// the model-space point `s`.
    #[inline]
    pub fn pullback(&self, s: &Vec3, d: &Vec3, grad: &mut [f64]) -> Vec3 {
        let r = mat3_vec(&self.pi, s);
        grad[CoefficientLayout::SCALE] += d[0] * r[0] + d[1] * r[1] + d[2] * r[2];
        grad[1] += d[0];
        grad[2] += d[1];
        let p0 = CoefficientLayout::PROJECTION.start;
        for row in 0..3 {
            for col in 0..3 {
                grad[p0 + 3 * row + col] += self.f * d[row] * s[col];
            }
        }
        let mut ds = [0.0; 3];
        for col in 0..3 {
            ds[col] = self.f * (self.pi[0][col] * d[0] + self.pi[1][col] * d[1] + self.pi[2][col] * d[2]);
        }
        ds
    }
}

/// Image-plane projection `V = f * Pr * Pi * S + t` of every vertex.
pub fn project(shape: &[f64], coeff: &CoefficientVector) -> Result<Vec<f64>> {
    let cam = Camera::of(coeff)?;
    if shape.len() % 3 != 0 {
        return Err(config_err!("shape length {} is not a multiple of 3", shape.len()));
    }
    let mut out = Vec::with_capacity(shape.len() / 3 * 2);
    for v in shape.chunks_exact(3) {
        let p = cam.apply(&[v[0], v[1], v[2]]);
        out.push(p[0]);
        out.push(p[1]);
    }
    Ok(out)
}

/// Camera-space points `f * Pi * S + (t, 0)`; dropping `z` gives [`project`].
pub fn project_3d(shape: &[f64], coeff: &CoefficientVector) -> Result<Vec<f64>> {
    let cam = Camera::of(coeff)?;
    if shape.len() % 3 != 0 {
        return Err(config_err!("shape length {} is not a multiple of 3", shape.len()));
    }
    let mut out = Vec::with_capacity(shape.len());
    for v in shape.chunks_exact(3) {
        out.extend_from_slice(&cam.apply(&[v[0], v[1], v[2]]));
    }
    Ok(out)
}

/// A linear shape model with its 68 landmark vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    shape: LinearShapeModel,
    landmark_indices: Vec<usize>,
    // rows of the stacked basis at the landmark vertices, row-major (68*3) x K
    landmark_mean: Vec<f64>,
    landmark_basis: Vec<f64>,
}

/// Tolerance for the basis orthonormality check on construction.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

impl MorphableModel {
    pub fn new(shape: LinearShapeModel, landmark_indices: Vec<usize>) -> Result<Self> {
        if landmark_indices.len() != LANDMARK_COUNT {
            return Err(config_err!("expected {LANDMARK_COUNT} landmark indices, got {}", landmark_indices.len()));
        }
        let n = shape.n_vertices();
        let mut seen = alloc::vec![false; n];
        for &i in &landmark_indices {
            if i >= n {
                return Err(config_err!("landmark index {i} out of range for {n} vertices"));
            }
            if seen[i] {
                return Err(config_err!("landmark index {i} repeated"));
            }
            seen[i] = true;
        }
        let err = shape.orthonormality_error();
        if !(err <= ORTHONORMAL_TOL) {
            return Err(config_err!("basis columns are not orthonormal (max deviation {err:e})"));
        }
        let k = shape.k_shape + shape.k_expr;
        let mut landmark_mean = Vec::with_capacity(3 * LANDMARK_COUNT);
        let mut landmark_basis = Vec::with_capacity(3 * LANDMARK_COUNT * k);
        for &v in &landmark_indices {
            for c in 0..3 {
                let row = 3 * v + c;
                landmark_mean.push(shape.mean_shape[row]);
                for j in 0..k {
                    landmark_basis.push(shape.column(j)[row]);
                }
            }
        }
        Ok(Self {
            shape,
            landmark_indices,
            landmark_mean,
            landmark_basis,
        })
    }

    pub fn shape_model(&self) -> &LinearShapeModel {
        &self.shape
    }

    pub fn n_vertices(&self) -> usize {
        self.shape.n_vertices()
    }

    pub fn layout(&self) -> CoefficientLayout {
        self.shape.layout()
    }

    pub fn landmark_indices(&self) -> &[usize] {
        &self.landmark_indices
    }

    pub fn render_shape(&self, coeff: &CoefficientVector) -> Result<Vec<f64>> {
        self.shape.render(coeff)
    }

    fn n_basis(&self) -> usize {
        self.shape.k_shape + self.shape.k_expr
    }

    /// Model-space shape restricted to the 68 landmark vertices (204 values).
    pub fn landmark_shape(&self, coeff: &CoefficientVector) -> Result<Vec<f64>> {
        self.shape.check_layout(coeff)?;
        let k = self.n_basis();
        let alpha = coeff.alpha();
        Ok(self
            .landmark_mean
            .iter()
            .enumerate()
            .map(|(r, m)| m + dot(&self.landmark_basis[r * k..(r + 1) * k], alpha))
            .collect())
    }

    /// Column `k` of the stacked basis restricted to the landmark vertices (204 values).
    pub fn landmark_column(&self, k: usize) -> Vec<f64> {
        let nb = self.n_basis();
        (0..3 * LANDMARK_COUNT).map(|r| self.landmark_basis[r * nb + k]).collect()
    }

    /// Projected 2D landmarks of `coeff`: sparse landmark projection `H(alpha)`.
    pub fn landmarks_2d(&self, coeff: &CoefficientVector) -> Result<LandmarkSet> {
        let s = self.landmark_shape(coeff)?;
        let cam = Camera::of(coeff)?;
        let mut pts = Vec::with_capacity(2 * LANDMARK_COUNT);
        for v in s.chunks_exact(3) {
            let p = cam.apply(&[v[0], v[1], v[2]]);
            pts.push(p[0]);
            pts.push(p[1]);
        }
        LandmarkSet::new(2, pts)
    }

    /// Camera-space 3D landmarks `f * Pi * S_lm + (t, 0)`.
    pub fn landmarks_3d(&self, coeff: &CoefficientVector) -> Result<LandmarkSet> {
        let s = self.landmark_shape(coeff)?;
        let cam = Camera::of(coeff)?;
        let mut pts = Vec::with_capacity(3 * LANDMARK_COUNT);
        for v in s.chunks_exact(3) {
            pts.extend_from_slice(&cam.apply(&[v[0], v[1], v[2]]));
        }
        LandmarkSet::new(3, pts)
    }

    /// Gradient w.r.t. `coeff` of a scalar whose gradient w.r.t. the landmark
    /// coordinates (2D projected or 3D camera-space, by `dim`) is `d_points`.
    pub fn landmark_pullback(&self, coeff: &CoefficientVector, d_points: &[f64], dim: usize) -> Result<Vec<f64>> {
        if d_points.len() != dim * LANDMARK_COUNT || !(dim == 2 || dim == 3) {
            return Err(config_err!("landmark gradient has {} values for dimension {dim}", d_points.len()));
        }
        let s = self.landmark_shape(coeff)?;
        let cam = Camera::of(coeff)?;
        let k = self.n_basis();
        let mut grad = alloc::vec![0.0; coeff.len()];
        let mut ds_all = alloc::vec![0.0; 3 * LANDMARK_COUNT];
        for i in 0..LANDMARK_COUNT {
            let d = &d_points[i * dim..(i + 1) * dim];
            let d3 = [d[0], d[1], if dim == 3 { d[2] } else { 0.0 }];
            let sv = [s[3 * i], s[3 * i + 1], s[3 * i + 2]];
            let ds = cam.pullback(&sv, &d3, &mut grad);
            ds_all[3 * i..3 * i + 3].copy_from_slice(&ds);
        }
        let g_alpha = &mut grad[CoefficientLayout::CAMERA_LEN..];
        for (r, &dsr) in ds_all.iter().enumerate() {
            if dsr != 0.0 {
                crate::linalg::axpy(dsr, &self.landmark_basis[r * k..(r + 1) * k], g_alpha);
            }
        }
        Ok(grad)
    }

    /// Projected 2D positions of all vertices.
    pub fn vertices_2d(&self, coeff: &CoefficientVector) -> Result<Vec<f64>> {
        project(&self.render_shape(coeff)?, coeff)
    }

    /// Gradient w.r.t. `coeff` given the gradient w.r.t. all projected 2D
    /// vertices (`2N` values). `shape` must be `render_shape(coeff)`.
    pub fn vertices_2d_pullback(&self, coeff: &CoefficientVector, shape: &[f64], d_vertices: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_vertices();
        if d_vertices.len() != 2 * n || shape.len() != 3 * n {
            return Err(config_err!("vertex gradient has {} values for {n} vertices", d_vertices.len()));
        }
        let cam = Camera::of(coeff)?;
        let mut grad = alloc::vec![0.0; coeff.len()];
        let mut ds_all = alloc::vec![0.0; 3 * n];
        for v in 0..n {
            let sv = [shape[3 * v], shape[3 * v + 1], shape[3 * v + 2]];
            let d3 = [d_vertices[2 * v], d_vertices[2 * v + 1], 0.0];
            let ds = cam.pullback(&sv, &d3, &mut grad);
            ds_all[3 * v..3 * v + 3].copy_from_slice(&ds);
        }
        for k in 0..self.n_basis() {
            grad[CoefficientLayout::CAMERA_LEN + k] += dot(self.shape.column(k), &ds_all);
        }
        Ok(grad)
    }
}

/// Gathers the landmark coordinates from a full `3N` shape or `2N` vertex set.
pub fn sparse_landmarks(model: &MorphableModel, points: &[f64]) -> Result<LandmarkSet> {
    let n = model.n_vertices();
    let dim = if points.len() == 3 * n {
        3
    } else if points.len() == 2 * n {
        2
    } else {
        return Err(config_err!("point set of length {} is neither 3N nor 2N for N = {n}", points.len()));
    };
    let mut out = Vec::with_capacity(dim * LANDMARK_COUNT);
    for &i in model.landmark_indices() {
        let p = points
            .get(i * dim..(i + 1) * dim)
            .ok_or_else(|| config_err!("landmark index {i} out of range"))?;
        out.extend_from_slice(p);
    }
    LandmarkSet::new(dim, out)
}
