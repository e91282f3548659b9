//! The morphable face model and its camera.

mod coeff;
mod flm;
mod landmarks;
mod morphable;
pub mod synthetic;

pub use coeff::{CoefficientLayout, CoefficientVector};
pub use flm::{rasterize_flm, FacialLandmarkMap, Rasterized, DEFAULT_RESOLUTION};
pub use landmarks::{idx, LandmarkSet, LANDMARK_COUNT};
pub use morphable::{project, project_3d, sparse_landmarks, LinearShapeModel, MorphableModel, ORTHONORMAL_TOL};
#[allow(unused_imports)]
pub(crate) use morphable::Camera;

#[cfg(test)]
mod tests {
    use super::synthetic::{generate_model, SyntheticModelConfig};
    use super::*;
    use crate::linalg::{rotation_from_euler, IDENTITY3};
    use crate::rng;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn small_model() -> MorphableModel {
        generate_model(&SyntheticModelConfig {
            seed: 3,
            n_vertices: 120,
            k_shape: 6,
            k_expr: 3,
        })
        .unwrap()
    }

    fn random_coeff(seed: u64, layout: CoefficientLayout) -> CoefficientVector {
        let mut r = rng::stream(seed, 0);
        let raw: Vec<f64> = (0..layout.len()).map(|_| rng::normal(&mut r, 0.0, 1.0)).collect();
        CoefficientVector::from_raw(layout, raw).unwrap()
    }

    #[test]
    fn zero_coefficients_render_the_mean() {
        let m = small_model();
        let s = m.render_shape(&CoefficientVector::identity(m.layout())).unwrap();
        assert_eq!(s, m.shape_model().mean_shape());
    }

    #[test]
    fn unit_coefficient_selects_a_basis_column() {
        let m = small_model();
        let mut c = CoefficientVector::zeros(m.layout());
        c.as_mut_slice()[CoefficientLayout::CAMERA_LEN] = 1.0;
        let s = m.render_shape(&c).unwrap();
        let mean = m.shape_model().mean_shape();
        let col = m.shape_model().column(0);
        for i in 0..s.len() {
            assert_eq!(s[i], mean[i] + col[i]);
        }
    }

    #[test]
    fn four_vertex_render_matches_triple_loop() {
        let mut r = rng::stream(5, 0);
        let rows = 12;
        let (ks, ke) = (3, 2);
        let mean: Vec<f64> = (0..rows).map(|_| rng::normal(&mut r, 0.0, 1.0)).collect();
        let a_s: Vec<f64> = (0..rows * ks).map(|_| rng::normal(&mut r, 0.0, 1.0)).collect();
        let a_e: Vec<f64> = (0..rows * ke).map(|_| rng::normal(&mut r, 0.0, 1.0)).collect();
        let model = LinearShapeModel::new(mean.clone(), a_s.clone(), ks, a_e.clone(), ke).unwrap();
        let c = random_coeff(9, CoefficientLayout::new(ks, ke));
        let s = model.render(&c).unwrap();
        for v in 0..4 {
            for d in 0..3 {
                let row = 3 * v + d;
                let mut acc = mean[row];
                for k in 0..ks {
                    acc += a_s[k * rows + row] * c.alpha_shape()[k];
                }
                for k in 0..ke {
                    acc += a_e[k * rows + row] * c.alpha_expr()[k];
                }
                assert!((s[row] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn render_rejects_layout_mismatch() {
        let m = small_model();
        let c = CoefficientVector::zeros(CoefficientLayout::default());
        assert!(matches!(m.render_shape(&c), Err(crate::Error::Config(_))));
    }

    fn camera(f: f64, t: [f64; 2], pi: &crate::linalg::Mat3) -> CoefficientVector {
        CoefficientVector::from_parts(f, t, pi, &[], &[])
    }

    #[test]
    fn projection_scales_then_translates() {
        let c = camera(2.0, [10.0, 20.0], &IDENTITY3);
        assert_eq!(project(&[1.0, 2.0, 3.0], &c).unwrap(), alloc::vec![12.0, 24.0]);
        let id = camera(1.0, [0.0, 0.0], &IDENTITY3);
        assert_eq!(project(&[1.5, -2.0, 7.0, 0.0, 3.0, 1.0], &id).unwrap(), alloc::vec![1.5, -2.0, 0.0, 3.0]);
    }

    #[test]
    fn projection_applies_rotation_about_z() {
        let rz = rotation_from_euler(0.0, 0.0, core::f64::consts::FRAC_PI_2);
        let c = camera(1.0, [0.0, 0.0], &rz);
        let p = project(&[1.0, 0.0, 0.0], &c).unwrap();
        assert!(p[0].abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn projection_rejects_non_finite_camera() {
        let c = camera(f64::NAN, [0.0, 0.0], &IDENTITY3);
        assert!(matches!(project(&[1.0, 2.0, 3.0], &c), Err(crate::Error::Numeric(_))));
    }

    #[test]
    fn sparse_landmarks_gather_in_order() {
        let m = small_model();
        let c = random_coeff(2, m.layout());
        let shape = m.render_shape(&c).unwrap();
        let verts = project(&shape, &c).unwrap();
        let l3 = sparse_landmarks(&m, &shape).unwrap();
        let l2 = sparse_landmarks(&m, &verts).unwrap();
        assert_eq!((l3.dim(), l2.dim()), (3, 2));
        for (i, &v) in m.landmark_indices().iter().enumerate() {
            assert_eq!(l3.point(i), &shape[3 * v..3 * v + 3]);
            assert_eq!(l2.point(i), &verts[2 * v..2 * v + 2]);
        }
        assert!(sparse_landmarks(&m, &shape[..30]).is_err());
    }

    #[test]
    fn zero_coefficient_landmarks_equal_projected_mean() {
        let m = small_model();
        let mut c = CoefficientVector::zeros(m.layout());
        c.as_mut_slice()[..CoefficientLayout::CAMERA_LEN]
            .copy_from_slice(camera(40.0, [60.0, 60.0], &IDENTITY3).as_slice());
        let lm = m.landmarks_2d(&c).unwrap();
        let via_mean = sparse_landmarks(&m, &project(m.shape_model().mean_shape(), &c).unwrap()).unwrap();
        assert_eq!(lm, via_mean);
    }

    #[test]
    fn fast_landmark_paths_match_full_render() {
        let m = small_model();
        let c = random_coeff(4, m.layout());
        let shape = m.render_shape(&c).unwrap();
        let full2 = sparse_landmarks(&m, &project(&shape, &c).unwrap()).unwrap();
        let full3 = sparse_landmarks(&m, &project_3d(&shape, &c).unwrap()).unwrap();
        let fast2 = m.landmarks_2d(&c).unwrap();
        let fast3 = m.landmarks_3d(&c).unwrap();
        for (a, b) in full2.as_slice().iter().zip(fast2.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in full3.as_slice().iter().zip(fast3.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn fd_check(f: impl Fn(&CoefficientVector) -> f64, analytic: &[f64], c: &CoefficientVector) {
        let h = 1e-6;
        for i in 0..c.len() {
            let mut p = c.clone();
            p.as_mut_slice()[i] += h;
            let mut q = c.clone();
            q.as_mut_slice()[i] -= h;
            let num = (f(&p) - f(&q)) / (2.0 * h);
            let denom = analytic[i].abs().max(num.abs()).max(1e-3);
            assert!((num - analytic[i]).abs() / denom < 1e-5, "coord {i}: {num} vs {}", analytic[i]);
        }
    }

    #[test]
    fn landmark_pullbacks_match_finite_differences() {
        let m = small_model();
        let c = random_coeff(6, m.layout());
        let mut r = rng::stream(6, 1);
        let w2: Vec<f64> = (0..136).map(|_| rng::normal(&mut r, 0.0, 1.0)).collect();
        let w3: Vec<f64> = (0..204).map(|_| rng::normal(&mut r, 0.0, 1.0)).collect();
        let g2 = m.landmark_pullback(&c, &w2, 2).unwrap();
        fd_check(|c| crate::linalg::dot(m.landmarks_2d(c).unwrap().as_slice(), &w2), &g2, &c);
        let g3 = m.landmark_pullback(&c, &w3, 3).unwrap();
        fd_check(|c| crate::linalg::dot(m.landmarks_3d(c).unwrap().as_slice(), &w3), &g3, &c);
        let wv: Vec<f64> = (0..2 * m.n_vertices()).map(|_| rng::normal(&mut r, 0.0, 1.0)).collect();
        let gv = m.vertices_2d_pullback(&c, &m.render_shape(&c).unwrap(), &wv).unwrap();
        fd_check(|c| crate::linalg::dot(&m.vertices_2d(c).unwrap(), &wv), &gv, &c);
    }

    proptest! {
        #[test]
        fn render_is_affine_in_alpha(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let m = small_model();
            let c1 = random_coeff(seed, m.layout());
            let c2 = random_coeff(seed + 7919, m.layout());
            let mix: Vec<f64> = c1.as_slice().iter().zip(c2.as_slice()).map(|(x, y)| a * x + b * y).collect();
            let mix = CoefficientVector::from_raw(m.layout(), mix).unwrap();
            let s1 = m.render_shape(&c1).unwrap();
            let s2 = m.render_shape(&c2).unwrap();
            let sm = m.render_shape(&mix).unwrap();
            let mean = m.shape_model().mean_shape();
            for i in 0..sm.len() {
                let expect = a * s1[i] + b * s2[i] - (a + b - 1.0) * mean[i];
                prop_assert!((sm[i] - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
            }
        }

        #[test]
        fn projection_commutes_with_gather(seed in 0u64..1000) {
            let m = small_model();
            let c = random_coeff(seed, m.layout());
            let shape = m.render_shape(&c).unwrap();
            let a = sparse_landmarks(&m, &project(&shape, &c).unwrap()).unwrap();
            let lm3 = sparse_landmarks(&m, &shape).unwrap();
            let b = project(lm3.as_slice(), &c).unwrap();
            prop_assert_eq!(a.as_slice(), &b[..]);
        }
    }
}
