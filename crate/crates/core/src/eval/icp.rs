use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mat3_vec, quaternion_to_matrix, symmetric_eigen4, Mat3, Vec3, IDENTITY3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpConfig {
    pub max_iters: usize,
    /// Stop once the rms improves by less than this.
    pub tol: f64,
    pub with_scale: bool,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-12,
            with_scale: true,
        }
    }
}

/// `p -> scale * R p + t`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub scale: f64,
}

impl Similarity {
    pub const IDENTITY: Similarity = Similarity {
        rotation: IDENTITY3,
        translation: [0.0; 3],
        scale: 1.0,
    };

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        let r = mat3_vec(&self.rotation, p);
        [
            self.scale * r[0] + self.translation[0],
            self.scale * r[1] + self.translation[1],
            self.scale * r[2] + self.translation[2],
        ]
    }

    pub fn apply_all(&self, cloud: &[f64]) -> Vec<f64> {
        cloud.chunks_exact(3).flat_map(|p| self.apply(&[p[0], p[1], p[2]])).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: Similarity,
    /// `correspondences[i]` is the gt point matched to pred point `i`.
    pub correspondences: Vec<usize>,
    pub rms: f64,
    /// rms after each accepted iteration; non-increasing.
    pub rms_history: Vec<f64>,
}

fn check_cloud(c: &[f64], name: &str) -> Result<()> {
    if c.is_empty() || c.len() % 3 != 0 {
        return Err(Error::Alignment(alloc::format!("{name} cloud must hold a positive multiple of 3 values")));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(alloc::format!("{name} cloud has non-finite coordinates")));
    }
    if c.chunks_exact(3).all(|p| p == &c[..3]) {
        return Err(Error::Alignment(alloc::format!("{name} cloud is degenerate (all points identical)")));
    }
    Ok(())
}

/// Exact nearest neighbour in `dst` for every point of `src`, by full scan.
/// Ties go to the lowest index.
pub fn nearest_neighbors(src: &[f64], dst: &[f64]) -> Vec<usize> {
    src.chunks_exact(3)
        .map(|p| {
            let mut best = (f64::INFINITY, 0usize);
            for (j, q) in dst.chunks_exact(3).enumerate() {
                let d = (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) + (p[2] - q[2]) * (p[2] - q[2]);
                if d < best.0 {
                    best = (d, j);
                }
            }
            best.1
        })
        .collect()
}

fn centroid(c: &[f64]) -> Vec3 {
    let n = (c.len() / 3) as f64;
    let mut m = [0.0; 3];
    for p in c.chunks_exact(3) {
        for k in 0..3 {
            m[k] += p[k];
        }
    }
    [m[0] / n, m[1] / n, m[2] / n]
}

/// Least-squares similarity taking `src[i]` onto `dst[i]` (Horn's
/// quaternion method; scale from the optimal rotation).
pub fn fit_similarity(src: &[f64], dst: &[f64], with_scale: bool) -> Result<Similarity> {
    if src.len() != dst.len() || src.is_empty() || src.len() % 3 != 0 {
        return Err(Error::Alignment("point lists must pair up one to one".into()));
    }
    let (ps, qs) = (centroid(src), centroid(dst));
    let mut s = [[0.0f64; 3]; 3];
    let mut var_p = 0.0;
    for (p, q) in src.chunks_exact(3).zip(dst.chunks_exact(3)) {
        let a = [p[0] - ps[0], p[1] - ps[1], p[2] - ps[2]];
        let b = [q[0] - qs[0], q[1] - qs[1], q[2] - qs[2]];
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] += a[i] * b[j];
            }
        }
        var_p += a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
    }
    if var_p == 0.0 {
        return Err(Error::Alignment("source points are all identical".into()));
    }
    let [[sxx, sxy, sxz], [syx, syy, syz], [szx, szy, szz]] = s;
    let n = [
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ];
    let (vals, vecs) = symmetric_eigen4(n);
    let k = (0..4).fold(0, |b, i| if vals[i] > vals[b] { i } else { b });
    let mut q = [vecs[0][k], vecs[1][k], vecs[2][k], vecs[3][k]];
    let qn = libm::sqrt(q.iter().map(|v| v * v).sum());
    q.iter_mut().for_each(|v| *v /= qn);
    // fix the sign so the identity comes out as (1, 0, 0, 0)
    if q[0] < 0.0 {
        q.iter_mut().for_each(|v| *v = -*v);
    }
    let rotation = quaternion_to_matrix(q);
    let scale = if with_scale {
        let mut num = 0.0;
        for (p, qd) in src.chunks_exact(3).zip(dst.chunks_exact(3)) {
            let a = [p[0] - ps[0], p[1] - ps[1], p[2] - ps[2]];
            let r = mat3_vec(&rotation, &a);
            num += r[0] * (qd[0] - qs[0]) + r[1] * (qd[1] - qs[1]) + r[2] * (qd[2] - qs[2]);
        }
        num / var_p
    } else {
        1.0
    };
    let rp = mat3_vec(&rotation, &ps);
    Ok(Similarity {
        rotation,
        translation: [qs[0] - scale * rp[0], qs[1] - scale * rp[1], qs[2] - scale * rp[2]],
        scale,
    })
}

fn rms(moved: &[f64], dst: &[f64], corr: &[usize]) -> f64 {
    let mut s = 0.0;
    for (p, &j) in moved.chunks_exact(3).zip(corr) {
        let q = &dst[3 * j..3 * j + 3];
        s += (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) + (p[2] - q[2]) * (p[2] - q[2]);
    }
    libm::sqrt(s / corr.len() as f64)
}

pub fn icp_align(pred: &[f64], gt: &[f64], cfg: &IcpConfig) -> Result<IcpResult> {
    icp_align_from(pred, gt, Similarity::IDENTITY, cfg)
}

/// ICP starting from `init`. Each iteration matches every transformed pred
/// point to its nearest gt point, then refits the transform on those
/// pairs. An iteration that would raise the rms is rejected, so the history
/// is non-increasing by construction.
pub fn icp_align_from(pred: &[f64], gt: &[f64], init: Similarity, cfg: &IcpConfig) -> Result<IcpResult> {
    check_cloud(pred, "pred")?;
    check_cloud(gt, "gt")?;
    let mut transform = init;
    let mut correspondences = nearest_neighbors(&transform.apply_all(pred), gt);
    let mut current = rms(&transform.apply_all(pred), gt, &correspondences);
    let mut history = Vec::new();
    for it in 0..cfg.max_iters.max(1) {
        let corr = if it == 0 {
            correspondences.clone()
        } else {
            nearest_neighbors(&transform.apply_all(pred), gt)
        };
        let matched: Vec<f64> = corr.iter().flat_map(|&j| [gt[3 * j], gt[3 * j + 1], gt[3 * j + 2]]).collect();
        let next = fit_similarity(pred, &matched, cfg.with_scale)?;
        let r = rms(&next.apply_all(pred), gt, &corr);
        if !r.is_finite() {
            return Err(Error::Numeric("ICP rms became non-finite".into()));
        }
        if r > current && !history.is_empty() {
            break;
        }
        let improvement = current - r;
        transform = next;
        correspondences = corr;
        current = r;
        history.push(current);
        if improvement < cfg.tol {
            break;
        }
    }
    Ok(IcpResult {
        transform,
        correspondences,
        rms: current,
        rms_history: history,
    })
}
