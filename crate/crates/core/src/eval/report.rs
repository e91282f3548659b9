use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{edc, fit_similarity, icp_align_from, nme, EdcCurve, IcpConfig};
use crate::error::{config_err, Result};
use crate::model::{project, project_3d, sparse_landmarks, CoefficientVector, LandmarkSet, MorphableModel};
use crate::neural::NetworkStack;
use crate::synth::{build_input, EvalSample, YawBucket};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Nme2dSparse,
    Nme3dSparse,
    Nme2dDense,
    Nme3dDense,
    NmeReconstruction,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Nme2dSparse,
        Metric::Nme3dSparse,
        Metric::Nme2dDense,
        Metric::Nme3dDense,
        Metric::NmeReconstruction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Nme2dSparse => "nme_2d_sparse",
            Metric::Nme3dSparse => "nme_3d_sparse",
            Metric::Nme2dDense => "nme_2d_dense",
            Metric::Nme3dDense => "nme_3d_dense",
            Metric::NmeReconstruction => "nme_reconstruction",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub sample_id: usize,
    pub nme_2d_sparse: f64,
    pub nme_3d_sparse: f64,
    pub nme_2d_dense: f64,
    pub nme_3d_dense: f64,
    pub nme_reconstruction: f64,
    pub yaw_deg: f64,
    pub yaw_bucket: YawBucket,
}

impl EvalRecord {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Nme2dSparse => self.nme_2d_sparse,
            Metric::Nme3dSparse => self.nme_3d_sparse,
            Metric::Nme2dDense => self.nme_2d_dense,
            Metric::Nme3dDense => self.nme_3d_dense,
            Metric::NmeReconstruction => self.nme_reconstruction,
        }
    }
}

/// Per-metric means over a group of records, in [`Metric::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupSummary {
    pub count: usize,
    pub means: [f64; 5],
}

impl GroupSummary {
    pub fn mean(&self, m: Metric) -> f64 {
        self.means[m as usize]
    }

    fn of<'a>(records: impl Iterator<Item = &'a EvalRecord>) -> Option<Self> {
        let mut count = 0;
        let mut sums = [0.0; 5];
        for r in records {
            count += 1;
            for (s, m) in sums.iter_mut().zip(Metric::ALL) {
                *s += r.get(m);
            }
        }
        (count > 0).then(|| GroupSummary {
            count,
            means: sums.map(|s| s / count as f64),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub discard_worst: usize,
    /// Compute the pose-bucket means after the worst-case discard instead
    /// of over all images.
    pub discard_worst_in_buckets: bool,
    pub icp: IcpConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            discard_worst: 20,
            discard_worst_in_buckets: false,
            icp: IcpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Ordered by `sample_id`.
    pub records: Vec<EvalRecord>,
    pub overall: GroupSummary,
    /// One entry per [`YawBucket`]; `None` when no sample falls in it.
    pub buckets: [Option<GroupSummary>; 3],
    /// Per-metric curves, in [`Metric::ALL`] order; `None` when there are
    /// too few records for the discard.
    pub edc: Vec<(Metric, Option<EdcCurve>)>,
}

impl EvalReport {
    pub fn from_records(mut records: Vec<EvalRecord>, opts: &EvalOptions) -> Result<Self> {
        records.sort_by_key(|r| r.sample_id);
        let overall = GroupSummary::of(records.iter()).ok_or_else(|| config_err!("evaluation needs at least one sample"))?;
        let kept: Vec<EvalRecord> = if opts.discard_worst_in_buckets && records.len() > opts.discard_worst {
            // worst cases ranked by the primary 2D landmark metric
            let mut order: Vec<usize> = (0..records.len()).collect();
            order.sort_by(|&a, &b| records[a].nme_2d_sparse.total_cmp(&records[b].nme_2d_sparse).then(a.cmp(&b)));
            let mut keep = order[..records.len() - opts.discard_worst].to_vec();
            keep.sort_unstable();
            keep.into_iter().map(|i| records[i]).collect()
        } else {
            records.clone()
        };
        let buckets = YawBucket::ALL.map(|b| GroupSummary::of(kept.iter().filter(|r| r.yaw_bucket == b)));
        let mut curves = Vec::new();
        for m in Metric::ALL {
            let v: Vec<f64> = records.iter().map(|r| r.get(m)).collect();
            let c = if v.len() > opts.discard_worst { Some(edc(&v, opts.discard_worst)?) } else { None };
            curves.push((m, c));
        }
        Ok(Self {
            records,
            overall,
            buckets,
            edc: curves,
        })
    }

    pub fn edc_for(&self, m: Metric) -> Option<&EdcCurve> {
        self.edc.iter().find(|(k, _)| *k == m).and_then(|(_, c)| c.as_ref())
    }
}

/// Anything that maps evaluation samples to coefficient predictions.
pub trait EvalPredictor {
    fn predict(&self, samples: &[EvalSample]) -> Result<Vec<CoefficientVector>>;
}

/// Returns the ground truth.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePredictor;

impl EvalPredictor for OraclePredictor {
    fn predict(&self, samples: &[EvalSample]) -> Result<Vec<CoefficientVector>> {
        Ok(samples.iter().map(|s| s.gt_coeff.clone()).collect())
    }
}

/// Runs the regressor of a network stack.
#[derive(Debug, Clone, Copy)]
pub struct StackPredictor<'a> {
    pub stack: &'a NetworkStack,
    pub use_flm_input: bool,
    pub batch: usize,
}

impl EvalPredictor for StackPredictor<'_> {
    fn predict(&self, samples: &[EvalSample]) -> Result<Vec<CoefficientVector>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(self.batch.max(1)) {
            let mut input = Vec::with_capacity(chunk.len() * self.stack.input_len());
            for s in chunk {
                let flm = self.use_flm_input.then_some(&s.flm);
                build_input(&s.proxy, flm, self.stack.config.input_side, &mut input)?;
            }
            let (c, _) = self.stack.forward_regressor(&input, chunk.len())?;
            out.extend(c);
        }
        Ok(out)
    }
}

fn landmark_bbox(l: &LandmarkSet) -> (f64, f64) {
    l.bbox_size()
}

/// NME between model-space shapes after aligning `pred` onto `gt`: an
/// index-correspondence similarity fit seeds ICP, which then refines with
/// nearest-neighbour correspondences. Distances are taken over the final
/// correspondences.
pub fn reconstruction_nme_shapes(pred: &[f64], gt: &[f64], bbox: (f64, f64), icp: &IcpConfig) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(config_err!("shapes have {} and {} values", pred.len(), gt.len()));
    }
    let init = fit_similarity(pred, gt, icp.with_scale)?;
    let res = icp_align_from(pred, gt, init, icp)?;
    let moved = res.transform.apply_all(pred);
    let matched: Vec<f64> = res
        .correspondences
        .iter()
        .flat_map(|&j| [gt[3 * j], gt[3 * j + 1], gt[3 * j + 2]])
        .collect();
    nme(&moved, &matched, 3, bbox)
}

/// Reconstruction NME of two coefficient vectors, normalized by the xy box
/// of the ground-truth model-space landmarks.
pub fn reconstruction_nme(pred: &CoefficientVector, gt: &CoefficientVector, model: &MorphableModel, icp: &IcpConfig) -> Result<f64> {
    let ps = model.render_shape(pred)?;
    let gs = model.render_shape(gt)?;
    let bbox = landmark_bbox(&sparse_landmarks(model, &gs)?);
    reconstruction_nme_shapes(&ps, &gs, bbox, icp)
}

pub fn evaluate_record(
    id: usize,
    pred: &CoefficientVector,
    sample: &EvalSample,
    model: &MorphableModel,
    opts: &EvalOptions,
) -> Result<EvalRecord> {
    let gt = &sample.gt_coeff;
    let (ps, gs) = (model.render_shape(pred)?, model.render_shape(gt)?);
    let (p2, g2) = (project(&ps, pred)?, project(&gs, gt)?);
    let (p3, g3) = (project_3d(&ps, pred)?, project_3d(&gs, gt)?);
    let (pl2, gl2) = (sparse_landmarks(model, &p2)?, sparse_landmarks(model, &g2)?);
    let (pl3, gl3) = (sparse_landmarks(model, &p3)?, sparse_landmarks(model, &g3)?);
    let bbox = landmark_bbox(&gl2);
    let model_bbox = landmark_bbox(&sparse_landmarks(model, &gs)?);
    Ok(EvalRecord {
        sample_id: id,
        nme_2d_sparse: nme(pl2.as_slice(), gl2.as_slice(), 2, bbox)?,
        nme_3d_sparse: nme(pl3.as_slice(), gl3.as_slice(), 3, bbox)?,
        nme_2d_dense: nme(&p2, &g2, 2, bbox)?,
        nme_3d_dense: nme(&p3, &g3, 3, bbox)?,
        nme_reconstruction: reconstruction_nme_shapes(&ps, &gs, model_bbox, &opts.icp)?,
        yaw_deg: sample.yaw_deg,
        yaw_bucket: YawBucket::of(sample.yaw_deg),
    })
}

pub fn evaluate_checkpoint<P: EvalPredictor + ?Sized>(
    predictor: &P,
    model: &MorphableModel,
    eval_set: &[EvalSample],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let preds = predictor.predict(eval_set)?;
    if preds.len() != eval_set.len() {
        return Err(config_err!("predictor returned {} results for {} samples", preds.len(), eval_set.len()));
    }
    let records = preds
        .iter()
        .zip(eval_set)
        .enumerate()
        .map(|(i, (p, s))| evaluate_record(i, p, s, model, opts))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_records(records, opts)
}

/// Mean sparse 2D landmark NME of a predictor over an evaluation set; the
/// cheap figure used to compare training runs.
pub fn mean_landmark_nme<P: EvalPredictor + ?Sized>(predictor: &P, model: &MorphableModel, eval_set: &[EvalSample]) -> Result<f64> {
    if eval_set.is_empty() {
        return Err(config_err!("evaluation set is empty"));
    }
    let preds = predictor.predict(eval_set)?;
    let mut sum = 0.0;
    for (p, s) in preds.iter().zip(eval_set) {
        let gl = model.landmarks_2d(&s.gt_coeff)?;
        sum += nme(model.landmarks_2d(p)?.as_slice(), gl.as_slice(), 2, landmark_bbox(&gl))?;
    }
    Ok(sum / eval_set.len() as f64)
}

/// Mean vertex distance cost of a predictor over an evaluation set.
pub fn mean_vertex_distance<P: EvalPredictor + ?Sized>(predictor: &P, model: &MorphableModel, eval_set: &[EvalSample]) -> Result<f64> {
    if eval_set.is_empty() {
        return Err(config_err!("evaluation set is empty"));
    }
    let preds = predictor.predict(eval_set)?;
    let mut sum = 0.0;
    for (p, s) in preds.iter().zip(eval_set) {
        sum += crate::loss::vertex_distance_cost(p, &s.gt_coeff, model)?.value;
    }
    Ok(sum / eval_set.len() as f64)
}
