//! Landmark/vertex NME, error distribution curves, ICP alignment and
//! per-checkpoint reports.

mod icp;
mod metrics;
mod report;

pub use icp::{fit_similarity, icp_align, icp_align_from, nearest_neighbors, IcpConfig, IcpResult, Similarity};
pub use metrics::{edc, nme, EdcCurve};
pub use report::{
    evaluate_checkpoint, evaluate_record, mean_landmark_nme, mean_vertex_distance, reconstruction_nme, reconstruction_nme_shapes, EvalOptions, EvalPredictor,
    EvalRecord, EvalReport, GroupSummary, Metric, OraclePredictor, StackPredictor,
};
