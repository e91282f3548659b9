//! CSV artifacts: loss logs, evaluation reports, error distribution curves
//! and ablation tables. Floats use the shortest representation that reads
//! back to the same value.

use facefit_core::eval::{EdcCurve, EvalRecord, EvalReport, GroupSummary, Metric};
use facefit_core::synth::YawBucket;
use facefit_core::train::{AblationTable, RunOutcome, StepLog};

use crate::error::{AppError, AppResult};

pub const LOSS_HEADER: [&str; 8] = ["step", "l3d", "l2d_con", "l3d_con", "lcyc", "lsc", "total", "lr"];
pub const EDC_HEADER: [&str; 2] = ["nme_percent", "image_count"];

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(flexible: bool) -> Self {
        Self {
            w: csv::WriterBuilder::new().flexible(flexible).from_writer(Vec::new()),
        }
    }

    fn row<I, S>(&mut self, cells: I) -> AppResult<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(cells).map_err(|e| AppError::Other(e.to_string()))
    }

    fn finish(self) -> AppResult<Vec<u8>> {
        self.w.into_inner().map_err(|e| AppError::Other(e.to_string()))
    }
}

/// Per-step loss log. Stage-2 logs carry an extra trailing `vdc` column.
pub fn loss_log_csv(logs: &[StepLog], with_vdc: bool) -> AppResult<Vec<u8>> {
    let mut t = Table::new(false);
    let mut header: Vec<&str> = LOSS_HEADER.to_vec();
    if with_vdc {
        header.push("vdc");
    }
    t.row(&header)?;
    for l in logs {
        let b = &l.breakdown;
        let mut row = vec![
            l.step.to_string(),
            num(b.l3d),
            num(b.l2d_con),
            num(b.l3d_con),
            num(b.lcyc),
            num(b.lsc),
            num(b.total),
            num(l.lr),
        ];
        if with_vdc {
            row.push(num(l.vdc));
        }
        t.row(&row)?;
    }
    t.finish()
}

/// Critic objective and accuracy for steps that updated the critic.
pub fn critic_log_csv(logs: &[StepLog]) -> AppResult<Vec<u8>> {
    let mut t = Table::new(false);
    t.row(["step", "critic_loss", "critic_accuracy"])?;
    for l in logs.iter().filter(|l| !l.critic_loss.is_nan()) {
        t.row([l.step.to_string(), num(l.critic_loss), num(l.critic_accuracy)])?;
    }
    t.finish()
}

/// `(epoch, eval_vdc, eval_nme)` rows; epoch 0 is before the stage.
pub fn epoch_eval_csv(rows: &[(u64, f64, f64)]) -> AppResult<Vec<u8>> {
    let mut t = Table::new(false);
    t.row(["epoch", "eval_vdc", "eval_nme_2d_sparse"])?;
    for &(e, v, n) in rows {
        t.row([e.to_string(), num(v), num(n)])?;
    }
    t.finish()
}

const RECORD_HEADER: [&str; 8] = [
    "sample_id",
    "yaw_deg",
    "yaw_bucket",
    "nme_2d_sparse",
    "nme_3d_sparse",
    "nme_2d_dense",
    "nme_3d_dense",
    "nme_reconstruction",
];

/// One row per record, a blank line, then the summary block: overall and
/// per-bucket means, and the error-distribution mean of every metric.
pub fn report_csv(report: &EvalReport, discard: usize) -> AppResult<Vec<u8>> {
    let mut t = Table::new(true);
    t.row(RECORD_HEADER)?;
    for r in &report.records {
        let mut row = vec![r.sample_id.to_string(), num(r.yaw_deg), r.yaw_bucket.label().to_string()];
        row.extend(Metric::ALL.iter().map(|&m| num(r.get(m))));
        t.row(&row)?;
    }
    let mut bytes = t.finish()?;
    bytes.push(b'\n');
    let mut s = Table::new(true);
    let mut header = vec!["group".to_string(), "count".to_string()];
    header.extend(Metric::ALL.iter().map(|m| m.name().to_string()));
    s.row(&header)?;
    let group = |name: &str, g: &GroupSummary| {
        let mut row = vec![name.to_string(), g.count.to_string()];
        row.extend(Metric::ALL.iter().map(|&m| num(g.mean(m))));
        row
    };
    s.row(group("all", &report.overall))?;
    for (b, g) in YawBucket::ALL.iter().zip(&report.buckets) {
        match g {
            Some(g) => s.row(group(b.label(), g))?,
            None => s.row([b.label(), "0"])?,
        }
    }
    let kept = report.records.len().saturating_sub(discard);
    let mut row = vec![format!("edc_mean_discard_{discard}"), kept.to_string()];
    row.extend(Metric::ALL.iter().map(|&m| opt(report.edc_for(m).map(|c| c.mean))));
    s.row(&row)?;
    bytes.extend(s.finish()?);
    Ok(bytes)
}

/// Reads the record rows of a report written by [`report_csv`].
pub fn parse_report_records(bytes: &[u8]) -> AppResult<Vec<EvalRecord>> {
    let bad = |m: String| AppError::Other(format!("report: {m}"));
    let text = std::str::from_utf8(bytes).map_err(|_| bad("not UTF-8".into()))?;
    let records_part = text.split("\n\n").next().unwrap_or("");
    let mut rd = csv::ReaderBuilder::new().from_reader(records_part.as_bytes());
    let header = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != RECORD_HEADER {
        return Err(bad("unexpected header".into()));
    }
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let f = |k: usize| -> AppResult<f64> { row[k].parse().map_err(|_| bad(format!("row {}: bad number {:?}", i + 1, &row[k]))) };
        let bucket = YawBucket::ALL
            .into_iter()
            .find(|b| b.label() == &row[2])
            .ok_or_else(|| bad(format!("row {}: unknown pose bucket", i + 1)))?;
        out.push(EvalRecord {
            sample_id: row[0].parse().map_err(|_| bad(format!("row {}: bad sample id", i + 1)))?,
            yaw_deg: f(1)?,
            yaw_bucket: bucket,
            nme_2d_sparse: f(3)?,
            nme_3d_sparse: f(4)?,
            nme_2d_dense: f(5)?,
            nme_3d_dense: f(6)?,
            nme_reconstruction: f(7)?,
        });
    }
    Ok(out)
}

pub fn edc_csv(curve: &EdcCurve) -> AppResult<Vec<u8>> {
    let mut t = Table::new(false);
    t.row(EDC_HEADER)?;
    for (v, n) in curve.points() {
        t.row([num(v), n.to_string()])?;
    }
    t.finish()
}

/// Variant rows (median NME after each stage) followed by the wild-volume
/// rows (stage-2 median only).
pub fn ablation_csv(table: &AblationTable) -> AppResult<Vec<u8>> {
    let mut t = Table::new(false);
    t.row(["row", "stage1_nme", "stage2_nme", "runs_ok", "runs"])?;
    let ok = |runs: &[RunOutcome]| runs.iter().filter(|r| r.error.is_none()).count().to_string();
    for r in &table.variants {
        t.row([r.label(), opt(r.stage1_median), opt(r.stage2_median), ok(&r.runs), r.runs.len().to_string()])?;
    }
    for v in &table.volumes {
        t.row([
            format!("wild {}%", num(100.0 * v.fraction)),
            String::new(),
            opt(v.median),
            ok(&v.runs),
            v.runs.len().to_string(),
        ])?;
    }
    t.finish()
}

/// Every individual run, including failures with their error text.
pub fn ablation_runs_csv(table: &AblationTable) -> AppResult<Vec<u8>> {
    let mut t = Table::new(false);
    t.row(["row", "seed", "stage1_nme", "stage2_nme", "error"])?;
    for r in &table.variants {
        for run in &r.runs {
            t.row([r.label(), run.seed.to_string(), opt(run.stage1_nme), opt(run.stage2_nme), run.error.clone().unwrap_or_default()])?;
        }
    }
    for v in &table.volumes {
        for run in &v.runs {
            t.row([
                format!("wild {}%", num(100.0 * v.fraction)),
                run.seed.to_string(),
                opt(run.stage1_nme),
                opt(run.stage2_nme),
                run.error.clone().unwrap_or_default(),
            ])?;
        }
    }
    t.finish()
}
