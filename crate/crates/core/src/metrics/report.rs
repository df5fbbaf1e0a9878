use super::{fidelity, lr_consistency_with, ssim_with, ExternalScoreTable, MetricError, PsnrMode};
use crate::exec::{self, Execution};
use crate::image::{Image, ScaleFactor};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

/// `image_id` of the per-metric mean row appended to report CSVs.
pub const MEAN_ROW_ID: &str = "#mean";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub image_id: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub mse: f64,
    pub lr_consistency_db: f64,
    pub external: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ReportOptions {
    pub psnr_mode: PsnrMode,
    pub exec: Execution,
}

pub fn build_report(
    image_id: &str,
    sr: &Image,
    hr: &Image,
    lr: &Image,
    factor: ScaleFactor,
    external: &ExternalScoreTable,
    opts: ReportOptions,
) -> Result<MetricReport, MetricError> {
    let (mse, psnr_db) = fidelity(sr, hr, opts.psnr_mode)?;
    let ssim = ssim_with(sr, hr, opts.exec)?;
    let lr_consistency_db = lr_consistency_with(sr, lr, factor, opts.psnr_mode, opts.exec)?;
    Ok(MetricReport {
        image_id: image_id.to_string(),
        psnr_db,
        ssim,
        mse,
        lr_consistency_db,
        external: external.scores_for(image_id),
    })
}

/// One SR output with its HR reference and LR input.
#[derive(Clone, Debug)]
pub struct MetricTriple {
    pub image_id: String,
    pub sr: Image,
    pub hr: Image,
    pub lr: Image,
}

/// Evaluates every triple (in parallel when `opts.exec` allows), returning
/// results sorted by `image_id`. Each triple is evaluated sequentially
/// inside, so parallelism is spent on the batch dimension only.
pub fn evaluate_batch(
    triples: &[MetricTriple],
    factor: ScaleFactor,
    external: &ExternalScoreTable,
    opts: ReportOptions,
) -> Vec<(String, Result<MetricReport, MetricError>)> {
    let inner = ReportOptions {
        exec: Execution::Sequential,
        ..opts
    };
    let mut out = exec::map_indexed(opts.exec, triples.len(), |i| {
        let t = &triples[i];
        (
            t.image_id.clone(),
            build_report(&t.image_id, &t.sr, &t.hr, &t.lr, factor, external, inner),
        )
    });
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Writes the report CSV: fixed metric columns, then one column per name in
/// `score_names` (sorted). Missing external values are empty cells. When
/// `with_mean` is set and there is at least one report, a final
/// [`MEAN_ROW_ID`] row carries per-column means.
pub fn write_report_csv<W: Write>(
    writer: W,
    reports: &[MetricReport],
    score_names: &BTreeSet<String>,
    with_mean: bool,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "image_id".to_string(),
        "psnr_db".into(),
        "ssim".into(),
        "mse".into(),
        "lr_consistency_db".into(),
    ];
    header.extend(score_names.iter().cloned());
    w.write_record(&header)?;

    let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in reports {
        let mut row = vec![
            r.image_id.clone(),
            r.psnr_db.to_string(),
            r.ssim.to_string(),
            r.mse.to_string(),
            r.lr_consistency_db.to_string(),
        ];
        row.extend(score_names.iter().map(|n| fmt(r.external.get(n).copied())));
        w.write_record(&row)?;
    }

    if with_mean && !reports.is_empty() {
        let mut row = vec![
            MEAN_ROW_ID.to_string(),
            fmt(mean(reports.iter().map(|r| r.psnr_db))),
            fmt(mean(reports.iter().map(|r| r.ssim))),
            fmt(mean(reports.iter().map(|r| r.mse))),
            fmt(mean(reports.iter().map(|r| r.lr_consistency_db))),
        ];
        row.extend(score_names.iter().map(|n| {
            fmt(mean(
                reports.iter().filter_map(|r| r.external.get(n).copied()),
            ))
        }));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
