//! Batch commands behind the `srss` binary. Each command returns a
//! [`Summary`]; per-item problems are collected as failures rather than
//! aborting the run, and the process exit code is 0 only when there are
//! none.

use anyhow::{bail, Context, Result};
use serde::Serialize;
use srss_core::ensemble::{ensemble_from_tally, filter_by_label, format_percent, validate_ballot};
use srss_core::io::{load_png, save_png};
use srss_core::manifest::load_sample_set;
use srss_core::metrics::{
    evaluate_batch, write_report_csv, MetricReport, MetricTriple, ReportOptions, MEAN_ROW_ID,
};
use srss_core::{
    degrade, label_consensus, parse_ballot_log, tally, Ballot, ExternalScoreTable, PsnrMode,
    ScaleFactor, TallyResult,
};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

pub const CENTROID_ROW_ID: &str = "#centroid";

/// Triples evaluated per batch; bounds peak memory on large images.
const METRICS_BATCH: usize = 16;

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct Failure {
    pub item: String,
    pub error: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Summary {
    pub command: String,
    pub processed: usize,
    pub outputs: Vec<PathBuf>,
    pub failures: Vec<Failure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

impl Summary {
    fn new(command: &str) -> Self {
        Summary {
            command: command.into(),
            ..Default::default()
        }
    }

    fn fail(&mut self, item: impl Into<String>, error: impl ToString) {
        self.failures.push(Failure {
            item: item.into(),
            error: error.to_string(),
        });
    }

    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// PNG files directly inside `dir`, keyed by stem.
fn pngs_by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && is_png(&path) {
            out.insert(stem(&path), path);
        }
    }
    Ok(out)
}

/// Expands directories to the PNG files they contain; files pass through.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            files.extend(pngs_by_stem(p)?.into_values());
        } else {
            files.push(p.clone());
        }
    }
    files.sort_by_key(|p| (stem(p), p.clone()));
    Ok(files)
}

pub fn degraded_file_name(stem: &str, factor: ScaleFactor) -> String {
    format!("{stem}_x{factor}_lr.png")
}

/// Writes `<stem>_x<factor>_lr.png` into `out_dir` for every input.
pub fn cmd_degrade(inputs: &[PathBuf], factor: ScaleFactor, out_dir: &Path) -> Result<Summary> {
    let mut summary = Summary::new("degrade");
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for input in expand_inputs(inputs)? {
        let item = input.display().to_string();
        let result = load_png(&input)
            .and_then(|img| degrade(&img, factor))
            .and_then(|lr| {
                let out = out_dir.join(degraded_file_name(&stem(&input), factor));
                save_png(&lr, &out).map(|_| out)
            });
        summary.processed += 1;
        match result {
            Ok(out) => summary.outputs.push(out),
            Err(e) => summary.fail(item, e),
        }
    }
    Ok(summary)
}

pub struct MetricsArgs<'a> {
    pub sr_dir: &'a Path,
    pub hr_dir: &'a Path,
    pub lr_dir: &'a Path,
    pub factor: ScaleFactor,
    pub external_scores: Option<&'a Path>,
    pub psnr_mode: PsnrMode,
    pub out: &'a Path,
}

/// Pairs SR, HR and LR images by file stem and writes one report row per
/// complete triple plus a `#mean` row.
pub fn cmd_metrics(args: &MetricsArgs) -> Result<Summary> {
    let mut summary = Summary::new("metrics");
    let external = match args.external_scores {
        Some(p) => ExternalScoreTable::load(p)?,
        None => ExternalScoreTable::new(),
    };
    let sr = pngs_by_stem(args.sr_dir)?;
    let hr = pngs_by_stem(args.hr_dir)?;
    let lr = pngs_by_stem(args.lr_dir)?;

    let all: BTreeSet<&String> = sr.keys().chain(hr.keys()).chain(lr.keys()).collect();
    let mut matched = Vec::new();
    for s in all {
        let missing: Vec<&str> = [("sr", &sr), ("hr", &hr), ("lr", &lr)]
            .iter()
            .filter(|(_, m)| !m.contains_key(s))
            .map(|(n, _)| *n)
            .collect();
        if missing.is_empty() {
            matched.push(s.clone());
        } else {
            summary.fail(
                s.clone(),
                format!("unmatched stem, missing from {}", missing.join(", ")),
            );
        }
    }

    let opts = ReportOptions {
        psnr_mode: args.psnr_mode,
        ..Default::default()
    };
    let mut reports: Vec<MetricReport> = Vec::with_capacity(matched.len());
    for chunk in matched.chunks(METRICS_BATCH) {
        let mut triples = Vec::with_capacity(chunk.len());
        for s in chunk {
            let loaded = (|| {
                Ok::<_, srss_core::ImageError>(MetricTriple {
                    image_id: s.clone(),
                    sr: load_png(&sr[s])?,
                    hr: load_png(&hr[s])?,
                    lr: load_png(&lr[s])?,
                })
            })();
            match loaded {
                Ok(t) => triples.push(t),
                Err(e) => summary.fail(s.clone(), e),
            }
        }
        for (id, result) in evaluate_batch(&triples, args.factor, &external, opts) {
            match result {
                Ok(r) => reports.push(r),
                Err(e) => summary.fail(id, e),
            }
        }
        summary.processed += chunk.len();
    }
    reports.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let file = create(args.out)?;
    write_report_csv(file, &reports, &external.score_names(), true)
        .with_context(|| format!("writing {}", args.out.display()))?;
    summary.outputs.push(args.out.to_path_buf());
    Ok(summary)
}

fn create(path: &Path) -> Result<std::fs::File> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

/// Tally JSON written next to the ensembled image.
#[derive(Clone, Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct TallyFile {
    #[serde(flatten)]
    pub tally: TallyResult,
    pub k: usize,
    pub max_select: usize,
    pub label_filter: Option<String>,
    pub selected_indices: Vec<usize>,
    pub label_consensus: BTreeMap<String, f64>,
    pub label_percent: BTreeMap<String, String>,
}

pub fn tally_path_for(out_png: &Path) -> PathBuf {
    out_png.with_extension("tally.json")
}

pub struct EnsembleArgs<'a> {
    pub set_dir: &'a Path,
    pub ballots: &'a Path,
    pub k: usize,
    pub max_select: usize,
    pub label: Option<&'a str>,
    pub out: &'a Path,
}

/// Tallies a ballot log for one set and writes the top-`k` average plus the
/// tally JSON. Ballots for other sets are ignored; any invalid ballot for
/// this set aborts with its line number and nothing is written.
pub fn cmd_ensemble(args: &EnsembleArgs) -> Result<Summary> {
    let mut summary = Summary::new("ensemble");
    let set = load_sample_set(args.set_dir)?;
    let shape = set.shape();
    let text = std::fs::read_to_string(args.ballots)
        .with_context(|| format!("reading {}", args.ballots.display()))?;
    let records =
        parse_ballot_log(&text).with_context(|| format!("parsing {}", args.ballots.display()))?;
    let line_numbers = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, _)| i + 1);

    let mut ballots: Vec<Ballot> = Vec::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    let mut other_sets = 0usize;
    for (line, rec) in line_numbers.zip(records) {
        let b = rec.ballot;
        if b.set_id != shape.set_id {
            other_sets += 1;
            continue;
        }
        let item = format!("{}:{line}", args.ballots.display());
        if let Err(e) = validate_ballot(&b, &shape, args.max_select) {
            summary.fail(item, format!("voter `{}`: {e}", b.voter_id));
            continue;
        }
        if let Some(prev) = first_line.insert(b.voter_id.clone(), line) {
            summary.fail(
                item,
                format!("voter `{}` already voted on line {prev}", b.voter_id),
            );
            continue;
        }
        ballots.push(b);
    }
    summary.processed = ballots.len();
    if !summary.ok() {
        return Ok(summary);
    }

    let considered = match args.label {
        Some(l) => filter_by_label(&ballots, l),
        None => ballots,
    };
    if considered.is_empty() {
        bail!(
            "no ballots for set `{}`{}",
            shape.set_id,
            args.label
                .map(|l| format!(" with label `{l}`"))
                .unwrap_or_default()
        );
    }
    let t = tally(&considered, &shape, args.max_select)?;
    let result = ensemble_from_tally(&set, &t, args.k)?;
    let consensus = label_consensus(&t).unwrap_or_default();
    let file = TallyFile {
        label_percent: consensus
            .iter()
            .map(|(k, &v)| (k.clone(), format_percent(v)))
            .collect(),
        label_consensus: consensus,
        tally: t,
        k: args.k,
        max_select: args.max_select,
        label_filter: args.label.map(String::from),
        selected_indices: result.selected_indices.clone(),
    };

    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    save_png(&result.image, args.out)?;
    let tally_path = tally_path_for(args.out);
    std::fs::write(&tally_path, serde_json::to_string_pretty(&file)? + "\n")
        .with_context(|| format!("writing {}", tally_path.display()))?;
    summary.outputs = vec![args.out.to_path_buf(), tally_path];
    summary.details = Some(serde_json::json!({
        "selected_indices": result.selected_indices,
        "ballots_used": file.tally.total_ballots,
        "ballots_other_sets": other_sets,
    }));
    Ok(summary)
}

pub struct PdPlaneArgs<'a> {
    pub reports: &'a [PathBuf],
    pub fidelity: &'a str,
    pub perception: &'a str,
    pub out: &'a Path,
}

/// Collects `(fidelity, perception)` pairs from per-method report CSVs.
/// Cells are copied verbatim; `#`-prefixed rows such as `#mean` are
/// skipped. The method name is the report's file stem.
pub fn cmd_pd_plane(args: &PdPlaneArgs) -> Result<Summary> {
    let mut summary = Summary::new("pd-plane");
    let mut w = csv::Writer::from_writer(create(args.out)?);
    w.write_record(["method", "image_id", "fidelity", "perception"])?;
    for report in args.reports {
        let method = stem(report);
        let item = report.display().to_string();
        let mut rdr = match csv::Reader::from_path(report) {
            Ok(r) => r,
            Err(e) => {
                summary.fail(item, e);
                continue;
            }
        };
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(id_col), Some(f_col), Some(p_col)) =
            (col("image_id"), col(args.fidelity), col(args.perception))
        else {
            let missing: Vec<&str> = ["image_id", args.fidelity, args.perception]
                .into_iter()
                .filter(|c| col(c).is_none())
                .collect();
            summary.fail(item, format!("missing column(s): {}", missing.join(", ")));
            continue;
        };
        let (mut sum_f, mut sum_p, mut n) = (0.0, 0.0, 0usize);
        for (i, row) in rdr.records().enumerate() {
            let row = match row {
                Ok(r) => r,
                Err(e) => {
                    summary.fail(format!("{item}:{}", i + 2), e);
                    continue;
                }
            };
            let id = row.get(id_col).unwrap_or_default();
            if id.starts_with('#') {
                continue;
            }
            let (f, p) = (
                row.get(f_col).unwrap_or_default(),
                row.get(p_col).unwrap_or_default(),
            );
            match (f.trim().parse::<f64>(), p.trim().parse::<f64>()) {
                (Ok(fv), Ok(pv)) if fv.is_finite() && pv.is_finite() => {
                    w.write_record([method.as_str(), id, f, p])?;
                    sum_f += fv;
                    sum_p += pv;
                    n += 1;
                }
                _ => summary.fail(
                    format!("{item}:{}", i + 2),
                    format!("image `{id}`: non-numeric value ({f:?}, {p:?})"),
                ),
            }
        }
        if n > 0 {
            w.write_record([
                method.as_str(),
                CENTROID_ROW_ID,
                &(sum_f / n as f64).to_string(),
                &(sum_p / n as f64).to_string(),
            ])?;
        }
        summary.processed += n;
    }
    w.flush()?;
    summary.outputs.push(args.out.to_path_buf());
    Ok(summary)
}

/// Ingests sample-set directories into a store.
pub fn cmd_ingest(root: &Path, dirs: &[PathBuf]) -> Result<Summary> {
    let mut summary = Summary::new("ingest");
    let mut store = srss_server::Store::open(root)?;
    let (mut added, mut unchanged) = (Vec::new(), Vec::new());
    for dir in dirs {
        match store.ingest_samples(dir) {
            Ok(delta) => {
                summary.processed += delta.added.len() + delta.unchanged.len();
                added.extend(delta.added);
                unchanged.extend(delta.unchanged);
            }
            Err(e) => summary.fail(dir.display().to_string(), e),
        }
    }
    summary.details = Some(serde_json::json!({ "added": added, "unchanged": unchanged }));
    Ok(summary)
}

/// Reads a report CSV back into `(image_id, column) -> cell`, skipping
/// sentinel rows. Used by tests and handy for scripting.
pub fn read_report_column(path: &Path, column: &str) -> Result<BTreeMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let Some(c) = headers.iter().position(|h| h == column) else {
        bail!("{}: no column `{column}`", path.display());
    };
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let id = row.get(0).unwrap_or_default();
        if id != MEAN_ROW_ID {
            out.insert(id.to_string(), row.get(c).unwrap_or_default().to_string());
        }
    }
    Ok(out)
}
