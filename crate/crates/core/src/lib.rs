//! Human-in-the-loop selection and ensembling of stochastic super-resolution
//! samples.
//!
//! A generator produces many plausible SR candidates for one LR input. Raters
//! pick the candidates they find most convincing, the picks are tallied by
//! plain majority, and the top-`k` candidates are averaged pixel by pixel
//! into one output. Around that core this crate provides the bicubic
//! degradation model, full-reference metrics (PSNR, SSIM, LR-consistency)
//! and the study protocol types used by the collection server.
//!
//! With the default `parallel` feature the image kernels and batch metric
//! evaluation run on rayon; see [`exec::Execution`].

pub mod ensemble;
pub mod exec;
pub mod image;
pub mod io;
pub mod manifest;
pub mod metrics;
pub mod resample;
pub mod study;

pub use ensemble::{
    ensemble_pipeline, label_consensus, parse_ballot_log, pixel_average, select_top_k, tally,
    validate_ballot, Ballot, BallotRecord, BallotRejection, EnsembleError, EnsembleResult,
    SampleSet, SetShape, TallyResult,
};
pub use exec::Execution;
pub use image::{crop, tile_replicate, to_luma, Image, ImageError, ScaleFactor};
pub use metrics::{
    lr_consistency, mse, psnr, ssim, ExternalScoreTable, MetricError, MetricReport, PsnrMode,
    PSNR_CAP_DB,
};
pub use resample::{bicubic_resize, degrade, ResampleSpec};
pub use study::{RoundView, Session, StudyConfig, StudyError, TaskKind};
