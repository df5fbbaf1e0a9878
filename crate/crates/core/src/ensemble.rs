//! Majority-vote selection over a candidate set and pixel-wise averaging of
//! the winners.
//!
//! Raters submit [`Ballot`]s naming a few candidate indices (and optionally a
//! perceived label). [`tally`] counts how often each candidate was picked and
//! ranks candidates by `(votes desc, index asc)`; the `k` best are averaged
//! sample-by-sample into the final image.

use crate::exec::{self, Execution};
use crate::image::{Image, ScaleFactor};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use thiserror::Error;

/// Upper bound on candidates per set.
pub const MAX_CANDIDATES: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BallotRejection {
    #[error("selection is empty")]
    EmptySelection,
    #[error("candidate {0} selected more than once")]
    DuplicateIndex(usize),
    #[error("candidate index {index} out of range (set has {candidates})")]
    IndexOutOfRange { index: usize, candidates: usize },
    #[error("{selected} selections exceed the limit of {max_select}")]
    OverLimit { selected: usize, max_select: usize },
    #[error("ballot targets set `{found}`, expected `{expected}`")]
    WrongSet { expected: String, found: String },
    #[error("label `{0}` is not one of the allowed labels")]
    LabelNotAllowed(String),
    #[error("this task requires a label")]
    MissingLabel,
    #[error("this task does not take a label")]
    UnexpectedLabel,
}

impl BallotRejection {
    /// Stable machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            BallotRejection::EmptySelection => "empty_selection",
            BallotRejection::DuplicateIndex(_) => "duplicate_index",
            BallotRejection::IndexOutOfRange { .. } => "index_out_of_range",
            BallotRejection::OverLimit { .. } => "over_limit",
            BallotRejection::WrongSet { .. } => "wrong_set",
            BallotRejection::LabelNotAllowed(_) => "label_not_allowed",
            BallotRejection::MissingLabel => "missing_label",
            BallotRejection::UnexpectedLabel => "unexpected_label",
        }
    }
}

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("ballot from `{voter_id}` rejected: {reason}")]
    InvalidBallot {
        voter_id: String,
        reason: BallotRejection,
    },
    #[error("voter `{0}` submitted more than one ballot for this set")]
    DuplicateVoter(String),
    #[error("k = {k} is outside 1..={candidates}")]
    KOutOfRange { k: usize, candidates: usize },
    #[error("cannot average an empty list of images")]
    NoImages,
    #[error("image {index} has a different shape from image 0")]
    ShapeMismatch { index: usize },
    #[error("no ballot carries a label")]
    NoLabeledBallots,
    #[error("invalid sample set: {0}")]
    InvalidSet(String),
}

/// One rater's picks for one sample set, in canonical candidate indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballot {
    pub voter_id: String,
    pub set_id: String,
    pub selections: Vec<usize>,
    #[serde(default)]
    pub label: Option<String>,
}

/// A ballot as stored in the append-only log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallotRecord {
    #[serde(flatten)]
    pub ballot: Ballot,
    pub submitted_at: DateTime<Utc>,
}

/// The parts of a sample set that ballot validation needs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetShape {
    pub set_id: String,
    pub candidates: usize,
    #[serde(default)]
    pub label_question: Option<String>,
}

/// An LR input and its candidate SR images.
#[derive(Clone, Debug)]
pub struct SampleSet {
    set_id: String,
    lr: Image,
    candidates: Vec<Image>,
    factor: ScaleFactor,
    label_question: Option<String>,
}

impl SampleSet {
    pub fn new(
        set_id: impl Into<String>,
        lr: Image,
        candidates: Vec<Image>,
        factor: ScaleFactor,
        label_question: Option<String>,
    ) -> Result<Self, EnsembleError> {
        let set_id = set_id.into();
        if candidates.is_empty() || candidates.len() > MAX_CANDIDATES {
            return Err(EnsembleError::InvalidSet(format!(
                "candidate count {} outside 1..={MAX_CANDIDATES}",
                candidates.len()
            )));
        }
        let f = factor.get() as usize;
        let (w, h) = (lr.width() * f, lr.height() * f);
        for (i, c) in candidates.iter().enumerate() {
            if c.width() != w || c.height() != h || c.channels() != lr.channels() {
                return Err(EnsembleError::InvalidSet(format!(
                    "candidate {i} is {}x{}x{}, expected {w}x{h}x{}",
                    c.width(),
                    c.height(),
                    c.channels(),
                    lr.channels()
                )));
            }
        }
        Ok(SampleSet {
            set_id,
            lr,
            candidates,
            factor,
            label_question,
        })
    }

    pub fn set_id(&self) -> &str {
        &self.set_id
    }

    pub fn lr(&self) -> &Image {
        &self.lr
    }

    pub fn candidates(&self) -> &[Image] {
        &self.candidates
    }

    pub fn factor(&self) -> ScaleFactor {
        self.factor
    }

    pub fn label_question(&self) -> Option<&str> {
        self.label_question.as_deref()
    }

    pub fn shape(&self) -> SetShape {
        SetShape {
            set_id: self.set_id.clone(),
            candidates: self.candidates.len(),
            label_question: self.label_question.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyResult {
    pub set_id: String,
    pub votes: Vec<usize>,
    pub ranking: Vec<usize>,
    pub label_counts: BTreeMap<String, usize>,
    pub total_ballots: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub selected_indices: Vec<usize>,
    pub image: Image,
    pub k: usize,
}

/// Checks the selection rules; the first violated rule is reported.
pub fn validate_ballot(
    ballot: &Ballot,
    set: &SetShape,
    max_select: usize,
) -> Result<(), BallotRejection> {
    if ballot.set_id != set.set_id {
        return Err(BallotRejection::WrongSet {
            expected: set.set_id.clone(),
            found: ballot.set_id.clone(),
        });
    }
    let sel = &ballot.selections;
    if sel.is_empty() {
        return Err(BallotRejection::EmptySelection);
    }
    let mut seen = HashSet::with_capacity(sel.len());
    for &i in sel {
        if i >= set.candidates {
            return Err(BallotRejection::IndexOutOfRange {
                index: i,
                candidates: set.candidates,
            });
        }
        if !seen.insert(i) {
            return Err(BallotRejection::DuplicateIndex(i));
        }
    }
    if sel.len() > max_select {
        return Err(BallotRejection::OverLimit {
            selected: sel.len(),
            max_select,
        });
    }
    Ok(())
}

/// Orders candidate indices by `(votes desc, index asc)`.
pub fn rank_by_votes(votes: &[usize]) -> Vec<usize> {
    let mut ranking: Vec<usize> = (0..votes.len()).collect();
    ranking.sort_by(|&a, &b| votes[b].cmp(&votes[a]).then(a.cmp(&b)));
    ranking
}

pub fn tally(
    ballots: &[Ballot],
    set: &SetShape,
    max_select: usize,
) -> Result<TallyResult, EnsembleError> {
    let mut votes = vec![0usize; set.candidates];
    let mut label_counts = BTreeMap::new();
    let mut voters = HashSet::with_capacity(ballots.len());
    for b in ballots {
        validate_ballot(b, set, max_select).map_err(|reason| EnsembleError::InvalidBallot {
            voter_id: b.voter_id.clone(),
            reason,
        })?;
        if !voters.insert(b.voter_id.as_str()) {
            return Err(EnsembleError::DuplicateVoter(b.voter_id.clone()));
        }
        for &i in &b.selections {
            votes[i] += 1;
        }
        if let Some(label) = &b.label {
            *label_counts.entry(label.clone()).or_insert(0) += 1;
        }
    }
    Ok(TallyResult {
        set_id: set.set_id.clone(),
        ranking: rank_by_votes(&votes),
        votes,
        label_counts,
        total_ballots: ballots.len(),
    })
}

pub fn select_top_k(tally: &TallyResult, k: usize) -> Result<Vec<usize>, EnsembleError> {
    let n = tally.ranking.len();
    if k == 0 || k > n {
        return Err(EnsembleError::KOutOfRange { k, candidates: n });
    }
    Ok(tally.ranking[..k].to_vec())
}

pub fn pixel_average(images: &[&Image]) -> Result<Image, EnsembleError> {
    pixel_average_with(images, Execution::default())
}

pub fn pixel_average_with(images: &[&Image], exec: Execution) -> Result<Image, EnsembleError> {
    let first = *images.first().ok_or(EnsembleError::NoImages)?;
    if let Some(index) = images.iter().position(|img| !img.same_shape(first)) {
        return Err(EnsembleError::ShapeMismatch { index });
    }
    let n = images.len() as f64;
    let stride = first.stride();
    let mut data = vec![0.0; first.data().len()];
    exec::fill_chunks(exec, &mut data, stride, |y, row| {
        for img in images {
            for (acc, v) in row.iter_mut().zip(img.row(y)) {
                *acc += v;
            }
        }
        row.iter_mut().for_each(|v| *v /= n);
    });
    Ok(Image::from_unclamped(
        first.width(),
        first.height(),
        first.channels(),
        data,
    ))
}

/// Share of each label among labeled ballots.
pub fn label_consensus(tally: &TallyResult) -> Result<BTreeMap<String, f64>, EnsembleError> {
    let labeled: usize = tally.label_counts.values().sum();
    if labeled == 0 {
        return Err(EnsembleError::NoLabeledBallots);
    }
    Ok(tally
        .label_counts
        .iter()
        .map(|(l, &c)| (l.clone(), c as f64 / labeled as f64))
        .collect())
}

/// Formats a fraction as a percentage with one decimal, e.g. `73.3%`.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.1}%", fraction * 100.0)
}

/// Keeps only ballots whose label equals `label`.
pub fn filter_by_label<'a>(
    ballots: impl IntoIterator<Item = &'a Ballot>,
    label: &str,
) -> Vec<Ballot> {
    ballots
        .into_iter()
        .filter(|b| b.label.as_deref() == Some(label))
        .cloned()
        .collect()
}

/// Averages the `k` best-ranked candidates of an existing tally.
pub fn ensemble_from_tally(
    set: &SampleSet,
    tally: &TallyResult,
    k: usize,
) -> Result<EnsembleResult, EnsembleError> {
    if tally.votes.len() != set.candidates.len() {
        return Err(EnsembleError::InvalidSet(format!(
            "tally covers {} candidates but the set has {}",
            tally.votes.len(),
            set.candidates.len()
        )));
    }
    let selected_indices = select_top_k(tally, k)?;
    let picked: Vec<&Image> = selected_indices
        .iter()
        .map(|&i| &set.candidates[i])
        .collect();
    Ok(EnsembleResult {
        image: pixel_average(&picked)?,
        selected_indices,
        k,
    })
}

/// Tally, take the top `k`, average.
pub fn ensemble_pipeline(
    set: &SampleSet,
    ballots: &[Ballot],
    k: usize,
    max_select: usize,
) -> Result<EnsembleResult, EnsembleError> {
    let t = tally(ballots, &set.shape(), max_select)?;
    ensemble_from_tally(set, &t, k)
}

#[derive(Debug, Error)]
#[error("ballot log line {line}: {message}")]
pub struct BallotLogError {
    pub line: usize,
    pub message: String,
}

/// Parses a JSONL ballot log. Blank lines are skipped; line numbers are
/// 1-based.
pub fn parse_ballot_log(text: &str) -> Result<Vec<BallotRecord>, BallotLogError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| BallotLogError {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
