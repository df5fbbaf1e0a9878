//! Rating protocols, rater sessions and display-order randomization.
//!
//! Raters see candidates in a per-session, per-round shuffled order and
//! answer in display positions; ballots are mapped back to canonical
//! candidate indices before validation so tallies aggregate across sessions.
//! The shuffle is fully determined by `(shuffle_seed, session_id, round)`,
//! see [`display_permutation`] and `docs/FORMAT.md`.

use crate::ensemble::{validate_ballot, Ballot, BallotRejection, SetShape};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Candidates per round in the select-only protocol.
pub const TASK2_CANDIDATES: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    /// Name what the image shows, then pick the most helpful candidates.
    #[serde(rename = "label-and-select")]
    LabelAndSelect,
    /// Pick the most natural-looking candidates.
    #[serde(rename = "select-only")]
    SelectOnly,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StudyError {
    #[error("set `{set_id}` has {found} candidates, protocol needs {expected}")]
    CandidateCount {
        set_id: String,
        expected: usize,
        found: usize,
    },
    #[error("study config is invalid: {0}")]
    InvalidConfig(String),
    #[error("session is complete")]
    SessionCompleted,
    #[error("ballot is for set `{found}` but the current round shows `{expected}`")]
    WrongRound { expected: String, found: String },
    #[error("ballot voter `{found}` does not own this session (voter `{expected}`)")]
    WrongVoter { expected: String, found: String },
    #[error(transparent)]
    Rejected(#[from] BallotRejection),
}

impl StudyError {
    pub fn code(&self) -> &'static str {
        match self {
            StudyError::CandidateCount { .. } => "candidate_count",
            StudyError::InvalidConfig(_) => "invalid_config",
            StudyError::SessionCompleted => "session_completed",
            StudyError::WrongRound { .. } => "wrong_round",
            StudyError::WrongVoter { .. } => "wrong_voter",
            StudyError::Rejected(r) => r.code(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study_id: String,
    pub task_kind: TaskKind,
    pub sets: Vec<String>,
    pub max_select: usize,
    pub candidates_per_round: usize,
    pub rounds: usize,
    #[serde(default)]
    pub allowed_labels: Option<BTreeSet<String>>,
    pub ensemble_k: usize,
    pub shuffle_seed: u64,
}

impl StudyConfig {
    /// Label-and-select over one set: two picks per rater, top five averaged.
    pub fn task1(study_id: impl Into<String>, set: &SetShape) -> Self {
        StudyConfig {
            study_id: study_id.into(),
            task_kind: TaskKind::LabelAndSelect,
            sets: vec![set.set_id.clone()],
            max_select: 2,
            candidates_per_round: set.candidates,
            rounds: 1,
            allowed_labels: None,
            ensemble_k: 5,
            shuffle_seed: 0,
        }
    }

    /// Select-only over several 15-candidate sets: up to three picks per
    /// round, top three averaged.
    pub fn task2(study_id: impl Into<String>, sets: &[SetShape]) -> Result<Self, StudyError> {
        if sets.is_empty() {
            return Err(StudyError::InvalidConfig("no sets".into()));
        }
        if let Some(s) = sets.iter().find(|s| s.candidates != TASK2_CANDIDATES) {
            return Err(StudyError::CandidateCount {
                set_id: s.set_id.clone(),
                expected: TASK2_CANDIDATES,
                found: s.candidates,
            });
        }
        Ok(StudyConfig {
            study_id: study_id.into(),
            task_kind: TaskKind::SelectOnly,
            sets: sets.iter().map(|s| s.set_id.clone()).collect(),
            max_select: 3,
            candidates_per_round: TASK2_CANDIDATES,
            rounds: sets.len(),
            allowed_labels: None,
            ensemble_k: 3,
            shuffle_seed: 0,
        })
    }

    pub fn with_allowed_labels<I, S>(mut self, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.allowed_labels = Some(labels.into_iter().map(Into::into).collect());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.shuffle_seed = seed;
        self
    }

    /// Checks the config against the sets it references; `lookup` resolves a
    /// set id to its shape.
    pub fn validate<'a, F>(&self, lookup: F) -> Result<(), StudyError>
    where
        F: Fn(&str) -> Option<&'a SetShape>,
    {
        let bad = |m: String| Err(StudyError::InvalidConfig(m));
        if self.max_select == 0 {
            return bad("max_select must be >= 1".into());
        }
        if self.ensemble_k == 0 {
            return bad("ensemble_k must be >= 1".into());
        }
        if self.rounds != self.sets.len() {
            return bad(format!(
                "rounds = {} but {} sets are listed",
                self.rounds,
                self.sets.len()
            ));
        }
        if self.sets.is_empty() {
            return bad("no sets".into());
        }
        if self.allowed_labels.as_ref().is_some_and(|l| l.is_empty()) {
            return bad("allowed_labels is empty".into());
        }
        for id in &self.sets {
            let Some(shape) = lookup(id) else {
                return bad(format!("unknown set `{id}`"));
            };
            if shape.candidates != self.candidates_per_round {
                return Err(StudyError::CandidateCount {
                    set_id: id.clone(),
                    expected: self.candidates_per_round,
                    found: shape.candidates,
                });
            }
            if self.task_kind == TaskKind::LabelAndSelect && shape.label_question.is_none() {
                return bad(format!("set `{id}` has no label_question"));
            }
            if self.ensemble_k > shape.candidates {
                return bad(format!(
                    "ensemble_k = {} exceeds the {} candidates of `{id}`",
                    self.ensemble_k, shape.candidates
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub voter_id: String,
    pub study_id: String,
    pub round_cursor: usize,
    pub completed: bool,
    /// Accepted ballots in canonical index space, one per finished round.
    #[serde(default)]
    pub ballots: Vec<Ballot>,
}

impl Session {
    pub fn new(
        session_id: impl Into<String>,
        voter_id: impl Into<String>,
        config: &StudyConfig,
    ) -> Self {
        Session {
            session_id: session_id.into(),
            voter_id: voter_id.into(),
            study_id: config.study_id.clone(),
            round_cursor: 0,
            completed: config.rounds == 0,
            ballots: Vec::new(),
        }
    }

    pub fn display_permutation(&self, config: &StudyConfig, round: usize) -> Vec<usize> {
        display_permutation(
            config.shuffle_seed,
            &self.session_id,
            round,
            config.candidates_per_round,
        )
    }
}

/// What a rater sees for one round. Carries no reference image and no
/// provenance for the candidates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundView {
    pub set_id: String,
    pub round: usize,
    pub rounds: usize,
    /// `display_order[p]` is the canonical candidate shown at position `p`.
    pub display_order: Vec<usize>,
    pub max_select: usize,
    pub label_question: Option<String>,
    pub allowed_labels: Option<BTreeSet<String>>,
}

pub fn next_round(
    session: &Session,
    config: &StudyConfig,
    set: &SetShape,
) -> Result<RoundView, StudyError> {
    if session.completed || session.round_cursor >= config.rounds {
        return Err(StudyError::SessionCompleted);
    }
    let set_id = &config.sets[session.round_cursor];
    if *set_id != set.set_id {
        return Err(StudyError::WrongRound {
            expected: set_id.clone(),
            found: set.set_id.clone(),
        });
    }
    Ok(RoundView {
        set_id: set_id.clone(),
        round: session.round_cursor,
        rounds: config.rounds,
        display_order: session.display_permutation(config, session.round_cursor),
        max_select: config.max_select,
        label_question: set.label_question.clone(),
        allowed_labels: config.allowed_labels.clone(),
    })
}

/// Maps display positions to canonical indices through `perm`. Positions
/// beyond the permutation are passed through unchanged so validation
/// reports them as out of range.
pub fn canonicalize(display: &[usize], perm: &[usize]) -> Vec<usize> {
    display
        .iter()
        .map(|&p| perm.get(p).copied().unwrap_or(p.max(perm.len())))
        .collect()
}

/// Validates a display-space ballot for the session's current round, stores
/// its canonical form and advances the session.
pub fn record_round_ballot(
    session: &mut Session,
    config: &StudyConfig,
    set: &SetShape,
    ballot: &Ballot,
) -> Result<Ballot, StudyError> {
    if session.completed || session.round_cursor >= config.rounds {
        return Err(StudyError::SessionCompleted);
    }
    let expected = &config.sets[session.round_cursor];
    if ballot.set_id != *expected {
        return Err(StudyError::WrongRound {
            expected: expected.clone(),
            found: ballot.set_id.clone(),
        });
    }
    if ballot.voter_id != session.voter_id {
        return Err(StudyError::WrongVoter {
            expected: session.voter_id.clone(),
            found: ballot.voter_id.clone(),
        });
    }
    match (&ballot.label, config.task_kind) {
        (None, TaskKind::LabelAndSelect) => return Err(BallotRejection::MissingLabel.into()),
        (Some(_), TaskKind::SelectOnly) => return Err(BallotRejection::UnexpectedLabel.into()),
        (Some(l), _) => {
            if let Some(allowed) = &config.allowed_labels {
                if !allowed.contains(l) {
                    return Err(BallotRejection::LabelNotAllowed(l.clone()).into());
                }
            }
        }
        (None, TaskKind::SelectOnly) => {}
    }

    let perm = session.display_permutation(config, session.round_cursor);
    let canonical = Ballot {
        selections: canonicalize(&ballot.selections, &perm),
        ..ballot.clone()
    };
    validate_ballot(&canonical, set, config.max_select)?;

    session.ballots.push(canonical.clone());
    session.round_cursor += 1;
    session.completed = session.round_cursor >= config.rounds;
    Ok(canonical)
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Counter-based generator: output `i` is `mix64(key + (i + 1) * GAMMA)`.
struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    fn next(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(
            self.key
                .wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)),
        )
    }

    /// Uniform in `0..bound` by rejection of the low `2^64 mod bound` values.
    fn below(&mut self, bound: u64) -> u64 {
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let r = self.next();
            if r >= threshold {
                return r % bound;
            }
        }
    }
}

pub fn permutation_key(shuffle_seed: u64, session_id: &str, round: usize) -> u64 {
    let h = fnv1a64(session_id.as_bytes());
    mix64(shuffle_seed ^ mix64(h ^ mix64((round as u64).wrapping_add(GOLDEN_GAMMA))))
}

/// Fisher-Yates shuffle of `0..n` driven by [`permutation_key`].
pub fn display_permutation(
    shuffle_seed: u64,
    session_id: &str,
    round: usize,
    n: usize,
) -> Vec<usize> {
    let mut rng = CounterRng {
        key: permutation_key(shuffle_seed, session_id, round),
        counter: 0,
    };
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    perm
}
