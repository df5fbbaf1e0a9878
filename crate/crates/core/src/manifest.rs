//! On-disk sample-set layout:
//!
//! ```text
//! <set_id>/manifest.json
//! <set_id>/lr.png
//! <set_id>/cand_0000.png ... cand_<N-1>.png
//! <set_id>/hr.png            (optional, never shown to raters)
//! ```

use crate::ensemble::{EnsembleError, SampleSet, SetShape, MAX_CANDIDATES};
use crate::image::{Image, ImageError, ScaleFactor};
use crate::io::load_png;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LR_FILE: &str = "lr.png";
pub const HR_FILE: &str = "hr.png";

pub fn candidate_file_name(index: usize) -> String {
    format!("cand_{index:04}.png")
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetManifest {
    pub set_id: String,
    pub factor: ScaleFactor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_question: Option<String>,
    /// Candidate file names relative to the set directory, canonical order.
    pub candidates: Vec<String>,
}

impl SetManifest {
    pub fn load(set_dir: &Path) -> Result<Self, ManifestError> {
        let path = set_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|source| ManifestError::Io {
            path: path.clone(),
            source,
        })?;
        let m: SetManifest = serde_json::from_str(&text).map_err(|e| ManifestError::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let invalid = |message: String| ManifestError::Invalid {
            path: path.clone(),
            message,
        };
        if m.set_id.is_empty() || m.set_id.contains(['/', '\\']) || m.set_id.starts_with('.') {
            return Err(invalid(format!("unusable set_id `{}`", m.set_id)));
        }
        if m.candidates.is_empty() || m.candidates.len() > MAX_CANDIDATES {
            return Err(invalid(format!(
                "{} candidates listed, need 1..={MAX_CANDIDATES}",
                m.candidates.len()
            )));
        }
        if let Some(bad) = m
            .candidates
            .iter()
            .find(|c| c.contains(['/', '\\']) || c.starts_with('.'))
        {
            return Err(invalid(format!(
                "candidate `{bad}` must be a plain file name"
            )));
        }
        Ok(m)
    }

    pub fn save(&self, set_dir: &Path) -> Result<(), ManifestError> {
        let path = set_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|source| ManifestError::Io { path, source })
    }

    pub fn shape(&self) -> SetShape {
        SetShape {
            set_id: self.set_id.clone(),
            candidates: self.candidates.len(),
            label_question: self.label_question.clone(),
        }
    }

    pub fn candidate_paths(&self, set_dir: &Path) -> Vec<PathBuf> {
        self.candidates.iter().map(|c| set_dir.join(c)).collect()
    }
}

/// Loads and cross-checks a whole set directory. Failures name the file.
pub fn load_sample_set(set_dir: &Path) -> Result<SampleSet, ManifestError> {
    load_sample_set_with(set_dir, SetManifest::load(set_dir)?)
}

/// Like [`load_sample_set`] with the manifest supplied by the caller, for
/// directories that do not carry a `manifest.json` yet.
pub fn load_sample_set_with(
    set_dir: &Path,
    manifest: SetManifest,
) -> Result<SampleSet, ManifestError> {
    let lr = load_png(set_dir.join(LR_FILE))?;
    let f = manifest.factor.get() as usize;
    let (w, h) = (lr.width() * f, lr.height() * f);
    let mut candidates = Vec::with_capacity(manifest.candidates.len());
    for path in manifest.candidate_paths(set_dir) {
        let img: Image = load_png(&path)?;
        if img.width() != w || img.height() != h || img.channels() != lr.channels() {
            return Err(ManifestError::Invalid {
                path,
                message: format!(
                    "candidate is {}x{}x{}, expected {w}x{h}x{} (lr x{})",
                    img.width(),
                    img.height(),
                    img.channels(),
                    lr.channels(),
                    manifest.factor
                ),
            });
        }
        candidates.push(img);
    }
    SampleSet::new(
        manifest.set_id,
        lr,
        candidates,
        manifest.factor,
        manifest.label_question,
    )
    .map_err(|e: EnsembleError| ManifestError::Invalid {
        path: set_dir.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes a sample set in the standard layout, returning its directory.
pub fn write_sample_set(
    parent: &Path,
    set: &SampleSet,
    hr: Option<&Image>,
) -> Result<PathBuf, ManifestError> {
    let dir = parent.join(set.set_id());
    std::fs::create_dir_all(&dir).map_err(|source| ManifestError::Io {
        path: dir.clone(),
        source,
    })?;
    crate::io::save_png(set.lr(), dir.join(LR_FILE))?;
    let mut names = Vec::with_capacity(set.candidates().len());
    for (i, c) in set.candidates().iter().enumerate() {
        let name = candidate_file_name(i);
        crate::io::save_png(c, dir.join(&name))?;
        names.push(name);
    }
    if let Some(hr) = hr {
        crate::io::save_png(hr, dir.join(HR_FILE))?;
    }
    SetManifest {
        set_id: set.set_id().to_string(),
        factor: set.factor(),
        label_question: set.label_question().map(String::from),
        candidates: names,
    }
    .save(&dir)?;
    Ok(dir)
}
