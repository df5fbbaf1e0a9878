//! File-backed store: sample-set catalog, ballot log and session files.
//!
//! ```text
//! <root>/sets/<set_id>/...      one directory per sample set
//! <root>/ballots.jsonl          append-only ballot log
//! <root>/sessions/<id>.json     rater sessions
//! ```

use crate::log::{BallotLog, LogError};
use sha2::{Digest, Sha256};
use srss_core::image::ImageError;
use srss_core::manifest::{
    candidate_file_name, load_sample_set, load_sample_set_with, ManifestError, SetManifest,
    HR_FILE, LR_FILE, MANIFEST_FILE,
};
use srss_core::{SampleSet, ScaleFactor, Session};
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

pub const SETS_DIR: &str = "sets";
pub const SESSIONS_DIR: &str = "sessions";
pub const BALLOT_LOG: &str = "ballots.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("set `{set_id}` already exists with different content ({path})")]
    DuplicateSet { set_id: String, path: PathBuf },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A validated set on disk plus the content hashes of its rater-visible
/// files.
#[derive(Debug)]
pub struct StoredSet {
    pub dir: PathBuf,
    pub manifest: SetManifest,
    pub set: SampleSet,
    pub lr_hash: String,
    /// Content hash of candidate `i`, canonical order.
    pub candidate_hashes: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestDelta {
    pub added: Vec<String>,
    pub unchanged: Vec<String>,
}

impl IngestDelta {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.unchanged.is_empty()
    }
}

pub struct Store {
    root: PathBuf,
    catalog: BTreeMap<String, Arc<StoredSet>>,
    /// content hash -> file; only LR and candidate images are registered
    images: HashMap<String, PathBuf>,
    log: Arc<BallotLog>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<String, StoreError> {
    Ok(sha256_hex(&std::fs::read(path).map_err(io_err(path))?))
}

fn load_stored(dir: &Path) -> Result<StoredSet, StoreError> {
    let manifest = SetManifest::load(dir)?;
    let set = load_sample_set(dir)?;
    let lr_hash = hash_file(&dir.join(LR_FILE))?;
    let candidate_hashes = manifest
        .candidate_paths(dir)
        .iter()
        .map(|p| hash_file(p))
        .collect::<Result<_, _>>()?;
    Ok(StoredSet {
        dir: dir.to_path_buf(),
        manifest,
        set,
        lr_hash,
        candidate_hashes,
    })
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        out.push(entry.map_err(io_err(dir))?.path());
    }
    out.sort();
    Ok(out)
}

impl Store {
    /// Opens (creating if needed) a store and validates every set in it.
    /// The first missing or undecodable file aborts with its path.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in [SETS_DIR, SESSIONS_DIR] {
            let p = root.join(sub);
            std::fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        let mut store = Store {
            log: Arc::new(BallotLog::open(root.join(BALLOT_LOG))?),
            root,
            catalog: BTreeMap::new(),
            images: HashMap::new(),
        };
        for dir in sorted_entries(&store.root.join(SETS_DIR))? {
            if !dir.is_dir() {
                continue;
            }
            let stored = load_stored(&dir)?;
            let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if stored.manifest.set_id != name {
                return Err(StoreError::Invalid {
                    path: dir.join(MANIFEST_FILE),
                    message: format!(
                        "set_id `{}` does not match directory name `{name}`",
                        stored.manifest.set_id
                    ),
                });
            }
            store.register(stored);
        }
        Ok(store)
    }

    fn register(&mut self, stored: StoredSet) {
        self.images
            .insert(stored.lr_hash.clone(), stored.dir.join(LR_FILE));
        for (h, p) in stored
            .candidate_hashes
            .iter()
            .zip(stored.manifest.candidate_paths(&stored.dir))
        {
            self.images.insert(h.clone(), p);
        }
        self.catalog
            .insert(stored.manifest.set_id.clone(), Arc::new(stored));
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn log(&self) -> &Arc<BallotLog> {
        &self.log
    }

    pub fn set(&self, set_id: &str) -> Option<&Arc<StoredSet>> {
        self.catalog.get(set_id)
    }

    pub fn set_ids(&self) -> impl Iterator<Item = &str> {
        self.catalog.keys().map(String::as_str)
    }

    /// Path of a rater-visible image by content hash.
    pub fn image_path(&self, hash: &str) -> Option<&Path> {
        self.images.get(hash).map(PathBuf::as_path)
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.root.join(SESSIONS_DIR)
    }

    pub fn load_sessions(&self) -> Result<Vec<Session>, StoreError> {
        let mut out = Vec::new();
        for path in sorted_entries(&self.sessions_dir())? {
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            let s: Session = serde_json::from_str(&text).map_err(|e| StoreError::Invalid {
                path: path.clone(),
                message: e.to_string(),
            })?;
            out.push(s);
        }
        Ok(out)
    }

    /// Writes a session file atomically (temp file, fsync, rename).
    pub fn save_session(&self, session: &Session) -> Result<(), StoreError> {
        let dir = self.sessions_dir();
        let path = dir.join(format!("{}.json", session.session_id));
        let tmp = dir.join(format!(".{}.json.tmp", session.session_id));
        let bytes = serde_json::to_vec_pretty(session).expect("session serializes");
        write_synced(&tmp, &bytes)?;
        std::fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    /// Registers sample sets found under `dir`:
    ///
    /// * `dir` itself is a set (has `manifest.json`);
    /// * `dir` has set subdirectories with manifests;
    /// * `dir` has `lr.png` and `cand_*.png` but no manifest, in which case
    ///   the set id is the directory name and the factor is inferred.
    ///
    /// Re-ingesting identical content is a no-op; a different set under an
    /// existing id is an error.
    pub fn ingest_samples(&mut self, dir: &Path) -> Result<IngestDelta, StoreError> {
        let mut delta = IngestDelta::default();
        if dir.join(MANIFEST_FILE).is_file() {
            let m = SetManifest::load(dir)?;
            self.ingest_one(dir, m, &mut delta)?;
            return Ok(delta);
        }
        let entries = sorted_entries(dir)?;
        let loose_candidates = entries.iter().any(|p| candidate_index(p).is_some());
        if dir.join(LR_FILE).is_file() || loose_candidates {
            let m = infer_manifest(dir, &entries)?;
            self.ingest_one(dir, m, &mut delta)?;
            return Ok(delta);
        }
        for sub in entries {
            if sub.join(MANIFEST_FILE).is_file() {
                let m = SetManifest::load(&sub)?;
                self.ingest_one(&sub, m, &mut delta)?;
            }
        }
        Ok(delta)
    }

    fn ingest_one(
        &mut self,
        src: &Path,
        manifest: SetManifest,
        delta: &mut IngestDelta,
    ) -> Result<(), StoreError> {
        let set_id = manifest.set_id.clone();
        if set_id.is_empty() || set_id.contains(['/', '\\']) || set_id.starts_with('.') {
            return Err(StoreError::Invalid {
                path: src.to_path_buf(),
                message: format!("unusable set id `{set_id}`"),
            });
        }
        // decode everything before touching the store
        load_sample_set_with(src, manifest.clone())?;
        let src_lr = hash_file(&src.join(LR_FILE))?;
        let src_cands: Vec<String> = manifest
            .candidate_paths(src)
            .iter()
            .map(|p| hash_file(p))
            .collect::<Result<_, _>>()?;

        if let Some(existing) = self.catalog.get(&set_id) {
            let same = existing.lr_hash == src_lr
                && existing.candidate_hashes == src_cands
                && existing.manifest.factor == manifest.factor
                && existing.manifest.label_question == manifest.label_question;
            if !same {
                return Err(StoreError::DuplicateSet {
                    set_id,
                    path: src.to_path_buf(),
                });
            }
            delta.unchanged.push(set_id);
            return Ok(());
        }

        let sets = self.root.join(SETS_DIR);
        let staging = sets.join(format!(".staging-{set_id}"));
        if staging.exists() {
            std::fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
        }
        std::fs::create_dir_all(&staging).map_err(io_err(&staging))?;
        copy_file(&src.join(LR_FILE), &staging.join(LR_FILE))?;
        let mut names = Vec::with_capacity(manifest.candidates.len());
        for (i, p) in manifest.candidate_paths(src).iter().enumerate() {
            let name = candidate_file_name(i);
            copy_file(p, &staging.join(&name))?;
            names.push(name);
        }
        if src.join(HR_FILE).is_file() {
            copy_file(&src.join(HR_FILE), &staging.join(HR_FILE))?;
        }
        SetManifest {
            candidates: names,
            ..manifest
        }
        .save(&staging)?;

        let dest = sets.join(&set_id);
        std::fs::rename(&staging, &dest).map_err(io_err(&dest))?;
        self.register(load_stored(&dest)?);
        delta.added.push(set_id);
        Ok(())
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    use std::io::Write;
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))?;
    f.sync_all().map_err(io_err(path))
}

fn copy_file(from: &Path, to: &Path) -> Result<(), StoreError> {
    let bytes = std::fs::read(from).map_err(io_err(from))?;
    write_synced(to, &bytes)
}

/// `cand_<digits>.png` -> index
fn candidate_index(path: &Path) -> Option<usize> {
    let name = path.file_name()?.to_str()?;
    let digits = name.strip_prefix("cand_")?.strip_suffix(".png")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn infer_manifest(dir: &Path, entries: &[PathBuf]) -> Result<SetManifest, StoreError> {
    let lr_path = dir.join(LR_FILE);
    if !lr_path.is_file() {
        return Err(StoreError::Invalid {
            path: lr_path,
            message: "missing LR image".into(),
        });
    }
    let mut cands: Vec<(usize, &PathBuf)> = entries
        .iter()
        .filter_map(|p| candidate_index(p).map(|i| (i, p)))
        .collect();
    cands.sort();
    if cands.is_empty() {
        return Err(StoreError::Invalid {
            path: dir.to_path_buf(),
            message: "no cand_*.png files".into(),
        });
    }
    for (expect, (i, p)) in cands.iter().enumerate() {
        if *i != expect {
            return Err(StoreError::Invalid {
                path: (*p).clone(),
                message: format!("candidate numbering has a gap, expected index {expect}"),
            });
        }
    }
    let dims = |p: &Path| -> Result<(u32, u32), StoreError> {
        image_dimensions(p).map_err(|e| StoreError::Invalid {
            path: p.to_path_buf(),
            message: e.to_string(),
        })
    };
    let (lw, lh) = dims(&lr_path)?;
    let (cw, ch) = dims(cands[0].1)?;
    let factor = if lw > 0 && cw % lw == 0 && lh > 0 && ch % lh == 0 && cw / lw == ch / lh {
        ScaleFactor::new(cw / lw).ok()
    } else {
        None
    };
    let Some(factor) = factor else {
        return Err(StoreError::Invalid {
            path: cands[0].1.clone(),
            message: format!("{cw}x{ch} is not an integer multiple of the {lw}x{lh} LR image"),
        });
    };
    let set_id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_string();
    Ok(SetManifest {
        set_id,
        factor,
        label_question: None,
        candidates: cands
            .iter()
            .map(|(_, p)| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect(),
    })
}

fn image_dimensions(path: &Path) -> Result<(u32, u32), ImageError> {
    let img = srss_core::io::load_png(path)?;
    Ok((img.width() as u32, img.height() as u32))
}
