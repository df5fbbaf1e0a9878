use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExternalScoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: duplicate score ({image_id}, {score_name})")]
    Duplicate {
        line: u64,
        image_id: String,
        score_name: String,
    },
    #[error("line {line}: value {value} for ({image_id}, {score_name}) is not finite")]
    NonFinite {
        line: u64,
        image_id: String,
        score_name: String,
        value: f64,
    },
}

/// Externally computed scores (LPIPS, DISTS, ...) keyed by `(image_id, score_name)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExternalScoreTable {
    rows: BTreeMap<(String, String), f64>,
}

const HEADER: [&str; 3] = ["image_id", "score_name", "value"];

impl ExternalScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExternalScoreError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| ExternalScoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(file)
    }

    /// Parses `image_id,score_name,value` CSV (header required).
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, ExternalScoreError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers().map_err(|e| ExternalScoreError::Malformed {
            line: 1,
            message: e.to_string(),
        })?;
        if header.iter().collect::<Vec<_>>() != HEADER {
            return Err(ExternalScoreError::Malformed {
                line: 1,
                message: format!("expected header `{}`", HEADER.join(",")),
            });
        }

        let mut table = Self::new();
        for record in rdr.records() {
            let record = record.map_err(|e| ExternalScoreError::Malformed {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let (image_id, score_name, raw) = (&record[0], &record[1], &record[2]);
            if image_id.is_empty() || score_name.is_empty() {
                return Err(ExternalScoreError::Malformed {
                    line,
                    message: "empty image_id or score_name".into(),
                });
            }
            let value: f64 = raw.parse().map_err(|_| ExternalScoreError::Malformed {
                line,
                message: format!("`{raw}` is not a number"),
            })?;
            table.insert_at(line, image_id, score_name, value)?;
        }
        Ok(table)
    }

    fn insert_at(
        &mut self,
        line: u64,
        image_id: &str,
        score_name: &str,
        value: f64,
    ) -> Result<(), ExternalScoreError> {
        if !value.is_finite() {
            return Err(ExternalScoreError::NonFinite {
                line,
                image_id: image_id.into(),
                score_name: score_name.into(),
                value,
            });
        }
        let key = (image_id.to_string(), score_name.to_string());
        if self.rows.contains_key(&key) {
            return Err(ExternalScoreError::Duplicate {
                line,
                image_id: key.0,
                score_name: key.1,
            });
        }
        self.rows.insert(key, value);
        Ok(())
    }

    pub fn insert(
        &mut self,
        image_id: &str,
        score_name: &str,
        value: f64,
    ) -> Result<(), ExternalScoreError> {
        self.insert_at(0, image_id, score_name, value)
    }

    pub fn get(&self, image_id: &str, score_name: &str) -> Option<f64> {
        self.rows
            .get(&(image_id.to_string(), score_name.to_string()))
            .copied()
    }

    pub fn scores_for(&self, image_id: &str) -> BTreeMap<String, f64> {
        self.rows
            .iter()
            .filter(|((id, _), _)| id == image_id)
            .map(|((_, name), v)| (name.clone(), *v))
            .collect()
    }

    pub fn score_names(&self) -> BTreeSet<String> {
        self.rows.keys().map(|(_, n)| n.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
