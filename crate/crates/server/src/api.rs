use crate::log::LogError;
use crate::store::{Store, StoreError};
use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use srss_core::ensemble::{
    ensemble_from_tally, filter_by_label, format_percent, label_consensus, tally,
};
use srss_core::study::{next_round, record_round_ballot};
use srss_core::{
    Ballot, BallotRecord, RoundView, Session, SetShape, StudyConfig, StudyError, TallyResult,
    TaskKind,
};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::Arc;
use tokio::sync::Mutex as AsyncMutex;
use tower_http::services::ServeDir;

pub const API_PREFIX: &str = "/api/v1";

#[derive(Debug, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", what)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        tracing::error!(error = %e, "request failed");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        let status = match e {
            StudyError::SessionCompleted => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ApiErrorBody {
            code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

/// The study as shown to clients: the config without its shuffle seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicStudy {
    pub study_id: String,
    pub task_kind: TaskKind,
    pub sets: Vec<String>,
    pub max_select: usize,
    pub candidates_per_round: usize,
    pub rounds: usize,
    pub allowed_labels: Option<BTreeSet<String>>,
    pub ensemble_k: usize,
}

impl From<&StudyConfig> for PublicStudy {
    fn from(c: &StudyConfig) -> Self {
        PublicStudy {
            study_id: c.study_id.clone(),
            task_kind: c.task_kind,
            sets: c.sets.clone(),
            max_select: c.max_select,
            candidates_per_round: c.candidates_per_round,
            rounds: c.rounds,
            allowed_labels: c.allowed_labels.clone(),
            ensemble_k: c.ensemble_k,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct NewSession {
    #[serde(default)]
    pub voter_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub voter_id: String,
    pub round_cursor: usize,
    pub completed: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RoundResponse {
    #[serde(flatten)]
    pub view: RoundView,
    /// Image URL per display position.
    pub candidate_urls: Vec<String>,
    pub lr_url: String,
}

/// A ballot in display positions. `voter_id` and `set_id` default to the
/// session's voter and current set.
#[derive(Debug, Serialize, Deserialize)]
pub struct BallotSubmission {
    #[serde(default)]
    pub voter_id: Option<String>,
    #[serde(default)]
    pub set_id: Option<String>,
    pub selections: Vec<usize>,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BallotAccepted {
    pub status: String,
    pub round_cursor: usize,
    pub completed: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TallyResponse {
    #[serde(flatten)]
    pub tally: TallyResult,
    pub label_filter: Option<String>,
    /// Fraction of labeled ballots per label.
    pub label_consensus: BTreeMap<String, f64>,
    /// The same, formatted with one decimal, e.g. `73.3%`.
    pub label_percent: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
struct TallyQuery {
    label: Option<String>,
}

#[derive(Debug, Deserialize)]
struct EnsembleQuery {
    k: Option<usize>,
    label: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Study(#[from] StudyError),
}

/// Shared server state: study config, store and the live session table.
pub struct App {
    config: StudyConfig,
    store: Store,
    sessions: std::sync::Mutex<HashMap<String, Arc<AsyncMutex<Session>>>>,
}

fn image_url(hash: &str) -> String {
    format!("{API_PREFIX}/images/{hash}")
}

impl App {
    /// Validates `config` against the store and restores sessions, fixing
    /// their cursors from the ballot log where a crash left them behind.
    pub fn new(config: StudyConfig, store: Store) -> Result<Self, AppError> {
        let shapes: HashMap<String, SetShape> = store
            .set_ids()
            .map(|id| (id.to_string(), store.set(id).unwrap().set.shape()))
            .collect();
        config.validate(|id| shapes.get(id))?;

        let app = App {
            config,
            store,
            sessions: Default::default(),
        };
        let mut table = HashMap::new();
        for mut s in app.store.load_sessions()? {
            if s.study_id != app.config.study_id {
                continue;
            }
            if app.reconcile(&mut s) {
                tracing::info!(session = %s.session_id, cursor = s.round_cursor, "session restored from ballot log");
                app.store.save_session(&s)?;
            }
            table.insert(s.session_id.clone(), Arc::new(AsyncMutex::new(s)));
        }
        *app.sessions.lock().unwrap() = table;
        Ok(app)
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Rebuilds the session's progress from the log: the cursor is the
    /// number of leading study sets the voter has a logged ballot for.
    /// Returns whether anything changed.
    fn reconcile(&self, s: &mut Session) -> bool {
        let records = self.store.log().snapshot();
        let mut ballots = Vec::new();
        for set_id in &self.config.sets {
            match records
                .iter()
                .find(|r| r.ballot.voter_id == s.voter_id && r.ballot.set_id == *set_id)
            {
                Some(r) => ballots.push(r.ballot.clone()),
                None => break,
            }
        }
        let cursor = ballots.len();
        let completed = cursor >= self.config.rounds;
        let changed = s.round_cursor != cursor || s.completed != completed || s.ballots != ballots;
        s.round_cursor = cursor;
        s.completed = completed;
        s.ballots = ballots;
        changed
    }

    fn session(&self, id: &str) -> Result<Arc<AsyncMutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
    }

    fn ballots_for(&self, set_id: &str, label: Option<&str>) -> Vec<Ballot> {
        let all: Vec<Ballot> = self
            .store
            .log()
            .snapshot()
            .into_iter()
            .filter(|r| r.ballot.set_id == set_id)
            .map(|r| r.ballot)
            .collect();
        match label {
            Some(l) => filter_by_label(&all, l),
            None => all,
        }
    }

    fn tally_set(&self, set_id: &str, label: Option<&str>) -> Result<TallyResult, ApiError> {
        let stored = self
            .store
            .set(set_id)
            .ok_or_else(|| ApiError::not_found(format!("unknown set `{set_id}`")))?;
        let ballots = self.ballots_for(set_id, label);
        let shape = stored.set.shape();
        // ballots were validated on the way in; only a bigger study
        // max_select than at collection time could bite here
        let max_select = self.config.max_select.max(shape.candidates);
        tally(&ballots, &shape, max_select).map_err(ApiError::internal)
    }
}

pub fn router(app: Arc<App>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/study", get(get_study))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/round", get(get_round))
        .route("/sessions/{id}/ballot", post(post_ballot))
        .route("/images/{hash}", get(get_image))
        .route("/sets/{set_id}/tally", get(get_tally))
        .route("/sets/{set_id}/ensemble", get(get_ensemble))
        .route("/export/ballots", get(export_ballots))
        .fallback(|| async { ApiError::not_found("no such endpoint") });
    let router = Router::new().nest(API_PREFIX, api).with_state(app);
    match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router.fallback(get(placeholder_index)),
    }
}

async fn placeholder_index() -> Response {
    (
        StatusCode::OK,
        [(header::CONTENT_TYPE, "text/html; charset=utf-8")],
        "<!doctype html><title>srss</title><p>No web UI bundle is configured. \
         Start the server with <code>--static-dir</code> or use the API under \
         <code>/api/v1</code>.</p>",
    )
        .into_response()
}

async fn get_study(State(app): State<Arc<App>>) -> Json<PublicStudy> {
    Json(PublicStudy::from(&app.config))
}

fn parse_json<T: serde::de::DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_request", e.to_string()))
}

async fn create_session(
    State(app): State<Arc<App>>,
    body: Bytes,
) -> Result<Json<SessionCreated>, ApiError> {
    let req: NewSession = parse_json(&body)?;
    let session_id = uuid::Uuid::new_v4().simple().to_string();
    let voter_id = match req.voter_id {
        Some(v) if v.trim().is_empty() => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_voter",
                "voter_id must not be blank",
            ))
        }
        Some(v) => v,
        None => format!("anon-{session_id}"),
    };
    let mut session = Session::new(session_id.clone(), voter_id, &app.config);
    // a returning voter resumes after the sets they already answered
    app.reconcile(&mut session);
    let app2 = app.clone();
    let s2 = session.clone();
    tokio::task::spawn_blocking(move || app2.store.save_session(&s2))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::internal)?;
    let out = SessionCreated {
        session_id: session_id.clone(),
        voter_id: session.voter_id.clone(),
        round_cursor: session.round_cursor,
        completed: session.completed,
    };
    app.sessions
        .lock()
        .unwrap()
        .insert(session_id, Arc::new(AsyncMutex::new(session)));
    Ok(Json(out))
}

fn current_set(app: &App, session: &Session) -> Result<Arc<crate::store::StoredSet>, ApiError> {
    if session.completed || session.round_cursor >= app.config.rounds {
        return Err(StudyError::SessionCompleted.into());
    }
    let id = &app.config.sets[session.round_cursor];
    app.store
        .set(id)
        .cloned()
        .ok_or_else(|| ApiError::internal(format!("set `{id}` vanished from the catalog")))
}

async fn get_round(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
) -> Result<Json<RoundResponse>, ApiError> {
    let handle = app.session(&id)?;
    let session = handle.lock().await;
    let stored = current_set(&app, &session)?;
    let view = next_round(&session, &app.config, &stored.set.shape())?;
    let candidate_urls = view
        .display_order
        .iter()
        .map(|&i| image_url(&stored.candidate_hashes[i]))
        .collect();
    Ok(Json(RoundResponse {
        view,
        candidate_urls,
        lr_url: image_url(&stored.lr_hash),
    }))
}

async fn post_ballot(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<BallotAccepted>, ApiError> {
    let sub: BallotSubmission = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_request", e.to_string()))?;
    let handle = app.session(&id)?;
    let mut session = handle.lock().await;
    let stored = current_set(&app, &session)?;
    let ballot = Ballot {
        voter_id: sub.voter_id.unwrap_or_else(|| session.voter_id.clone()),
        set_id: sub.set_id.unwrap_or_else(|| stored.manifest.set_id.clone()),
        selections: sub.selections,
        label: sub.label,
    };

    let mut next = session.clone();
    let canonical = record_round_ballot(&mut next, &app.config, &stored.set.shape(), &ballot)?;
    let record = BallotRecord {
        ballot: canonical,
        submitted_at: chrono::Utc::now(),
    };
    let app2 = app.clone();
    let saved = next.clone();
    let appended = tokio::task::spawn_blocking(move || {
        app2.store.log().append(record)?;
        // the ballot is durable at this point; a failed session write is
        // repaired from the log on restart
        if let Err(e) = app2.store.save_session(&saved) {
            tracing::warn!(error = %e, "session file not updated");
        }
        Ok::<_, LogError>(())
    })
    .await
    .map_err(ApiError::internal)?;
    match appended {
        Ok(()) => {}
        Err(e @ LogError::Duplicate { .. }) => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "duplicate_voter",
                e.to_string(),
            ))
        }
        Err(e) => return Err(ApiError::internal(e)),
    }
    *session = next;
    Ok(Json(BallotAccepted {
        status: "accepted".into(),
        round_cursor: session.round_cursor,
        completed: session.completed,
    }))
}

async fn get_image(
    State(app): State<Arc<App>>,
    Path(hash): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let path = app
        .store
        .image_path(&hash)
        .ok_or_else(|| ApiError::not_found("unknown image"))?
        .to_path_buf();
    let etag = format!("\"{hash}\"");
    let cache = [
        (
            header::CACHE_CONTROL,
            HeaderValue::from_static("public, max-age=31536000, immutable"),
        ),
        (
            header::ETAG,
            HeaderValue::from_str(&etag).map_err(ApiError::internal)?,
        ),
    ];
    let matches = headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim() == etag || t.trim() == "*"));
    if matches {
        return Ok((StatusCode::NOT_MODIFIED, cache).into_response());
    }
    let bytes = tokio::fs::read(&path).await.map_err(ApiError::internal)?;
    Ok((
        StatusCode::OK,
        cache,
        [(header::CONTENT_TYPE, HeaderValue::from_static("image/png"))],
        bytes,
    )
        .into_response())
}

async fn get_tally(
    State(app): State<Arc<App>>,
    Path(set_id): Path<String>,
    Query(q): Query<TallyQuery>,
) -> Result<Json<TallyResponse>, ApiError> {
    let t = app.tally_set(&set_id, q.label.as_deref())?;
    let consensus = label_consensus(&t).unwrap_or_default();
    let label_percent = consensus
        .iter()
        .map(|(k, &v)| (k.clone(), format_percent(v)))
        .collect();
    Ok(Json(TallyResponse {
        tally: t,
        label_filter: q.label,
        label_consensus: consensus,
        label_percent,
    }))
}

async fn get_ensemble(
    State(app): State<Arc<App>>,
    Path(set_id): Path<String>,
    Query(q): Query<EnsembleQuery>,
) -> Result<Response, ApiError> {
    let t = app.tally_set(&set_id, q.label.as_deref())?;
    if t.total_ballots == 0 {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "no_ballots",
            format!("no ballots recorded for set `{set_id}` under this filter"),
        ));
    }
    let k = q.k.unwrap_or(app.config.ensemble_k);
    let stored = app.store.set(&set_id).cloned().unwrap();
    let png = tokio::task::spawn_blocking(move || {
        let result = ensemble_from_tally(&stored.set, &t, k)?;
        let png = srss_core::io::encode_png(&result.image)
            .map_err(|e| srss_core::EnsembleError::InvalidSet(e.to_string()))?;
        Ok::<_, srss_core::EnsembleError>((png, result.selected_indices))
    })
    .await
    .map_err(ApiError::internal)?;
    let (png, selected) = png.map_err(|e| match e {
        srss_core::EnsembleError::KOutOfRange { .. } => ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "k_out_of_range",
            e.to_string(),
        ),
        other => ApiError::internal(other),
    })?;
    let selected = selected
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",");
    Ok((
        StatusCode::OK,
        [
            (header::CONTENT_TYPE, "image/png".to_string()),
            (
                header::HeaderName::from_static("x-selected-indices"),
                selected,
            ),
        ],
        png,
    )
        .into_response())
}

async fn export_ballots(State(app): State<Arc<App>>) -> Result<Response, ApiError> {
    let app2 = app.clone();
    let bytes = tokio::task::spawn_blocking(move || app2.store.log().export())
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::internal)?;
    Ok((
        StatusCode::OK,
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from(bytes),
    )
        .into_response())
}
