//! HTTP API: prediction, identity, live sessions with an event stream, and
//! the study statistics.

pub mod error;
pub mod store;

use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::sync::broadcast::error::RecvError;
use tokio::sync::broadcast::Receiver;

pub use error::ApiError;
pub use store::{SessionStore, Slot};

use crate::fer::{FerModel, IdentityGallery};
use crate::landmark::LandmarkSet;
use crate::sessions::{
    Clock, Command, EventBody, LoggingDriver, RobotDriver, Session, SessionEvent, SessionSpec, SessionStatus,
    SystemClock,
};
use crate::stats::{self, CategoryMap, Group, Pairing, PainRecord, UtautResponse, SELECTED_QUESTIONS};

#[derive(Debug, Clone)]
pub struct ApiConfig {
    pub addr: SocketAddr,
    pub model_path: Option<PathBuf>,
    pub data_dir: PathBuf,
    pub gallery_path: Option<PathBuf>,
    pub max_sessions: usize,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            model_path: None,
            data_dir: PathBuf::from("data"),
            gallery_path: None,
            max_sessions: 64,
        }
    }
}

pub struct AppState {
    pub model: Option<Arc<FerModel>>,
    model_hash: Option<String>,
    pub gallery: Mutex<IdentityGallery>,
    gallery_path: Option<PathBuf>,
    pub store: SessionStore,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn build_hash() -> &'static str {
    static HASH: OnceLock<String> = OnceLock::new();
    HASH.get_or_init(|| {
        std::env::current_exe()
            .and_then(std::fs::read)
            .map(|b| sha256_hex(&b))
            .unwrap_or_else(|_| sha256_hex(env!("CARGO_PKG_VERSION").as_bytes()))
    })
}

impl AppState {
    pub fn new(config: &ApiConfig, clock: Arc<dyn Clock>, driver: Arc<dyn RobotDriver>) -> Result<Self, ApiError> {
        let (model, model_hash) = match &config.model_path {
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|e| ApiError::internal(format!("{}: {e}", p.display())))?;
                let model = FerModel::from_bytes(&bytes).map_err(|e| ApiError::internal(e.to_string()))?;
                (Some(Arc::new(model)), Some(sha256_hex(&bytes)))
            }
            None => (None, None),
        };
        let gallery = match &config.gallery_path {
            Some(p) if p.exists() => IdentityGallery::load(p)?,
            _ => IdentityGallery::default(),
        };
        Ok(AppState {
            model,
            model_hash,
            gallery: Mutex::new(gallery),
            gallery_path: config.gallery_path.clone(),
            store: SessionStore::open(&config.data_dir, config.max_sessions, clock, driver)?,
        })
    }

    /// Uses an in-memory model instead of a checkpoint file.
    pub fn with_model(mut self, model: FerModel) -> Self {
        self.model_hash = Some(sha256_hex(&model.to_bytes()));
        self.model = Some(Arc::new(model));
        self
    }

    fn model(&self) -> Result<Arc<FerModel>, ApiError> {
        self.model
            .clone()
            .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "model_not_loaded", "no model checkpoint loaded"))
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes, status: StatusCode) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(status, "invalid_payload", e.to_string()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/healthz", get(healthz))
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}", get(session_snapshot))
        .route("/v1/sessions/{id}/commands", post(session_command))
        .route("/v1/sessions/{id}/stream", get(session_stream))
        .route("/v1/fer/predict", post(predict))
        .route("/v1/identity/enroll", post(enroll))
        .route("/v1/identity/identify", post(identify))
        .route("/v1/stats/pain", post(stats_pain))
        .route("/v1/stats/utaut", post(stats_utaut))
        .with_state(state)
}

/// Binds and serves until the process is stopped.
pub async fn serve(config: ApiConfig) -> Result<(), ApiError> {
    let state = AppState::new(&config, Arc::new(SystemClock), Arc::new(LoggingDriver))?;
    let listener = tokio::net::TcpListener::bind(config.addr)
        .await
        .map_err(|e| ApiError::internal(format!("bind {}: {e}", config.addr)))?;
    log::info!("listening on {}", config.addr);
    axum::serve(listener, router(Arc::new(state)))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))
}

async fn healthz(State(st): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "build_sha256": build_hash(),
        "model_loaded": st.model.is_some(),
        "model_sha256": st.model_hash,
        "sessions": st.store.ids().len(),
    }))
}

fn snapshot(s: &Session) -> Value {
    let game = s.game().map(|g| {
        json!({
            "board": g.config.board,
            "positions": g.positions,
            "turn": g.turn,
            "phase": g.phase,
            "pending_emotion": g.pending_emotion,
            "retry_count": g.retry_count,
            "winner": g.winner,
        })
    });
    json!({
        "session_id": s.id,
        "kind": s.kind(),
        "status": s.status(),
        "created_at": s.created_at,
        "last_seq": s.last_seq(),
        "config": s.spec,
        "game": game,
        "pain_records": s.state.pain,
        "first_modes": s.state.first_modes,
        "utaut_responses": s.state.utaut.len(),
    })
}

#[derive(Deserialize)]
struct CreateBody {
    kind: String,
    #[serde(default)]
    config: Option<Value>,
}

async fn create_session(State(st): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateBody = parse(&body, StatusCode::BAD_REQUEST)?;
    let config = req.config.unwrap_or_else(|| json!({}));
    let spec: SessionSpec = serde_json::from_value(json!({ "kind": req.kind, "config": config }))
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_config", e.to_string()))?;
    let slot = st.store.create(spec)?;
    let s = slot.session.lock().await;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": s.id, "kind": s.kind(), "status": s.status(), "last_seq": s.last_seq() })),
    )
        .into_response())
}

async fn list_sessions(State(st): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    let mut out = Vec::new();
    for id in st.store.ids() {
        let slot = st.store.get(&id)?;
        let s = slot.session.lock().await;
        out.push(json!({ "session_id": s.id, "kind": s.kind(), "status": s.status(), "last_seq": s.last_seq() }));
    }
    Ok(Json(Value::Array(out)))
}

async fn session_snapshot(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let slot = st.store.get(&id)?;
    let s = slot.session.lock().await;
    Ok(Json(snapshot(&s)))
}

async fn session_command(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    st.store.get(&id)?;
    let mut req: Value = parse(&body, StatusCode::UNPROCESSABLE_ENTITY)?;
    if let Some(obj) = req.as_object_mut() {
        let payload = obj.entry("payload").or_insert_with(|| json!({}));
        if payload.is_null() {
            *payload = json!({});
        }
    }
    let cmd: Command = serde_json::from_value(req).map_err(|e| ApiError::unprocessable("invalid_payload", e.to_string()))?;
    let (events, result) = st.store.execute(&id, &cmd).await?;
    Ok(Json(json!({
        "seq": events.last().map(|e| e.seq),
        "events": events,
        "result": result,
    })))
}

#[derive(Deserialize)]
struct StreamQuery {
    #[serde(default)]
    from: Option<u64>,
}

struct StreamState {
    slot: Arc<Slot>,
    rx: Receiver<SessionEvent>,
    queue: std::collections::VecDeque<SessionEvent>,
    last_sent: u64,
    done: bool,
}

fn sse_event(e: &SessionEvent) -> Event {
    Event::default().id(e.seq.to_string()).data(e.to_json_line())
}

async fn session_stream(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<StreamQuery>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let slot = st.store.get(&id)?;
    // Subscribe before reading the backlog so nothing falls between the two.
    let rx = slot.tx.subscribe();
    let from = q.from.unwrap_or(1).max(1);
    let (queue, closed) = {
        let s = slot.session.lock().await;
        let start = (from - 1).min(s.last_seq()) as usize;
        (s.events[start..].iter().cloned().collect(), s.status() != SessionStatus::Active)
    };
    let init = StreamState {
        slot,
        rx,
        queue,
        last_sent: from - 1,
        done: closed,
    };
    let events = stream::unfold(init, |mut st| async move {
        loop {
            if let Some(e) = st.queue.pop_front() {
                if e.seq <= st.last_sent {
                    continue;
                }
                st.last_sent = e.seq;
                if matches!(e.body, EventBody::SessionFinished { .. }) {
                    st.done = true;
                    st.queue.clear();
                }
                return Some((Ok(sse_event(&e)), st));
            }
            if st.done {
                return None;
            }
            match st.rx.recv().await {
                Ok(e) => st.queue.push_back(e),
                Err(RecvError::Lagged(_)) => {
                    // Fell behind the channel: refill from the session itself.
                    let s = st.slot.session.lock().await;
                    st.queue.extend(s.events[st.last_sent as usize..].iter().cloned());
                }
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}

#[derive(Deserialize)]
struct PointsBody {
    points: Vec<[f64; 2]>,
    #[serde(default)]
    subject_id: Option<String>,
}

fn landmarks(body: PointsBody) -> Result<LandmarkSet, ApiError> {
    LandmarkSet::new(body.points, body.subject_id.unwrap_or_else(|| "request".into()))
        .map_err(|e| ApiError::unprocessable("invalid_landmarks", e.to_string()))
}

async fn run_model(model: Arc<FerModel>, set: LandmarkSet) -> Result<crate::fer::Prediction, ApiError> {
    tokio::task::spawn_blocking(move || model.predict(&set))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::from)
}

async fn predict(State(st): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let model = st.model()?;
    let set = landmarks(parse(&body, StatusCode::UNPROCESSABLE_ENTITY)?)?;
    Ok(Json(json!(run_model(model, set).await?)))
}

#[derive(Deserialize)]
struct IdentityBody {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    person_id: Option<u64>,
    #[serde(default)]
    points: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    embedding: Option<Vec<f64>>,
}

async fn embedding_of(st: &AppState, body: &mut IdentityBody) -> Result<Vec<f64>, ApiError> {
    match (body.embedding.take(), body.points.take()) {
        (Some(e), None) => Ok(e),
        (None, Some(points)) => {
            let set = landmarks(PointsBody { points, subject_id: None })?;
            Ok(run_model(st.model()?, set).await?.embedding)
        }
        _ => Err(ApiError::unprocessable("invalid_payload", "give exactly one of points or embedding")),
    }
}

async fn enroll(State(st): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let mut req: IdentityBody = parse(&body, StatusCode::UNPROCESSABLE_ENTITY)?;
    let emb = embedding_of(&st, &mut req).await?;
    let mut g = st.gallery.lock().expect("gallery lock");
    let person_id = match (req.person_id, req.name) {
        (Some(id), _) => {
            g.add_embedding(id, emb)?;
            id
        }
        (None, Some(name)) if !name.trim().is_empty() => g.enroll(&name, emb)?,
        _ => return Err(ApiError::unprocessable("invalid_payload", "enroll needs a name or a person_id")),
    };
    if let Some(p) = &st.gallery_path {
        g.save(p)?;
    }
    Ok(Json(json!({ "person_id": person_id, "gallery_size": g.len() })))
}

async fn identify(State(st): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let mut req: IdentityBody = parse(&body, StatusCode::UNPROCESSABLE_ENTITY)?;
    let emb = embedding_of(&st, &mut req).await?;
    let g = st.gallery.lock().expect("gallery lock");
    let best = g.best(&emb)?;
    let matched = best.clone().filter(|m| m.similarity >= g.threshold);
    Ok(Json(json!({ "match": matched, "best": best, "threshold": g.threshold })))
}

#[derive(Deserialize)]
struct PainBody {
    records: Vec<PainRecord>,
}

async fn stats_pain(body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: PainBody = parse(&body, StatusCode::UNPROCESSABLE_ENTITY)?;
    let report = stats::pain_report(&req.records)?;
    if let Some(code) = &report.error {
        return Err(ApiError::unprocessable(code, "the paired t-test is undefined for these scores").with("report", json!(report)));
    }
    Ok(Json(json!({ "report": report, "text": report.render_text() })))
}

#[derive(Deserialize)]
struct UtautBody {
    responses: Vec<UtautResponse>,
    #[serde(default)]
    map: Option<CategoryMap>,
    #[serde(default)]
    pairing: Pairing,
    #[serde(default)]
    questions: Option<Vec<usize>>,
}

async fn stats_utaut(body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: UtautBody = parse(&body, StatusCode::UNPROCESSABLE_ENTITY)?;
    let map = req.map.unwrap_or_default();
    let scores = stats::score_utaut(&req.responses, &map)?;
    let (children, parents): (Vec<UtautResponse>, Vec<UtautResponse>) =
        req.responses.into_iter().partition(|r| r.group == Group::Child);
    let categories = stats::compare_groups(&children, &parents, &map, req.pairing)?;
    let questions = req.questions.unwrap_or_else(|| SELECTED_QUESTIONS.to_vec());
    let per_question = stats::compare_questions(&children, &parents, &questions, &map, req.pairing)?;
    Ok(Json(json!({
        "scores": scores,
        "categories": categories,
        "questions": per_question,
        "text": categories.render_text(),
    })))
}
