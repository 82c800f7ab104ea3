//! Append-only session logs under `<data_dir>/sessions`: one `<id>.jsonl` per
//! session plus `index.jsonl` listing them in creation order.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::http::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::broadcast;

use super::error::ApiError;
use crate::sessions::{
    parse_log, Clock, Command, RobotDriver, Session, SessionEvent, SessionKind, SessionSpec,
    SessionStatus,
};

const INDEX: &str = "index.jsonl";
const CHANNEL_CAPACITY: usize = 256;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    session_id: String,
    kind: SessionKind,
    created_at: String,
}

pub struct Slot {
    pub session: tokio::sync::Mutex<Session>,
    pub tx: broadcast::Sender<SessionEvent>,
    closed: AtomicBool,
}

impl Slot {
    fn new(session: Session) -> Arc<Slot> {
        let closed = AtomicBool::new(session.status() != SessionStatus::Active);
        Arc::new(Slot {
            session: tokio::sync::Mutex::new(session),
            tx: broadcast::channel(CHANNEL_CAPACITY).0,
            closed,
        })
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::SeqCst)
    }
}

pub struct SessionStore {
    dir: PathBuf,
    max_active: usize,
    slots: Mutex<BTreeMap<String, Arc<Slot>>>,
    counter: AtomicU64,
    clock: Arc<dyn Clock>,
    driver: Arc<dyn RobotDriver>,
}

fn io_err(path: &Path, e: std::io::Error) -> ApiError {
    ApiError::internal(format!("{}: {e}", path.display()))
}

/// Complete lines only; a torn final write is dropped.
fn complete_lines(text: &str) -> &str {
    match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    }
}

impl SessionStore {
    /// Opens the store and replays every indexed session.
    pub fn open(
        data_dir: &Path,
        max_active: usize,
        clock: Arc<dyn Clock>,
        driver: Arc<dyn RobotDriver>,
    ) -> Result<Self, ApiError> {
        let dir = data_dir.join("sessions");
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let mut slots = BTreeMap::new();
        let index = dir.join(INDEX);
        if index.exists() {
            let text = fs::read_to_string(&index).map_err(|e| io_err(&index, e))?;
            for line in complete_lines(&text).lines().filter(|l| !l.trim().is_empty()) {
                let entry: IndexEntry =
                    serde_json::from_str(line).map_err(|e| ApiError::internal(format!("{INDEX}: {e}")))?;
                let path = dir.join(format!("{}.jsonl", entry.session_id));
                let log = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
                let events = parse_log(complete_lines(&log)).map_err(ApiError::from)?;
                let session = Session::replay(&events).map_err(ApiError::from)?;
                slots.insert(entry.session_id, Slot::new(session));
            }
        }
        Ok(SessionStore {
            dir,
            max_active,
            counter: AtomicU64::new(slots.len() as u64),
            slots: Mutex::new(slots),
            clock,
            driver,
        })
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    fn append(&self, path: &Path, lines: &str) -> Result<(), ApiError> {
        let mut f = OpenOptions::new().append(true).create(true).open(path).map_err(|e| io_err(path, e))?;
        let len = f.metadata().map_err(|e| io_err(path, e))?.len();
        if let Err(e) = f.write_all(lines.as_bytes()).and_then(|_| f.sync_data()) {
            // Roll back a torn write so the next append starts on a line boundary.
            let _ = f.set_len(len);
            return Err(io_err(path, e));
        }
        Ok(())
    }

    fn fresh_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::SeqCst) + 1;
        format!("s{n:06}-{:08x}", rand::random::<u32>())
    }

    fn perform(&self, events: &[SessionEvent]) {
        for e in events {
            if let Some(action) = e.body.robot_action() {
                self.driver.perform(&e.session_id, &e.ts, &action);
            }
        }
    }

    pub fn create(&self, spec: SessionSpec) -> Result<Arc<Slot>, ApiError> {
        spec.validate()?;
        let mut slots = self.slots.lock().expect("store lock");
        let active = slots.values().filter(|s| !s.is_closed()).count();
        if active >= self.max_active {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "capacity",
                format!("{active} active sessions, limit {}", self.max_active),
            ));
        }
        let id = self.fresh_id();
        let session = Session::create(&id, spec, self.clock.as_ref())?;
        let path = self.log_path(&id);
        File::create_new(&path).map_err(|e| io_err(&path, e))?;
        self.append(&path, &crate::sessions::to_jsonl(&session.events))?;
        let entry = IndexEntry {
            session_id: id.clone(),
            kind: session.kind(),
            created_at: session.created_at.clone(),
        };
        let line = serde_json::to_string(&entry).expect("index entry serializes") + "\n";
        self.append(&self.dir.join(INDEX), &line)?;
        self.perform(&session.events);
        let slot = Slot::new(session);
        slots.insert(id, slot.clone());
        Ok(slot)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.slots
            .lock()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(&format!("session {id}")))
    }

    pub fn ids(&self) -> Vec<String> {
        self.slots.lock().expect("store lock").keys().cloned().collect()
    }

    /// Decide, persist, commit, broadcast. Nothing is kept if persisting fails.
    pub async fn execute(&self, id: &str, cmd: &Command) -> Result<(Vec<SessionEvent>, Value), ApiError> {
        let slot = self.get(id)?;
        let mut session = slot.session.lock().await;
        let prepared = session.prepare(cmd, self.clock.as_ref()).map_err(ApiError::from)?;
        self.append(&self.log_path(id), &crate::sessions::to_jsonl(&prepared.events))?;
        let result = prepared.result.clone();
        let events = session.commit(prepared);
        if session.status() != SessionStatus::Active {
            slot.closed.store(true, Ordering::SeqCst);
        }
        for e in &events {
            // No receivers is fine.
            let _ = slot.tx.send(e.clone());
        }
        drop(session);
        self.perform(&events);
        Ok((events, result))
    }

    /// Raw log text of a session as stored on disk.
    pub fn log_text(&self, id: &str) -> Result<String, ApiError> {
        self.get(id)?;
        let path = self.log_path(id);
        fs::read_to_string(&path).map_err(|e| io_err(&path, e))
    }
}

