use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotActionKind {
    Greet,
    AskName,
    SpeakWord,
    Encourage,
    PlayMusic,
    Dance,
    MoveTrunk,
    MoveEars,
    Farewell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotAction {
    pub kind: RobotActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

impl RobotAction {
    pub fn new(kind: RobotActionKind) -> Self {
        RobotAction {
            kind,
            word: None,
            language: None,
        }
    }

    pub fn speak(word: &str, language: &str) -> Self {
        RobotAction {
            kind: RobotActionKind::SpeakWord,
            word: Some(word.to_string()),
            language: Some(language.to_string()),
        }
    }
}

/// Receives robot actions after their events are committed.
pub trait RobotDriver: Send + Sync {
    fn perform(&self, session_id: &str, ts: &str, action: &RobotAction);
}

/// Writes each action to the log.
#[derive(Debug, Default)]
pub struct LoggingDriver;

impl RobotDriver for LoggingDriver {
    fn perform(&self, session_id: &str, ts: &str, action: &RobotAction) {
        log::info!(
            "robot {ts} session={session_id} action={:?} word={:?} language={:?}",
            action.kind,
            action.word,
            action.language
        );
    }
}

/// Keeps every action in memory, for inspection.
#[derive(Debug, Default)]
pub struct RecordingDriver {
    actions: Mutex<Vec<(String, RobotAction)>>,
}

impl RecordingDriver {
    pub fn actions(&self) -> Vec<(String, RobotAction)> {
        self.actions.lock().expect("driver lock").clone()
    }
}

impl RobotDriver for RecordingDriver {
    fn perform(&self, session_id: &str, _ts: &str, action: &RobotAction) {
        self.actions
            .lock()
            .expect("driver lock")
            .push((session_id.to_string(), action.clone()));
    }
}
