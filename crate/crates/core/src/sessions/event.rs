use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::board::Jump;
use super::game::Player;
use super::robot::{RobotAction, RobotActionKind};
use super::{SessionSpec, SessionStatus};
use crate::landmark::EmotionLabel;
use crate::stats::{PainMode, PainRecord, UtautResponse};

pub const EVENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    SessionStarted {
        spec: SessionSpec,
    },
    Greeted {
        child_name: String,
    },
    NameAsked {},
    NeutralCalibrated {
        seconds: f64,
    },
    DiceRolled {
        player: Player,
        value: u32,
    },
    Moved {
        player: Player,
        from: u32,
        landed: u32,
        to: u32,
        jump: Option<Jump>,
    },
    WordPrompted {
        emotion: EmotionLabel,
        word: String,
    },
    WordTaught {
        emotion: EmotionLabel,
        word: String,
    },
    ExpressionAttempt {
        expected: EmotionLabel,
        top: EmotionLabel,
        prob: f64,
        passed: bool,
    },
    RetryRequested {
        retry_count: u32,
    },
    ExpressionPassed {
        emotion: EmotionLabel,
        overridden: bool,
    },
    RobotAction {
        action: RobotAction,
    },
    GameWon {
        winner: Player,
    },
    Farewell {},
    Counterbalanced {
        /// First mode for participants 1..=n.
        first_modes: Vec<PainMode>,
        extra: PainMode,
    },
    PainRecorded {
        record: PainRecord,
    },
    UtautAnswer {
        response: UtautResponse,
    },
    SessionFinished {
        status: SessionStatus,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::SessionStarted { .. } => "session_started",
            EventBody::Greeted { .. } => "greeted",
            EventBody::NameAsked {} => "name_asked",
            EventBody::NeutralCalibrated { .. } => "neutral_calibrated",
            EventBody::DiceRolled { .. } => "dice_rolled",
            EventBody::Moved { .. } => "moved",
            EventBody::WordPrompted { .. } => "word_prompted",
            EventBody::WordTaught { .. } => "word_taught",
            EventBody::ExpressionAttempt { .. } => "expression_attempt",
            EventBody::RetryRequested { .. } => "retry_requested",
            EventBody::ExpressionPassed { .. } => "expression_passed",
            EventBody::RobotAction { .. } => "robot_action",
            EventBody::GameWon { .. } => "game_won",
            EventBody::Farewell {} => "farewell",
            EventBody::Counterbalanced { .. } => "counterbalanced",
            EventBody::PainRecorded { .. } => "pain_recorded",
            EventBody::UtautAnswer { .. } => "utaut_answer",
            EventBody::SessionFinished { .. } => "session_finished",
        }
    }

    /// The physical robot behavior this event stands for, if any.
    pub fn robot_action(&self) -> Option<RobotAction> {
        match self {
            EventBody::Greeted { .. } => Some(RobotAction::new(RobotActionKind::Greet)),
            EventBody::NameAsked {} => Some(RobotAction::new(RobotActionKind::AskName)),
            EventBody::RobotAction { action } => Some(action.clone()),
            _ => None,
        }
    }
}

pub const KINDS: [&str; 18] = [
    "session_started",
    "greeted",
    "name_asked",
    "neutral_calibrated",
    "dice_rolled",
    "moved",
    "word_prompted",
    "word_taught",
    "expression_attempt",
    "retry_requested",
    "expression_passed",
    "robot_action",
    "game_won",
    "farewell",
    "counterbalanced",
    "pain_recorded",
    "utaut_answer",
    "session_finished",
];

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RawEvent", try_from = "RawEvent")]
pub struct SessionEvent {
    pub v: u32,
    pub seq: u64,
    pub ts: String,
    pub session_id: String,
    pub body: EventBody,
}

#[derive(Serialize, Deserialize)]
struct RawEvent {
    v: u32,
    seq: u64,
    ts: String,
    session_id: String,
    kind: String,
    #[serde(default)]
    payload: Value,
}

impl From<SessionEvent> for RawEvent {
    fn from(e: SessionEvent) -> Self {
        let mut tagged = serde_json::to_value(&e.body).expect("event body serializes");
        let payload = tagged
            .get_mut("payload")
            .map(Value::take)
            .unwrap_or_else(|| Value::Object(Default::default()));
        RawEvent {
            v: e.v,
            seq: e.seq,
            ts: e.ts,
            session_id: e.session_id,
            kind: e.body.kind().to_string(),
            payload,
        }
    }
}

impl TryFrom<RawEvent> for SessionEvent {
    type Error = String;

    fn try_from(r: RawEvent) -> Result<Self, String> {
        if r.v != EVENT_VERSION {
            return Err(format!("event {}: unsupported version {}", r.seq, r.v));
        }
        if !KINDS.contains(&r.kind.as_str()) {
            return Err(format!("event {}: unknown kind {:?}", r.seq, r.kind));
        }
        let payload = if r.payload.is_null() {
            Value::Object(Default::default())
        } else {
            r.payload
        };
        let body = serde_json::from_value(serde_json::json!({ "kind": r.kind, "payload": payload }))
            .map_err(|e| format!("event {} ({}): {e}", r.seq, r.kind))?;
        Ok(SessionEvent {
            v: r.v,
            seq: r.seq,
            ts: r.ts,
            session_id: r.session_id,
            body,
        })
    }
}

impl SessionEvent {
    pub fn kind(&self) -> &'static str {
        self.body.kind()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}
