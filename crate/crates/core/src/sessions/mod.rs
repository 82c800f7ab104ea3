//! Event-sourced sessions: the emotion board game, the two-mode pain
//! protocol and UTAUT questionnaire administration.
//!
//! Commands are decided against a scratch copy of the state. Every emitted
//! event is folded into that copy straight away, so live execution and
//! replay share one transition function.

pub mod board;
pub mod event;
pub mod game;
pub mod robot;
pub mod simulate;

use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

pub use board::{BoardConfig, Jump, OvershootRule, Step};
pub use event::{EventBody, SessionEvent, EVENT_VERSION};
pub use game::{GameConfig, GameState, Phase, Player, Positions};
pub use robot::{LoggingDriver, RecordingDriver, RobotAction, RobotActionKind, RobotDriver};

use crate::landmark::EmotionLabel;
use crate::nn::argmax;
use crate::stats::{CategoryMap, PainMode, PainRecord, StatsError, UtautResponse};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("invalid config field {field}: {message}")]
    InvalidConfig { field: String, message: String },
    #[error("{command} is not allowed in phase {phase}")]
    Phase { command: String, phase: String },
    #[error("{command} is not available in a {kind} session")]
    WrongKind { command: String, kind: String },
    #[error("session is {0}")]
    Closed(String),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("{0}")]
    Stats(StatsError),
    #[error("duplicate record: {0}")]
    Duplicate(String),
    #[error("event log is missing seq {missing}")]
    Gap { missing: u64 },
    #[error("event {seq} has unknown kind {kind:?}")]
    UnknownKind { seq: u64, kind: String },
    #[error("event {seq}: {message}")]
    Integrity { seq: u64, message: String },
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::InvalidConfig { .. } => "invalid_config",
            SessionError::Phase { .. } => "phase",
            SessionError::WrongKind { .. } => "wrong_kind",
            SessionError::Closed(_) => "session_closed",
            SessionError::InvalidPayload(_) => "invalid_payload",
            SessionError::Stats(e) => e.code(),
            SessionError::Duplicate(_) => "duplicate_record",
            SessionError::Gap { .. } => "seq_gap",
            SessionError::UnknownKind { .. } => "unknown_event_kind",
            SessionError::Integrity { .. } => "integrity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionKind {
    Game,
    Pain,
    Utaut,
}

impl SessionKind {
    pub fn name(self) -> &'static str {
        match self {
            SessionKind::Game => "game",
            SessionKind::Pain => "pain",
            SessionKind::Utaut => "utaut",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Active,
    Finished,
    Aborted,
}

impl SessionStatus {
    pub fn name(self) -> &'static str {
        match self {
            SessionStatus::Active => "active",
            SessionStatus::Finished => "finished",
            SessionStatus::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PainConfig {
    /// Participants to counterbalance; 0 skips the assignment.
    pub participants: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct UtautConfig {
    pub map: CategoryMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "lowercase")]
pub enum SessionSpec {
    Game(GameConfig),
    Pain(PainConfig),
    Utaut(UtautConfig),
}

impl SessionSpec {
    pub fn kind(&self) -> SessionKind {
        match self {
            SessionSpec::Game(_) => SessionKind::Game,
            SessionSpec::Pain(_) => SessionKind::Pain,
            SessionSpec::Utaut(_) => SessionKind::Utaut,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        match self {
            SessionSpec::Game(c) => c.validate(),
            SessionSpec::Pain(_) => Ok(()),
            SessionSpec::Utaut(c) => c.map.validate().map_err(|e| SessionError::InvalidConfig {
                field: "map".into(),
                message: e.to_string(),
            }),
        }
    }
}

/// Which mode each participant does first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterbalance {
    pub first_modes: Vec<PainMode>,
    /// Mode given the extra participant when n is odd: A for even seeds, B for odd.
    pub extra: PainMode,
}

impl Counterbalance {
    pub fn count(&self, mode: PainMode) -> usize {
        self.first_modes.iter().filter(|&&m| m == mode).count()
    }
}

pub fn counterbalance_assign(n: usize, seed: u64) -> Counterbalance {
    let extra = if seed % 2 == 0 { PainMode::ANoRobot } else { PainMode::BWithRobot };
    let mut first_modes: Vec<PainMode> = (0..n).map(|i| if i < n.div_ceil(2) { extra } else { extra.other() }).collect();
    first_modes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Counterbalance { first_modes, extra }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "payload", rename_all = "snake_case")]
pub enum Command {
    Calibrate {
        #[serde(default)]
        seconds: Option<f64>,
    },
    Roll {},
    ResolveExpression {
        probs: Vec<f64>,
    },
    RobotRoll {},
    Override {},
    RecordPain {
        participant_id: String,
        mode: PainMode,
        score: i64,
    },
    UtautAnswer {
        response: UtautResponse,
    },
    RobotAction {
        action: RobotAction,
    },
    Finish {
        #[serde(default = "finished")]
        status: SessionStatus,
    },
}

fn finished() -> SessionStatus {
    SessionStatus::Finished
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Calibrate { .. } => "calibrate",
            Command::Roll {} => "roll",
            Command::ResolveExpression { .. } => "resolve_expression",
            Command::RobotRoll {} => "robot_roll",
            Command::Override {} => "override",
            Command::RecordPain { .. } => "record_pain",
            Command::UtautAnswer { .. } => "utaut_answer",
            Command::RobotAction { .. } => "robot_action",
            Command::Finish { .. } => "finish",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub status: SessionStatus,
    pub game: Option<GameState>,
    pub pain: Vec<PainRecord>,
    pub first_modes: Vec<PainMode>,
    pub utaut: Vec<UtautResponse>,
}

impl SessionState {
    fn new(spec: &SessionSpec) -> Self {
        SessionState {
            status: SessionStatus::Active,
            game: match spec {
                SessionSpec::Game(c) => Some(GameState::new(c.clone())),
                _ => None,
            },
            pain: Vec::new(),
            first_modes: Vec::new(),
            utaut: Vec::new(),
        }
    }

    fn apply(&mut self, kind: SessionKind, body: &EventBody) -> Result<(), String> {
        if self.status != SessionStatus::Active {
            return Err(format!("session already {}", self.status.name()));
        }
        match body {
            EventBody::SessionStarted { .. } => return Err("session_started after seq 1".into()),
            EventBody::SessionFinished { status } => {
                if *status == SessionStatus::Active {
                    return Err("cannot finish into active".into());
                }
                self.status = *status;
            }
            EventBody::Counterbalanced { first_modes, .. } if kind == SessionKind::Pain => {
                self.first_modes = first_modes.clone();
            }
            EventBody::PainRecorded { record } if kind == SessionKind::Pain => {
                record.validate().map_err(|e| e.to_string())?;
                if self.pain.iter().any(|r| r.participant_id == record.participant_id && r.mode == record.mode) {
                    return Err(format!("second {} record for {}", record.mode.code(), record.participant_id));
                }
                self.pain.push(record.clone());
            }
            EventBody::UtautAnswer { response } if kind == SessionKind::Utaut => {
                response.validate().map_err(|e| e.to_string())?;
                if self.utaut.iter().any(|r| r.respondent_id == response.respondent_id) {
                    return Err(format!("second response from {}", response.respondent_id));
                }
                self.utaut.push(response.clone());
            }
            EventBody::RobotAction { .. } | EventBody::Farewell {} if kind != SessionKind::Game => {}
            other => match &mut self.game {
                Some(g) => g.apply(other)?,
                None => return Err(format!("{} does not apply to a {} session", other.kind(), kind.name())),
            },
        }
        Ok(())
    }
}

/// Source of event timestamps.
pub trait Clock: Send + Sync {
    fn now(&self) -> String;
}

fn format_ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> String {
        format_ts(Utc::now())
    }
}

/// Advances one millisecond per reading from a fixed origin.
#[derive(Debug)]
pub struct LogicalClock {
    origin: DateTime<Utc>,
    ticks: AtomicU64,
}

impl LogicalClock {
    pub fn new(origin_ms: i64) -> Self {
        LogicalClock {
            origin: Utc.timestamp_millis_opt(origin_ms).single().unwrap_or_default(),
            ticks: AtomicU64::new(0),
        }
    }
}

impl Default for LogicalClock {
    fn default() -> Self {
        Self::new(0)
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> String {
        let t = self.ticks.fetch_add(1, Ordering::SeqCst);
        format_ts(self.origin + chrono::Duration::milliseconds(t as i64))
    }
}

/// A decided command not yet committed to the session.
#[derive(Debug, Clone)]
pub struct Prepared {
    state: SessionState,
    pub events: Vec<SessionEvent>,
    pub result: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Session {
    pub id: String,
    pub spec: SessionSpec,
    pub created_at: String,
    pub state: SessionState,
    #[serde(skip)]
    pub events: Vec<SessionEvent>,
}

struct Draft<'a> {
    kind: SessionKind,
    state: SessionState,
    bodies: Vec<EventBody>,
    result: &'a mut Map<String, Value>,
}

impl Draft<'_> {
    fn emit(&mut self, body: EventBody) -> Result<(), SessionError> {
        let seq = self.bodies.len() as u64;
        self.state.apply(self.kind, &body).map_err(|message| SessionError::Integrity { seq, message })?;
        self.bodies.push(body);
        Ok(())
    }

    fn game(&self) -> &GameState {
        self.state.game.as_ref().expect("game session")
    }

    fn roll_and_move(&mut self, player: Player) -> Result<(), SessionError> {
        let value = self.game().peek_roll();
        self.emit(EventBody::DiceRolled { player, value })?;
        let from = self.game().positions.get(player);
        let step = self.game().config.board.step(from, value);
        self.emit(EventBody::Moved {
            player,
            from,
            landed: step.landed,
            to: step.to,
            jump: step.jump,
        })?;
        self.result.insert("dice".into(), json!(value));
        self.result.insert("position".into(), json!(step.to));
        if step.to == self.game().config.board.cell_count {
            self.emit(EventBody::GameWon { winner: player })?;
            self.emit(EventBody::RobotAction {
                action: RobotAction::new(RobotActionKind::Farewell),
            })?;
            self.emit(EventBody::Farewell {})?;
            self.emit(EventBody::SessionFinished {
                status: SessionStatus::Finished,
            })?;
        } else if player == Player::Child {
            let emotion = self.game().pending_emotion.expect("child landed on a painted cell");
            self.emit(EventBody::WordPrompted {
                emotion,
                word: emotion.name().to_string(),
            })?;
        }
        Ok(())
    }
}

fn valid_probs(probs: &[f64]) -> Result<(), SessionError> {
    if probs.len() != EmotionLabel::COUNT {
        return Err(SessionError::InvalidPayload(format!(
            "probs has {} entries, expected {}",
            probs.len(),
            EmotionLabel::COUNT
        )));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(SessionError::InvalidPayload("probs must be finite and non-negative".into()));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(SessionError::InvalidPayload(format!("probs sum to {sum}, not 1")));
    }
    Ok(())
}

impl Session {
    /// Starts a session and writes its opening events.
    pub fn create(id: &str, spec: SessionSpec, clock: &dyn Clock) -> Result<Session, SessionError> {
        spec.validate()?;
        let mut session = Session {
            id: id.to_string(),
            created_at: String::new(),
            state: SessionState::new(&spec),
            spec: spec.clone(),
            events: Vec::new(),
        };
        let mut bodies = vec![EventBody::SessionStarted { spec: spec.clone() }];
        match &spec {
            SessionSpec::Game(c) => {
                bodies.push(EventBody::Greeted {
                    child_name: c.child_name.clone(),
                });
                bodies.push(EventBody::NameAsked {});
            }
            SessionSpec::Pain(c) if c.participants > 0 => {
                let cb = counterbalance_assign(c.participants, c.seed);
                bodies.push(EventBody::Counterbalanced {
                    first_modes: cb.first_modes,
                    extra: cb.extra,
                });
            }
            _ => {}
        }
        for body in bodies {
            let ts = clock.now();
            if session.events.is_empty() {
                session.created_at = ts.clone();
            } else {
                session.state.apply(spec.kind(), &body).map_err(|message| SessionError::Integrity {
                    seq: session.last_seq() + 1,
                    message,
                })?;
            }
            session.events.push(SessionEvent {
                v: EVENT_VERSION,
                seq: session.last_seq() + 1,
                ts,
                session_id: id.to_string(),
                body,
            });
        }
        Ok(session)
    }

    pub fn kind(&self) -> SessionKind {
        self.spec.kind()
    }

    pub fn status(&self) -> SessionStatus {
        self.state.status
    }

    pub fn last_seq(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn game(&self) -> Option<&GameState> {
        self.state.game.as_ref()
    }

    /// Decides `cmd` without touching the session.
    pub fn prepare(&self, cmd: &Command, clock: &dyn Clock) -> Result<Prepared, SessionError> {
        let name = cmd.name();
        if self.state.status != SessionStatus::Active {
            return Err(SessionError::Closed(self.state.status.name().into()));
        }
        let kind = self.kind();
        let needs = |k: SessionKind| {
            if kind == k {
                Ok(())
            } else {
                Err(SessionError::WrongKind {
                    command: name.into(),
                    kind: kind.name().into(),
                })
            }
        };
        let phase_is = |phases: &[Phase]| -> Result<(), SessionError> {
            let phase = self.game().map(|g| g.phase).expect("game session");
            if phases.contains(&phase) {
                Ok(())
            } else {
                Err(SessionError::Phase {
                    command: name.into(),
                    phase: phase.name().into(),
                })
            }
        };
        let mut result = Map::new();
        let mut d = Draft {
            kind,
            state: self.state.clone(),
            bodies: Vec::new(),
            result: &mut result,
        };
        match cmd {
            Command::Calibrate { seconds } => {
                needs(SessionKind::Game)?;
                phase_is(&[Phase::AwaitingNeutralCalibration])?;
                let seconds = seconds.unwrap_or(d.game().config.calibration_seconds);
                if !(seconds >= 0.0 && seconds.is_finite()) {
                    return Err(SessionError::InvalidPayload(format!("seconds {seconds} is not a duration")));
                }
                d.emit(EventBody::NeutralCalibrated { seconds })?;
            }
            Command::Roll {} => {
                needs(SessionKind::Game)?;
                phase_is(&[Phase::AwaitingRoll])?;
                d.roll_and_move(Player::Child)?;
            }
            Command::RobotRoll {} => {
                needs(SessionKind::Game)?;
                phase_is(&[Phase::RobotTurn])?;
                d.roll_and_move(Player::Robot)?;
            }
            Command::ResolveExpression { probs } => {
                needs(SessionKind::Game)?;
                phase_is(&[Phase::AwaitingExpression])?;
                valid_probs(probs)?;
                let g = d.game();
                let expected = g.pending_emotion.expect("pending emotion while awaiting expression");
                let top = EmotionLabel::ALL[argmax(probs)];
                let prob = probs[expected.index()];
                let passed = top == expected && prob >= g.config.pass_threshold;
                let retry_count = g.retry_count + 1;
                d.emit(EventBody::ExpressionAttempt {
                    expected,
                    top,
                    prob,
                    passed,
                })?;
                if passed {
                    d.emit(EventBody::ExpressionPassed {
                        emotion: expected,
                        overridden: false,
                    })?;
                } else {
                    d.emit(EventBody::RetryRequested { retry_count })?;
                    d.emit(EventBody::RobotAction {
                        action: RobotAction::new(RobotActionKind::Encourage),
                    })?;
                }
                d.result.insert("passed".into(), json!(passed));
            }
            Command::Override {} => {
                needs(SessionKind::Game)?;
                phase_is(&[Phase::AwaitingExpression])?;
                let g = d.game();
                if g.retry_count < g.config.max_retries {
                    return Err(SessionError::Phase {
                        command: name.into(),
                        phase: format!("{} with {} of {} retries", g.phase.name(), g.retry_count, g.config.max_retries),
                    });
                }
                let emotion = g.pending_emotion.expect("pending emotion while awaiting expression");
                d.emit(EventBody::ExpressionPassed {
                    emotion,
                    overridden: true,
                })?;
            }
            Command::RecordPain {
                participant_id,
                mode,
                score,
            } => {
                needs(SessionKind::Pain)?;
                let order = d.state.pain.iter().filter(|r| &r.participant_id == participant_id).count() as u32 + 1;
                let record = PainRecord {
                    participant_id: participant_id.clone(),
                    mode: *mode,
                    score: *score,
                    order,
                };
                record.validate().map_err(SessionError::Stats)?;
                if d.state.pain.iter().any(|r| &r.participant_id == participant_id && r.mode == *mode) {
                    return Err(SessionError::Duplicate(format!("{participant_id} already has a {} score", mode.code())));
                }
                d.emit(EventBody::PainRecorded { record })?;
            }
            Command::UtautAnswer { response } => {
                needs(SessionKind::Utaut)?;
                response.validate().map_err(SessionError::Stats)?;
                if d.state.utaut.iter().any(|r| r.respondent_id == response.respondent_id) {
                    return Err(SessionError::Duplicate(format!("{} already answered", response.respondent_id)));
                }
                d.emit(EventBody::UtautAnswer {
                    response: response.clone(),
                })?;
            }
            Command::RobotAction { action } => {
                if action.kind == RobotActionKind::SpeakWord && action.word.as_deref().is_none_or(str::is_empty) {
                    return Err(SessionError::InvalidPayload("speak_word needs a word".into()));
                }
                d.emit(EventBody::RobotAction { action: action.clone() })?;
                let teaching = d
                    .state
                    .game
                    .as_ref()
                    .filter(|g| g.phase == Phase::AwaitingExpression && action.kind == RobotActionKind::SpeakWord)
                    .and_then(|g| g.pending_emotion);
                if let Some(emotion) = teaching {
                    d.emit(EventBody::WordTaught {
                        emotion,
                        word: action.word.clone().unwrap_or_default(),
                    })?;
                }
            }
            Command::Finish { status } => {
                if *status == SessionStatus::Active {
                    return Err(SessionError::InvalidPayload("status must be finished or aborted".into()));
                }
                d.emit(EventBody::SessionFinished { status: *status })?;
            }
        }
        let Draft { state, bodies, .. } = d;
        result.insert("status".into(), json!(state.status));
        if let Some(g) = &state.game {
            result.insert("phase".into(), json!(g.phase));
            result.insert("positions".into(), json!(g.positions));
            result.insert("retry_count".into(), json!(g.retry_count));
            if let Some(w) = g.winner {
                result.insert("winner".into(), json!(w));
            }
        }
        let first = self.last_seq() + 1;
        let events = bodies
            .into_iter()
            .enumerate()
            .map(|(i, body)| SessionEvent {
                v: EVENT_VERSION,
                seq: first + i as u64,
                ts: clock.now(),
                session_id: self.id.clone(),
                body,
            })
            .collect();
        Ok(Prepared {
            state,
            events,
            result: Value::Object(result),
        })
    }

    /// Adopts a prepared command. The caller must not have changed the session since.
    pub fn commit(&mut self, prepared: Prepared) -> Vec<SessionEvent> {
        debug_assert_eq!(prepared.events.first().map(|e| e.seq), Some(self.last_seq() + 1));
        self.state = prepared.state;
        self.events.extend(prepared.events.iter().cloned());
        prepared.events
    }

    /// Decides and commits in one step.
    pub fn execute(&mut self, cmd: &Command, clock: &dyn Clock) -> Result<(Vec<SessionEvent>, Value), SessionError> {
        let p = self.prepare(cmd, clock)?;
        let result = p.result.clone();
        Ok((self.commit(p), result))
    }

    /// Rebuilds a session from its log. Any gapless prefix is accepted.
    pub fn replay(events: &[SessionEvent]) -> Result<Session, SessionError> {
        let first = events.first().ok_or(SessionError::Gap { missing: 1 })?;
        let EventBody::SessionStarted { spec } = &first.body else {
            return Err(SessionError::Integrity {
                seq: first.seq,
                message: "log must open with session_started".into(),
            });
        };
        let mut session = Session {
            id: first.session_id.clone(),
            spec: spec.clone(),
            created_at: first.ts.clone(),
            state: SessionState::new(spec),
            events: Vec::with_capacity(events.len()),
        };
        for (i, e) in events.iter().enumerate() {
            let expected = i as u64 + 1;
            if e.seq != expected {
                return Err(if e.seq > expected {
                    SessionError::Gap { missing: expected }
                } else {
                    SessionError::Integrity {
                        seq: e.seq,
                        message: format!("out of order, expected seq {expected}"),
                    }
                });
            }
            if e.session_id != session.id {
                return Err(SessionError::Integrity {
                    seq: e.seq,
                    message: format!("belongs to session {}", e.session_id),
                });
            }
            if i > 0 {
                session
                    .state
                    .apply(session.kind(), &e.body)
                    .map_err(|message| SessionError::Integrity { seq: e.seq, message })?;
            }
            session.events.push(e.clone());
        }
        Ok(session)
    }
}

/// Parses a JSON Lines log. Blank lines are skipped.
pub fn parse_log(text: &str) -> Result<Vec<SessionEvent>, SessionError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| SessionError::Integrity {
            seq: out.len() as u64 + 1,
            message: format!("line {}: {e}", i + 1),
        })?;
        let seq = value.get("seq").and_then(Value::as_u64).unwrap_or(out.len() as u64 + 1);
        if let Some(kind) = value.get("kind").and_then(Value::as_str) {
            if !event::KINDS.contains(&kind) {
                return Err(SessionError::UnknownKind {
                    seq,
                    kind: kind.to_string(),
                });
            }
        }
        let e: SessionEvent =
            serde_json::from_value(value).map_err(|e| SessionError::Integrity { seq, message: e.to_string() })?;
        out.push(e);
    }
    Ok(out)
}

pub fn to_jsonl(events: &[SessionEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_json_line());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn game(seed: u64) -> Session {
        Session::create(
            "g",
            SessionSpec::Game(GameConfig {
                seed,
                ..GameConfig::default()
            }),
            &LogicalClock::default(),
        )
        .unwrap()
    }

    fn onehot(e: EmotionLabel, p: f64) -> Vec<f64> {
        let rest = (1.0 - p) / 6.0;
        EmotionLabel::ALL.iter().map(|&l| if l == e { p } else { rest }).collect()
    }

    #[test]
    fn new_game_opens_with_greeting() {
        let s = game(1);
        let kinds: Vec<&str> = s.events.iter().map(|e| e.kind()).collect();
        assert_eq!(kinds, ["session_started", "greeted", "name_asked"]);
        let g = s.game().unwrap();
        assert_eq!(g.phase, Phase::AwaitingNeutralCalibration);
        assert_eq!(g.positions, Positions::default());
        assert_eq!(g.turn, Player::Child);
    }

    #[test]
    fn same_seed_same_dice() {
        let roll_seq = |seed| {
            let mut s = game(seed);
            let c = LogicalClock::default();
            s.execute(&Command::Calibrate { seconds: None }, &c).unwrap();
            let (_, r) = s.execute(&Command::Roll {}, &c).unwrap();
            r["dice"].as_u64().unwrap()
        };
        assert_eq!(roll_seq(9), roll_seq(9));
    }

    #[test]
    fn phase_errors_leave_state_untouched() {
        let mut s = game(2);
        let c = LogicalClock::default();
        let before = s.clone();
        let err = s.execute(&Command::Roll {}, &c).unwrap_err();
        assert_eq!(
            err,
            SessionError::Phase {
                command: "roll".into(),
                phase: "awaiting_neutral_calibration".into()
            }
        );
        assert_eq!(s, before);
        s.execute(&Command::Calibrate { seconds: None }, &c).unwrap();
        s.execute(&Command::Roll {}, &c).unwrap();
        assert_eq!(s.game().unwrap().phase, Phase::AwaitingExpression);
        assert!(matches!(s.execute(&Command::Roll {}, &c), Err(SessionError::Phase { .. })));
        assert!(matches!(s.execute(&Command::RobotRoll {}, &c), Err(SessionError::Phase { .. })));
        assert!(matches!(s.execute(&Command::Override {}, &c), Err(SessionError::Phase { .. })));
    }

    #[test]
    fn retries_then_override() {
        let mut s = game(3);
        let c = LogicalClock::default();
        s.execute(&Command::Calibrate { seconds: None }, &c).unwrap();
        s.execute(&Command::Roll {}, &c).unwrap();
        let expected = s.game().unwrap().pending_emotion.unwrap();
        let wrong = EmotionLabel::ALL.iter().copied().find(|&l| l != expected).unwrap();
        for k in 1..=3 {
            let (events, r) = s
                .execute(&Command::ResolveExpression { probs: onehot(wrong, 0.9) }, &c)
                .unwrap();
            assert_eq!(r["passed"], json!(false));
            assert_eq!(events[1].body, EventBody::RetryRequested { retry_count: k });
            assert_eq!(
                events[2].body,
                EventBody::RobotAction {
                    action: RobotAction::new(RobotActionKind::Encourage)
                }
            );
            assert_eq!(s.game().unwrap().turn, Player::Child);
        }
        let (events, _) = s.execute(&Command::Override {}, &c).unwrap();
        assert_eq!(
            events[0].body,
            EventBody::ExpressionPassed {
                emotion: expected,
                overridden: true
            }
        );
        assert_eq!(s.game().unwrap().phase, Phase::RobotTurn);
    }

    #[test]
    fn pass_requires_top_and_threshold() {
        let mut s = game(4);
        let c = LogicalClock::default();
        s.execute(&Command::Calibrate { seconds: None }, &c).unwrap();
        s.execute(&Command::Roll {}, &c).unwrap();
        let expected = s.game().unwrap().pending_emotion.unwrap();
        // Top but below threshold.
        let (_, r) = s
            .execute(&Command::ResolveExpression { probs: onehot(expected, 0.4) }, &c)
            .unwrap();
        assert_eq!(r["passed"], json!(false));
        let (_, r) = s
            .execute(&Command::ResolveExpression { probs: onehot(expected, 0.9) }, &c)
            .unwrap();
        assert_eq!(r["passed"], json!(true));
        assert_eq!(s.game().unwrap().turn, Player::Robot);
        assert!(matches!(
            s.execute(&Command::ResolveExpression { probs: vec![1.0] }, &c),
            Err(SessionError::Phase { .. })
        ));
    }

    #[test]
    fn robot_wins_from_27_with_3() {
        let mut cfg = GameConfig::default();
        cfg.board.ladders.clear();
        cfg.board.slides.clear();
        let seed = (0..1000)
            .find(|&s| GameState::new(GameConfig { seed: s, ..cfg.clone() }).peek_roll() == 3)
            .unwrap();
        let mut state = GameState::new(GameConfig { seed, ..cfg });
        state.apply(&EventBody::NeutralCalibrated { seconds: 3.0 }).unwrap();
        state.positions.robot = 27;
        state.phase = Phase::RobotTurn;
        state.turn = Player::Robot;
        let spec = SessionSpec::Game(state.config.clone());
        let mut s = Session {
            id: "r".into(),
            spec: spec.clone(),
            created_at: String::new(),
            state: SessionState {
                game: Some(state),
                ..SessionState::new(&spec)
            },
            events: Vec::new(),
        };
        let (events, r) = s.execute(&Command::RobotRoll {}, &LogicalClock::default()).unwrap();
        assert_eq!(r["winner"], json!("robot"));
        let kinds: Vec<&str> = events.iter().map(|e| e.kind()).collect();
        assert_eq!(
            kinds,
            ["dice_rolled", "moved", "game_won", "robot_action", "farewell", "session_finished"]
        );
        assert_eq!(s.status(), SessionStatus::Finished);
        assert!(matches!(s.execute(&Command::RobotRoll {}, &LogicalClock::default()), Err(SessionError::Closed(_))));
    }

    #[test]
    fn counterbalance_splits() {
        for seed in 0..20 {
            let cb = counterbalance_assign(25, seed);
            let a = cb.count(PainMode::ANoRobot);
            assert_eq!(a.max(25 - a), 13);
            assert_eq!(cb.count(cb.extra), 13);
        }
        assert_eq!(counterbalance_assign(25, 0).count(PainMode::ANoRobot), 13);
        assert_eq!(counterbalance_assign(25, 1).count(PainMode::BWithRobot), 13);
        let two = counterbalance_assign(2, 5);
        assert_eq!(two.count(PainMode::ANoRobot), 1);
        assert_eq!(counterbalance_assign(1, 3).first_modes.len(), 1);
        for n in 1..60 {
            let cb = counterbalance_assign(n, n as u64 * 7);
            assert!(cb.count(PainMode::ANoRobot).abs_diff(cb.count(PainMode::BWithRobot)) <= 1);
        }
    }

    #[test]
    fn pain_session_records() {
        let c = LogicalClock::default();
        let mut s = Session::create(
            "p",
            SessionSpec::Pain(PainConfig {
                participants: 3,
                seed: 1,
            }),
            &c,
        )
        .unwrap();
        assert_eq!(s.state.first_modes.len(), 3);
        let rec = |score| Command::RecordPain {
            participant_id: "k1".into(),
            mode: PainMode::ANoRobot,
            score,
        };
        assert!(s.execute(&rec(10), &c).is_ok());
        assert_eq!(s.execute(&rec(3), &c).unwrap_err().code(), "duplicate_record");
        let eleven = Command::RecordPain {
            participant_id: "k2".into(),
            mode: PainMode::BWithRobot,
            score: 11,
        };
        assert_eq!(s.execute(&eleven, &c).unwrap_err().code(), "score_range");
        assert!(matches!(s.execute(&Command::Roll {}, &c), Err(SessionError::WrongKind { .. })));
        let replayed = Session::replay(&s.events).unwrap();
        assert_eq!(replayed, s);
    }

    #[test]
    fn replay_detects_gaps_and_truncation_is_valid() {
        let s = simulate::simulate_game(GameConfig::default(), 11, &LogicalClock::default()).unwrap();
        let mut gap = s.events.clone();
        gap.remove(5);
        assert_eq!(Session::replay(&gap).unwrap_err(), SessionError::Gap { missing: 6 });
        for cut in 1..s.events.len() {
            let part = Session::replay(&s.events[..cut]).unwrap();
            assert_eq!(part.last_seq(), cut as u64);
        }
        let text = to_jsonl(&s.events);
        let back = Session::replay(&parse_log(&text).unwrap()).unwrap();
        assert_eq!(back, s);
        let bad = text.replacen("\"kind\":\"greeted\"", "\"kind\":\"teleported\"", 1);
        assert_eq!(
            parse_log(&bad).unwrap_err(),
            SessionError::UnknownKind {
                seq: 2,
                kind: "teleported".into()
            }
        );
    }

    #[test]
    fn commands_parse_from_wire_json() {
        let c: Command = serde_json::from_value(json!({"command": "roll", "payload": {}})).unwrap();
        assert_eq!(c, Command::Roll {});
        let c: Command = serde_json::from_value(json!({"command": "finish", "payload": {}})).unwrap();
        assert_eq!(
            c,
            Command::Finish {
                status: SessionStatus::Finished
            }
        );
        let c: Command = serde_json::from_value(
            json!({"command": "record_pain", "payload": {"participant_id": "a", "mode": "B", "score": 4}}),
        )
        .unwrap();
        assert_eq!(c.name(), "record_pain");
        let spec: SessionSpec = serde_json::from_value(json!({"kind": "game", "config": {}})).unwrap();
        assert_eq!(spec, SessionSpec::Game(GameConfig::default()));
    }
}
