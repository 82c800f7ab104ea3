use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::board::BoardConfig;
use super::event::EventBody;
use super::SessionError;
use crate::landmark::EmotionLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Child,
    Robot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingNeutralCalibration,
    AwaitingRoll,
    AwaitingExpression,
    RobotTurn,
    Finished,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::AwaitingNeutralCalibration => "awaiting_neutral_calibration",
            Phase::AwaitingRoll => "awaiting_roll",
            Phase::AwaitingExpression => "awaiting_expression",
            Phase::RobotTurn => "robot_turn",
            Phase::Finished => "finished",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    pub child_name: String,
    pub seed: u64,
    pub board: BoardConfig,
    pub pass_threshold: f64,
    pub max_retries: u32,
    pub calibration_seconds: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            child_name: "child".into(),
            seed: 0,
            board: BoardConfig::default(),
            pass_threshold: 0.5,
            max_retries: 3,
            calibration_seconds: 3.0,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        self.board.validate()?;
        if !(0.0..=1.0).contains(&self.pass_threshold) {
            return Err(SessionError::InvalidConfig {
                field: "pass_threshold".into(),
                message: format!("{} outside [0, 1]", self.pass_threshold),
            });
        }
        if !(self.calibration_seconds >= 0.0 && self.calibration_seconds.is_finite()) {
            return Err(SessionError::InvalidConfig {
                field: "calibration_seconds".into(),
                message: format!("{} is not a non-negative duration", self.calibration_seconds),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Positions {
    pub child: u32,
    pub robot: u32,
}

impl Positions {
    pub fn get(&self, p: Player) -> u32 {
        match p {
            Player::Child => self.child,
            Player::Robot => self.robot,
        }
    }

    fn set(&mut self, p: Player, v: u32) {
        match p {
            Player::Child => self.child = v,
            Player::Robot => self.robot = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub config: GameConfig,
    pub positions: Positions,
    pub turn: Player,
    pub phase: Phase,
    pub pending_emotion: Option<EmotionLabel>,
    pub retry_count: u32,
    pub last_roll: Option<u32>,
    pub winner: Option<Player>,
    pub rng: ChaCha8Rng,
}

impl GameState {
    pub fn new(config: GameConfig) -> Self {
        GameState {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            positions: Positions::default(),
            turn: Player::Child,
            phase: Phase::AwaitingNeutralCalibration,
            pending_emotion: None,
            retry_count: 0,
            last_roll: None,
            winner: None,
        }
    }

    /// The value the next roll will produce, without consuming it.
    pub fn peek_roll(&self) -> u32 {
        self.rng.clone().random_range(1..=self.config.board.dice_sides)
    }

    fn expect_phase(&self, phases: &[Phase]) -> Result<(), String> {
        if phases.contains(&self.phase) {
            Ok(())
        } else {
            Err(format!("phase is {}", self.phase.name()))
        }
    }

    /// Folds one event into the state, checking it against the rules.
    pub(crate) fn apply(&mut self, body: &EventBody) -> Result<(), String> {
        let board = &self.config.board;
        match body {
            EventBody::Greeted { .. } | EventBody::NameAsked {} => {
                self.expect_phase(&[Phase::AwaitingNeutralCalibration])?;
            }
            EventBody::NeutralCalibrated { .. } => {
                self.expect_phase(&[Phase::AwaitingNeutralCalibration])?;
                self.phase = Phase::AwaitingRoll;
                self.turn = Player::Child;
            }
            EventBody::DiceRolled { player, value } => {
                let want = match player {
                    Player::Child => Phase::AwaitingRoll,
                    Player::Robot => Phase::RobotTurn,
                };
                self.expect_phase(&[want])?;
                if *player != self.turn || self.last_roll.is_some() {
                    return Err(format!("{player:?} cannot roll now"));
                }
                let drawn = self.rng.random_range(1..=board.dice_sides);
                if drawn != *value {
                    return Err(format!("dice value {value} does not match the seeded draw {drawn}"));
                }
                self.last_roll = Some(drawn);
            }
            EventBody::Moved {
                player,
                from,
                landed,
                to,
                jump,
            } => {
                let roll = self.last_roll.take().ok_or("move without a roll")?;
                if *player != self.turn || *from != self.positions.get(*player) {
                    return Err(format!("{player:?} is not at cell {from}"));
                }
                let step = board.step(*from, roll);
                if (step.landed, step.to, step.jump) != (*landed, *to, *jump) {
                    return Err(format!("move {from} -> {to} disagrees with the board ({step:?})"));
                }
                self.positions.set(*player, *to);
                if *to < board.cell_count {
                    match player {
                        Player::Child => {
                            self.phase = Phase::AwaitingExpression;
                            self.pending_emotion = board.emotion(*to);
                            self.retry_count = 0;
                        }
                        Player::Robot => {
                            self.phase = Phase::AwaitingRoll;
                            self.turn = Player::Child;
                        }
                    }
                }
            }
            EventBody::WordPrompted { emotion, .. } | EventBody::WordTaught { emotion, .. } => {
                self.expect_phase(&[Phase::AwaitingExpression])?;
                if Some(*emotion) != self.pending_emotion {
                    return Err(format!("{emotion} is not the pending emotion"));
                }
            }
            EventBody::ExpressionAttempt { expected, .. } => {
                self.expect_phase(&[Phase::AwaitingExpression])?;
                if Some(*expected) != self.pending_emotion {
                    return Err(format!("{expected} is not the pending emotion"));
                }
            }
            EventBody::RetryRequested { retry_count } => {
                self.expect_phase(&[Phase::AwaitingExpression])?;
                if *retry_count != self.retry_count + 1 {
                    return Err(format!("retry count {retry_count} after {}", self.retry_count));
                }
                self.retry_count = *retry_count;
            }
            EventBody::ExpressionPassed { emotion, overridden } => {
                self.expect_phase(&[Phase::AwaitingExpression])?;
                if Some(*emotion) != self.pending_emotion {
                    return Err(format!("{emotion} is not the pending emotion"));
                }
                if *overridden && self.retry_count < self.config.max_retries {
                    return Err(format!("override before {} retries", self.config.max_retries));
                }
                self.pending_emotion = None;
                self.retry_count = 0;
                self.phase = Phase::RobotTurn;
                self.turn = Player::Robot;
            }
            EventBody::GameWon { winner } => {
                if self.positions.get(*winner) != board.cell_count || self.winner.is_some() {
                    return Err(format!("{winner:?} has not reached the top cell"));
                }
                self.winner = Some(*winner);
                self.phase = Phase::Finished;
                self.pending_emotion = None;
            }
            EventBody::Farewell {} | EventBody::RobotAction { .. } | EventBody::SessionFinished { .. } => {}
            other => return Err(format!("{} does not apply to a game", other.kind())),
        }
        Ok(())
    }
}
