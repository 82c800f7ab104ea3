//! Scripted games: seeded stand-ins for the operator and the classifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Clock, Command, GameConfig, Phase, RobotAction, Session, SessionError, SessionSpec};
use crate::landmark::EmotionLabel;

/// Upper bound on commands in one scripted game.
pub const MAX_STEPS: usize = 10_000;

/// A probability vector peaked on `target`.
pub fn scripted_probs(rng: &mut impl Rng, target: EmotionLabel) -> Vec<f64> {
    let peak = rng.random_range(0.55..0.95);
    let raw: Vec<f64> = (0..EmotionLabel::COUNT).map(|_| rng.random_range(0.01..1.0)).collect();
    let rest: f64 = raw.iter().enumerate().filter(|(i, _)| *i != target.index()).map(|(_, v)| v).sum();
    raw.iter()
        .enumerate()
        .map(|(i, v)| if i == target.index() { peak } else { v / rest * (1.0 - peak) })
        .collect()
}

/// The operator's next move in a scripted game.
pub fn next_command(session: &Session, rng: &mut impl Rng) -> Option<Command> {
    let g = session.game()?;
    Some(match g.phase {
        Phase::Finished => return None,
        Phase::AwaitingNeutralCalibration => Command::Calibrate { seconds: None },
        Phase::AwaitingRoll => Command::Roll {},
        Phase::RobotTurn => Command::RobotRoll {},
        Phase::AwaitingExpression => {
            let expected = g.pending_emotion?;
            if g.retry_count >= g.config.max_retries {
                Command::Override {}
            } else if g.retry_count == 1 && rng.random_bool(0.5) {
                Command::RobotAction {
                    action: RobotAction::speak(expected.name(), "en"),
                }
            } else {
                let target = if rng.random_bool(0.6) {
                    expected
                } else {
                    let others: Vec<EmotionLabel> = EmotionLabel::ALL.into_iter().filter(|&l| l != expected).collect();
                    others[rng.random_range(0..others.len())]
                };
                Command::ResolveExpression {
                    probs: scripted_probs(rng, target),
                }
            }
        }
    })
}

/// Plays a whole game. The board dice come from `config.seed`; the
/// operator and classifier script from `script_seed`.
pub fn simulate_game(config: GameConfig, script_seed: u64, clock: &dyn Clock) -> Result<Session, SessionError> {
    let id = format!("sim-{}", config.seed);
    let mut session = Session::create(&id, SessionSpec::Game(config), clock)?;
    let mut rng = ChaCha8Rng::seed_from_u64(script_seed);
    for _ in 0..MAX_STEPS {
        let Some(cmd) = next_command(&session, &mut rng) else { break };
        session.execute(&cmd, clock)?;
    }
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sessions::{to_jsonl, LogicalClock, SessionStatus};

    #[test]
    fn probs_are_a_distribution_peaked_on_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for l in EmotionLabel::ALL {
            let p = scripted_probs(&mut rng, l);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(crate::nn::argmax(&p), l.index());
        }
    }

    #[test]
    fn games_finish_and_logs_are_reproducible() {
        let run = || {
            let cfg = GameConfig {
                seed: 7,
                ..GameConfig::default()
            };
            to_jsonl(&simulate_game(cfg, 7, &LogicalClock::default()).unwrap().events)
        };
        let a = run();
        assert_eq!(a, run());
        let s = simulate_game(GameConfig::default(), 3, &LogicalClock::default()).unwrap();
        assert_eq!(s.status(), SessionStatus::Finished);
        assert!(s.game().unwrap().winner.is_some());
    }
}
