use maya::landmark::EmotionLabel;
use maya::sessions::simulate::{next_command, scripted_probs};
use maya::sessions::{
    parse_log, to_jsonl, Command, EventBody, GameConfig, GameState, LogicalClock, OvershootRule, Phase, Player,
    RobotAction, RobotActionKind, Session, SessionSpec, SessionStatus,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn dice_are_uniform() {
    let mut g = GameState::new(GameConfig {
        seed: 2024,
        ..GameConfig::default()
    });
    let n = 60_000;
    let mut counts = [0u32; 6];
    for _ in 0..n {
        let v = g.peek_roll();
        let drawn = g.rng.random_range(1..=6u32);
        assert_eq!(v, drawn);
        counts[v as usize - 1] += 1;
    }
    let expected = n as f64 / 6.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(5.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2} p {p} counts {counts:?}");
    for c in counts {
        assert!((c as f64 / n as f64 - 1.0 / 6.0).abs() <= 0.02 / 6.0, "{counts:?}");
    }
}

fn random_command(rng: &mut ChaCha8Rng) -> Command {
    match rng.random_range(0..7) {
        0 => Command::Roll {},
        1 => Command::RobotRoll {},
        2 => Command::Override {},
        3 => Command::Calibrate { seconds: None },
        4 => {
            let target = EmotionLabel::ALL[rng.random_range(0..7)];
            Command::ResolveExpression {
                probs: scripted_probs(rng, target),
            }
        }
        5 => Command::RobotAction {
            action: RobotAction::new(RobotActionKind::Dance),
        },
        _ => Command::ResolveExpression { probs: vec![0.5; 3] },
    }
}

fn check_invariants(s: &Session) {
    let g = s.game().unwrap();
    let top = g.config.board.cell_count;
    assert!(g.positions.child <= top && g.positions.robot <= top);
    let at_top = g.positions.child == top || g.positions.robot == top;
    assert_eq!(g.phase == Phase::Finished, at_top);
    assert_eq!(g.winner.is_some(), at_top);
    if let Some(w) = g.winner {
        assert_eq!(g.positions.get(w), top);
        let other = if w == Player::Child { Player::Robot } else { Player::Child };
        assert!(g.positions.get(other) < top);
    }
    assert!(g.phase != Phase::AwaitingExpression || g.pending_emotion.is_some());
}

fn check_alternation(s: &Session) {
    let mut last: Option<Player> = None;
    for e in &s.events {
        if let EventBody::DiceRolled { player, .. } = e.body {
            assert_ne!(last, Some(player), "two consecutive {player:?} rolls");
            last = Some(player);
        }
    }
}

#[test]
fn fuzzed_games_hold_invariants_and_replay() {
    let clock = LogicalClock::default();
    let mut finished = 0;
    for i in 0..10_000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let mut cfg = GameConfig {
            seed: i,
            pass_threshold: rng.random_range(0.3..0.9),
            max_retries: rng.random_range(0..5),
            ..GameConfig::default()
        };
        if rng.random_bool(0.3) {
            cfg.board.overshoot_rule = OvershootRule::Exact;
        }
        if rng.random_bool(0.2) {
            cfg.board.slides.clear();
        }
        let mut s = Session::create(&format!("fz{i}"), SessionSpec::Game(cfg), &clock).unwrap();
        for _ in 0..2_000 {
            let cmd = if rng.random_bool(0.2) {
                random_command(&mut rng)
            } else {
                match next_command(&s, &mut rng) {
                    Some(c) => c,
                    None => break,
                }
            };
            let before = s.clone();
            match s.execute(&cmd, &clock) {
                Ok((events, _)) => {
                    assert!(!events.is_empty());
                    assert_eq!(events.last().unwrap().seq, s.last_seq());
                }
                Err(_) => assert_eq!(s, before, "failed command changed state"),
            }
            check_invariants(&s);
        }
        assert_eq!(s.status(), SessionStatus::Finished, "game {i} did not finish");
        finished += 1;
        check_alternation(&s);
        for (k, e) in s.events.iter().enumerate() {
            assert_eq!(e.seq, k as u64 + 1);
        }
        let replayed = Session::replay(&s.events).unwrap();
        assert_eq!(replayed, s);
        if i % 100 == 0 {
            let back = Session::replay(&parse_log(&to_jsonl(&s.events)).unwrap()).unwrap();
            assert_eq!(back, s);
        }
    }
    assert_eq!(finished, 10_000);
}
