use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::landmark::EmotionLabel;

pub const BOARD_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OvershootRule {
    /// A roll past the top cell lands on it.
    #[default]
    Clamp,
    /// A roll past the top cell leaves the piece where it is.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Jump {
    Ladder,
    Slide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoardConfig {
    pub v: u32,
    pub cell_count: u32,
    /// Emotion of cells 1..=cell_count, in order.
    pub cell_emotions: Vec<EmotionLabel>,
    pub ladders: Vec<(u32, u32)>,
    pub slides: Vec<(u32, u32)>,
    pub overshoot_rule: OvershootRule,
    pub dice_sides: u32,
}

impl Default for BoardConfig {
    fn default() -> Self {
        Self::with_cells(30)
    }
}

/// Where a move ends up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub landed: u32,
    pub to: u32,
    pub jump: Option<Jump>,
}

impl BoardConfig {
    /// `cell_count` cells cycling through the six non-neutral emotions, with
    /// the default ladders and slides kept when they fit.
    pub fn with_cells(cell_count: u32) -> Self {
        let fits = |&(a, b): &(u32, u32)| a < cell_count && b < cell_count;
        BoardConfig {
            v: BOARD_VERSION,
            cell_count,
            cell_emotions: (0..cell_count as usize)
                .map(|i| EmotionLabel::NON_NEUTRAL[i % EmotionLabel::NON_NEUTRAL.len()])
                .collect(),
            ladders: [(3, 12), (8, 19), (15, 23)].into_iter().filter(fits).collect(),
            slides: [(13, 5), (21, 10), (28, 17)].into_iter().filter(fits).collect(),
            overshoot_rule: OvershootRule::Clamp,
            dice_sides: 6,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |field: String, message: String| Err(SessionError::InvalidConfig { field, message });
        if self.v != BOARD_VERSION {
            return bad("board.v".into(), format!("unsupported version {}", self.v));
        }
        if self.cell_count < 2 {
            return bad("board.cell_count".into(), "need at least 2 cells".into());
        }
        if self.dice_sides < 2 {
            return bad("board.dice_sides".into(), "need at least 2 sides".into());
        }
        if self.cell_emotions.len() != self.cell_count as usize {
            return bad(
                "board.cell_emotions".into(),
                format!("{} entries for {} cells", self.cell_emotions.len(), self.cell_count),
            );
        }
        if let Some(i) = self.cell_emotions.iter().position(|&e| e == EmotionLabel::Neutral) {
            return bad(format!("board.cell_emotions[{i}]"), "neutral is not a board emotion".into());
        }
        let n = self.cell_count;
        let mut starts = std::collections::BTreeSet::new();
        for (name, list, up) in [("ladders", &self.ladders, true), ("slides", &self.slides, false)] {
            for (i, &(from, to)) in list.iter().enumerate() {
                let field = format!("board.{name}[{i}]");
                if !(1..=n).contains(&from) || !(1..=n).contains(&to) {
                    return bad(field, format!("({from}, {to}) outside [1, {n}]"));
                }
                if up != (from < to) || from == to {
                    let dir = if up { "from < to" } else { "from > to" };
                    return bad(field, format!("({from}, {to}) must have {dir}"));
                }
                if from == n {
                    return bad(field, "the top cell cannot start a ladder or slide".into());
                }
                if !starts.insert(from) {
                    return bad(field, format!("cell {from} already starts a ladder or slide"));
                }
            }
        }
        Ok(())
    }

    /// Emotion painted on `cell` (1-based).
    pub fn emotion(&self, cell: u32) -> Option<EmotionLabel> {
        cell.checked_sub(1).and_then(|i| self.cell_emotions.get(i as usize)).copied()
    }

    pub fn step(&self, from: u32, roll: u32) -> Step {
        let target = from + roll;
        let landed = if target <= self.cell_count {
            target
        } else {
            match self.overshoot_rule {
                OvershootRule::Clamp => self.cell_count,
                OvershootRule::Exact => from,
            }
        };
        if let Some(&(_, to)) = self.ladders.iter().find(|l| l.0 == landed) {
            return Step {
                landed,
                to,
                jump: Some(Jump::Ladder),
            };
        }
        if let Some(&(_, to)) = self.slides.iter().find(|s| s.0 == landed) {
            return Step {
                landed,
                to,
                jump: Some(Jump::Slide),
            };
        }
        Step { landed, to: landed, jump: None }
    }
}
