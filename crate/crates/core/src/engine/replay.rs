//! JSON-lines replay log that re-simulates an episode exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::round::{RoundResult, RoundState, StepError, SEATS};
use super::tribute::{Payment, Return};
use crate::cards::{CardSet, Combo, LevelRank};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ReplayEvent {
    RoundStart {
        round: u32,
        level: LevelRank,
        team_levels: [LevelRank; 2],
        /// Hands after tribute and returns.
        hands: [CardSet; SEATS],
        leader: usize,
        #[serde(default)]
        tribute: Vec<Payment>,
        #[serde(default)]
        returns: Vec<Return>,
        #[serde(default)]
        anti_tribute: bool,
    },
    Play {
        round: u32,
        seat: usize,
        combo: Combo,
        trick_id: u32,
        level: LevelRank,
    },
    RoundEnd {
        round: u32,
        result: RoundResult,
    },
    EpisodeEnd {
        winner: usize,
        team_levels: [LevelRank; 2],
        rounds: u32,
    },
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("event {0} arrived outside a round")]
    OutsideRound(usize),
    #[error("event {index}: {source}")]
    Illegal { index: usize, source: StepError },
    #[error("event {0} disagrees with the re-simulated state")]
    Mismatch(usize),
}

pub fn to_jsonl(events: &[ReplayEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("replay events serialize"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<ReplayEvent>, ReplayError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| ReplayError::Parse { line: i + 1, source }))
        .collect()
}

/// Replays every round from its starting hands and checks each recorded
/// trick id and round result against the engine.
pub fn resimulate(events: &[ReplayEvent]) -> Result<Vec<RoundResult>, ReplayError> {
    let mut state: Option<RoundState> = None;
    let mut results = Vec::new();
    for (i, e) in events.iter().enumerate() {
        match e {
            ReplayEvent::RoundStart { level, team_levels, hands, leader, .. } => {
                state = Some(RoundState::with_hands(*hands, *leader, *level, *team_levels));
            }
            ReplayEvent::Play { seat, combo, trick_id, level, .. } => {
                let s = state.as_mut().ok_or(ReplayError::OutsideRound(i))?;
                if s.trick_id != *trick_id || s.level != *level {
                    return Err(ReplayError::Mismatch(i));
                }
                s.apply_for(*seat, combo).map_err(|source| ReplayError::Illegal { index: i, source })?;
            }
            ReplayEvent::RoundEnd { result, .. } => {
                let s = state.take().ok_or(ReplayError::OutsideRound(i))?;
                // a forfeited round ends early; its result is taken as recorded
                if let Some(r) = s.result() {
                    if &r != result {
                        return Err(ReplayError::Mismatch(i));
                    }
                }
                results.push(result.clone());
            }
            ReplayEvent::EpisodeEnd { .. } => {}
        }
    }
    Ok(results)
}
