//! Level progression across rounds and per-sample values.

use serde::{Deserialize, Serialize};

use super::round::{team_of, RoundResult};
use crate::cards::{LevelRank, Rank};

/// Rounds after which an episode is decided on levels.
pub const MAX_ROUNDS: u32 = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeState {
    pub team_levels: [LevelRank; 2],
    /// Level of the round being played: the last round winner's level.
    pub current_level: LevelRank,
    /// 1-based.
    pub round_index: u32,
    pub last_result: Option<RoundResult>,
    pub episode_winner: Option<usize>,
}

impl Default for EpisodeState {
    fn default() -> Self {
        EpisodeState::new()
    }
}

impl EpisodeState {
    pub fn new() -> EpisodeState {
        EpisodeState {
            team_levels: [LevelRank::TWO; 2],
            current_level: LevelRank::TWO,
            round_index: 1,
            last_result: None,
            episode_winner: None,
        }
    }

    pub fn is_over(&self) -> bool {
        self.episode_winner.is_some()
    }

    /// Team with the higher level, ties going to the last round's winner.
    pub fn leader_on_levels(&self) -> usize {
        let [a, b] = self.team_levels.map(|l| l.index());
        match a.cmp(&b) {
            std::cmp::Ordering::Greater => 0,
            std::cmp::Ordering::Less => 1,
            std::cmp::Ordering::Equal => self.last_result.as_ref().map_or(0, |r| r.winning_team),
        }
    }
}

/// Applies a finished round. A team passes A only by winning a round played
/// at level A with its own level at A and the Banker's partner not last;
/// otherwise promotion stops at A.
pub fn apply_promotion(episode: &EpisodeState, result: &RoundResult) -> EpisodeState {
    let mut next = episode.clone();
    let team = result.winning_team;
    let level = episode.team_levels[team];
    if level == LevelRank::ACE && episode.current_level == LevelRank::ACE && result.promotion >= 2 {
        next.episode_winner = Some(team);
    } else {
        next.team_levels[team] = level.promoted(result.promotion);
    }
    next.current_level = next.team_levels[team];
    next.last_result = Some(result.clone());
    next.round_index += 1;
    if next.episode_winner.is_none() && episode.round_index >= MAX_ROUNDS {
        next.episode_winner = Some(next.leader_on_levels());
    }
    next
}

/// Value of one sample taken by `seat` in a round with `result`.
/// `episode_winner` adds the episode bonus of one when known.
pub fn sample_value(result: &RoundResult, seat: usize, episode_winner: Option<usize>) -> f32 {
    let p = result.promotion as f32;
    let round = if team_of(seat) == result.winning_team { p } else { -p };
    let bonus = match episode_winner {
        Some(t) if t == team_of(seat) => 1.0,
        Some(_) => -1.0,
        None => 0.0,
    };
    round + bonus
}

/// A training sample that receives a value after the episode.
pub trait Valued {
    fn seat(&self) -> usize;
    /// 0-based index of the round the sample was taken in.
    fn round(&self) -> usize;
    fn set_value(&mut self, r: f32);
}

/// Fills in the value of every sample from the round results.
pub fn assign_values<S: Valued>(results: &[RoundResult], episode_winner: Option<usize>, samples: &mut [S]) {
    for s in samples {
        let r = sample_value(&results[s.round()], s.seat(), episode_winner);
        s.set_value(r);
    }
}

/// Whether `rank` is the level at which an episode can be won.
pub fn is_final_level(level: LevelRank) -> bool {
    level.rank() == Rank::Ace
}
