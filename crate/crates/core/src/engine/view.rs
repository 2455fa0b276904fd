use serde::{Deserialize, Serialize};

use super::round::{partner, team_of, PlayRecord, SEATS};
use crate::cards::{CardSet, Combo, LevelRank};

/// Partner's most recent action in the current round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "combo", rename_all = "snake_case")]
pub enum PartnerMove {
    /// Partner has not acted yet this round.
    None,
    Passed,
    Played(Combo),
    /// Partner has emptied their hand.
    Finished,
}

/// Everything one seat is allowed to know about the round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeatView {
    pub seat: usize,
    pub hand: CardSet,
    pub level: LevelRank,
    pub team_levels: [LevelRank; 2],
    pub hand_counts: [u8; SEATS],
    /// Cumulative cards played by each seat.
    pub played: [CardSet; SEATS],
    pub to_beat: Option<(usize, Combo)>,
    pub partner_move: PartnerMove,
    pub last_actions: [Option<Combo>; SEATS],
    pub finish_order: Vec<usize>,
    pub turn: usize,
    pub trick_id: u32,
    /// Public play log of the round.
    pub history: Vec<PlayRecord>,
}

impl SeatView {
    pub fn partner(&self) -> usize {
        partner(self.seat)
    }

    pub fn our_level(&self) -> LevelRank {
        self.team_levels[team_of(self.seat)]
    }

    pub fn their_level(&self) -> LevelRank {
        self.team_levels[1 - team_of(self.seat)]
    }

    /// Other seats in play order starting from the next seat.
    pub fn others(&self) -> [usize; 3] {
        [1, 2, 3].map(|d| (self.seat + d) % SEATS)
    }

    /// Cards neither in this hand nor played by anyone.
    pub fn unseen(&self) -> CardSet {
        let mut out = CardSet::full_deck().difference(&self.hand).expect("hand is part of the deck");
        for p in &self.played {
            out = out.difference(p).expect("played cards are part of the deck");
        }
        out
    }

    /// Smallest hand size among opponents still holding cards.
    pub fn min_opponent_cards(&self) -> Option<u8> {
        [1, 3]
            .map(|d| (self.seat + d) % SEATS)
            .into_iter()
            .map(|s| self.hand_counts[s])
            .filter(|&n| n > 0)
            .min()
    }
}
