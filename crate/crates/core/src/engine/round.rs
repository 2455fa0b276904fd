//! Trick play within one round.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::view::{PartnerMove, SeatView};
use crate::cards::{classify, Card, CardSet, Combo, LevelRank, DECK_SIZE};
use crate::movegen::{legal_actions, MoveContext};

pub const SEATS: usize = 4;
pub const HAND_SIZE: usize = 27;

/// Seats 0 and 2 form team 0; seats 1 and 3 form team 1.
pub fn team_of(seat: usize) -> usize {
    seat % 2
}

pub fn partner(seat: usize) -> usize {
    (seat + 2) % SEATS
}

/// Next seat in counterclockwise play order.
pub fn next_seat(seat: usize) -> usize {
    (seat + 1) % SEATS
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("the round is over")]
    RoundOver,
    #[error("seat {seat} acted but it is seat {turn}'s turn")]
    NotYourTurn { seat: usize, turn: usize },
    #[error("the trick leader must play cards")]
    PassWhenLeading,
    #[error("cards {0} are not in the player's hand")]
    NotInHand(String),
    #[error("{0} is not a valid combo under the current level")]
    InvalidCombo(String),
    #[error("{0} does not cover the combo on the table")]
    DoesNotCover(String),
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Banker,
    Follower,
    Third,
    Dweller,
    DoubleDweller,
}

/// Outcome of a finished round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundResult {
    pub roles: [Role; SEATS],
    /// Seats in order of emptying their hands; unfinished seats appended in seat order.
    pub finish_order: [usize; SEATS],
    pub banker: usize,
    pub winning_team: usize,
    /// Levels gained by the winning team: 3, 2 or 1.
    pub promotion: u8,
}

impl RoundResult {
    /// Builds the result from the seats that emptied their hands, once a
    /// team is complete. Returns `None` while the round is still running.
    pub fn from_finish_order(finished: &[usize]) -> Option<RoundResult> {
        let done = (0..2).any(|t| finished.iter().filter(|&&s| team_of(s) == t).count() == 2);
        if !done {
            return None;
        }
        let banker = finished[0];
        let mate = partner(banker);
        let mate_pos = finished.iter().position(|&s| s == mate);
        let promotion = match mate_pos {
            Some(1) => 3,
            Some(2) => 2,
            _ => 1,
        };
        let mut order = finished.to_vec();
        for s in 0..SEATS {
            if !order.contains(&s) {
                order.push(s);
            }
        }
        let mut roles = [Role::Dweller; SEATS];
        for (pos, &s) in order.iter().enumerate() {
            roles[s] = match pos {
                0 => Role::Banker,
                1 => Role::Follower,
                2 => Role::Third,
                _ => Role::Dweller,
            };
        }
        if promotion == 3 {
            roles[order[2]] = Role::DoubleDweller;
            roles[order[3]] = Role::DoubleDweller;
        }
        Some(RoundResult {
            roles,
            finish_order: [order[0], order[1], order[2], order[3]],
            banker,
            winning_team: team_of(banker),
            promotion,
        })
    }

    /// Role of the Banker's partner.
    pub fn partner_role(&self) -> Role {
        self.roles[partner(self.banker)]
    }
}

/// One action in the round log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayRecord {
    pub seat: usize,
    pub combo: Combo,
    pub trick_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundState {
    pub level: LevelRank,
    /// Levels indexed by team.
    pub team_levels: [LevelRank; 2],
    pub hands: [CardSet; SEATS],
    pub turn: usize,
    pub trick_leader: usize,
    pub trick_id: u32,
    /// Most recent non-pass play of the current trick.
    pub last_play: Option<(usize, Combo)>,
    pub consecutive_passes: u8,
    pub finish_order: Vec<usize>,
    /// Per-seat plays in order (passes excluded).
    pub played_history: [Vec<Combo>; SEATS],
    /// Latest action of each seat this round, passes included.
    pub last_actions: [Option<Combo>; SEATS],
    pub log: Vec<PlayRecord>,
}

impl RoundState {
    /// Shuffles the double deck into four 27-card hands; the first leader
    /// is drawn from the same generator.
    pub fn deal(seed: u64) -> RoundState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hands = deal_hands(&mut rng);
        let leader = rng.gen_range(0..SEATS);
        RoundState::with_hands(hands, leader, LevelRank::TWO, [LevelRank::TWO; 2])
    }

    pub fn with_hands(
        hands: [CardSet; SEATS],
        leader: usize,
        level: LevelRank,
        team_levels: [LevelRank; 2],
    ) -> RoundState {
        RoundState {
            level,
            team_levels,
            hands,
            turn: leader,
            trick_leader: leader,
            trick_id: 0,
            last_play: None,
            consecutive_passes: 0,
            finish_order: Vec::new(),
            played_history: Default::default(),
            last_actions: [None; SEATS],
            log: Vec::new(),
        }
    }

    pub fn is_active(&self, seat: usize) -> bool {
        !self.hands[seat].is_empty()
    }

    pub fn is_over(&self) -> bool {
        RoundResult::from_finish_order(&self.finish_order).is_some()
    }

    pub fn result(&self) -> Option<RoundResult> {
        RoundResult::from_finish_order(&self.finish_order)
    }

    /// Combo the current player must cover, `None` when leading.
    pub fn to_beat(&self) -> Option<Combo> {
        self.last_play.map(|(_, c)| c)
    }

    pub fn context(&self) -> MoveContext {
        MoveContext { hand: self.hands[self.turn], to_beat: self.to_beat(), level: self.level }
    }

    pub fn legal_actions(&self) -> Vec<Combo> {
        legal_actions(&self.context())
    }

    /// Cards played so far by all seats.
    pub fn played_cards(&self) -> [CardSet; SEATS] {
        let mut out = [CardSet::new(); SEATS];
        for (seat, plays) in self.played_history.iter().enumerate() {
            for c in plays {
                out[seat] = out[seat].union(&c.cards).expect("played cards come from one deck");
            }
        }
        out
    }

    /// Total cards in hands and in the play history.
    pub fn card_total(&self) -> usize {
        self.hands.iter().map(CardSet::len).sum::<usize>()
            + self.played_history.iter().flatten().map(Combo::size).sum::<usize>()
    }

    fn next_active(&self, seat: usize) -> usize {
        let mut s = next_seat(seat);
        while !self.is_active(s) {
            s = next_seat(s);
        }
        s
    }

    /// Checks that `combo` is a legal action for the player to act.
    pub fn validate(&self, combo: &Combo) -> Result<(), StepError> {
        if self.is_over() {
            return Err(StepError::RoundOver);
        }
        let to_beat = self.to_beat();
        if combo.is_pass() {
            return if to_beat.is_none() { Err(StepError::PassWhenLeading) } else { Ok(()) };
        }
        if !self.hands[self.turn].contains(&combo.cards) {
            return Err(StepError::NotInHand(combo.cards.notation()));
        }
        let valid = classify(&combo.cards, self.level)
            .map(|all| all.contains(combo))
            .unwrap_or(false);
        if !valid {
            return Err(StepError::InvalidCombo(combo.notation()));
        }
        match to_beat {
            Some(b) if !combo.covers(&b) => Err(StepError::DoesNotCover(combo.notation())),
            _ => Ok(()),
        }
    }

    /// Applies an action for `seat`, which must be the player to act.
    pub fn apply_for(&mut self, seat: usize, combo: &Combo) -> Result<(), StepError> {
        if seat != self.turn {
            return Err(StepError::NotYourTurn { seat, turn: self.turn });
        }
        self.apply(combo)
    }

    /// Applies an action for the player to act.
    pub fn apply(&mut self, combo: &Combo) -> Result<(), StepError> {
        self.validate(combo)?;
        let seat = self.turn;
        self.log.push(PlayRecord { seat, combo: *combo, trick_id: self.trick_id });
        self.last_actions[seat] = Some(*combo);
        if combo.is_pass() {
            self.consecutive_passes += 1;
            let (last, _) = self.last_play.expect("following implies a play on the table");
            let active = (0..SEATS).filter(|&s| self.is_active(s)).count();
            let needed = if self.is_active(last) { active - 1 } else { active };
            if self.consecutive_passes as usize >= needed {
                let leader = if self.is_active(last) { last } else { partner(last) };
                self.trick_id += 1;
                self.last_play = None;
                self.consecutive_passes = 0;
                self.trick_leader = leader;
                self.turn = leader;
            } else {
                self.turn = self.next_active(seat);
            }
            return Ok(());
        }
        self.hands[seat] = self.hands[seat].difference(&combo.cards).expect("validated");
        self.played_history[seat].push(*combo);
        self.last_play = Some((seat, *combo));
        self.consecutive_passes = 0;
        if self.hands[seat].is_empty() {
            self.finish_order.push(seat);
        }
        if !self.is_over() {
            self.turn = self.next_active(seat);
        }
        Ok(())
    }

    /// Pure variant of [`RoundState::apply`].
    pub fn step(&self, combo: &Combo) -> Result<RoundState, StepError> {
        let mut next = self.clone();
        next.apply(combo)?;
        Ok(next)
    }

    /// What `seat` is allowed to see.
    pub fn view(&self, seat: usize) -> SeatView {
        let mate = partner(seat);
        let partner_move = if !self.is_active(mate) {
            PartnerMove::Finished
        } else {
            match self.last_actions[mate] {
                Some(c) if !c.is_pass() => PartnerMove::Played(c),
                Some(_) => PartnerMove::Passed,
                None => PartnerMove::None,
            }
        };
        SeatView {
            seat,
            hand: self.hands[seat],
            level: self.level,
            team_levels: self.team_levels,
            hand_counts: std::array::from_fn(|s| self.hands[s].len() as u8),
            played: self.played_cards(),
            to_beat: self.last_play,
            partner_move,
            last_actions: self.last_actions,
            finish_order: self.finish_order.clone(),
            turn: self.turn,
            trick_id: self.trick_id,
            history: self.log.clone(),
        }
    }
}

/// Shuffles 108 cards into four hands of 27.
pub fn deal_hands<R: Rng>(rng: &mut R) -> [CardSet; SEATS] {
    let mut deck: Vec<Card> = CardSet::full_deck().to_vec();
    debug_assert_eq!(deck.len(), DECK_SIZE);
    deck.shuffle(rng);
    std::array::from_fn(|s| {
        CardSet::from_cards(deck[s * HAND_SIZE..(s + 1) * HAND_SIZE].iter().copied())
            .expect("a double deck has two copies per card")
    })
}

/// Round-result helper for `step`-style callers.
pub fn round_over(state: &RoundState) -> Option<RoundResult> {
    state.result()
}
