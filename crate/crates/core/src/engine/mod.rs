//! The GuanDan state machine: rounds of trick play, level promotion and the
//! tribute phase between rounds.
//!
//! Seats are numbered 0..4 in play order; partners sit opposite (0 and 2,
//! 1 and 3).

pub mod episode;
pub mod game;
pub mod replay;
pub mod round;
pub mod tribute;
pub mod view;

pub use episode::{apply_promotion, assign_values, sample_value, EpisodeState, Valued, MAX_ROUNDS};
pub use game::{Game, GameError, Outcome, Phase};
pub use replay::{resimulate, ReplayError, ReplayEvent};
pub use round::{
    deal_hands, next_seat, partner, round_over, team_of, PlayRecord, Role, RoundResult, RoundState,
    StepError, HAND_SIZE, SEATS,
};
pub use tribute::{tribute_card, tribute_plan, tribute_return, Payment, Return, TributePlan};
pub use view::{PartnerMove, SeatView};
