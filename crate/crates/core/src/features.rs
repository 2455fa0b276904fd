//! Fixed-width encodings of seat views and actions.
//!
//! State layout (513 values):
//!
//! | range     | content                                                  |
//! |-----------|----------------------------------------------------------|
//! | 0..54     | own hand                                                 |
//! | 54..108   | unseen cards: deck minus own hand minus everything played |
//! | 108..162  | combo to beat, zero when leading                         |
//! | 162..216  | partner's last action; zero for pass, -1 if finished     |
//! | 216..300  | one-hot hand size (0..=27) of the next three seats       |
//! | 300..462  | cards played so far by the next three seats              |
//! | 462..501  | one-hot levels: ours, theirs, current round              |
//! | 501..513  | wild flags, see [`WILD_FLAGS`]                           |

use thiserror::Error;

use crate::cards::{CardSet, Combo, NUM_IDS, NUM_RANKS};
use crate::engine::{PartnerMove, SeatView};
use crate::movegen::wild_completions;

pub const STATE_DIM: usize = 513;
pub const ACTION_DIM: usize = NUM_IDS;
pub const Q_INPUT_DIM: usize = STATE_DIM + ACTION_DIM;
/// Bumped whenever the layout changes; stored in checkpoints.
pub const LAYOUT_VERSION: u32 = 1;

pub const HAND: usize = 0;
pub const UNSEEN: usize = 54;
pub const TO_BEAT: usize = 108;
pub const PARTNER_MOVE: usize = 162;
pub const COUNTS: usize = 216;
pub const COUNT_SLOTS: usize = 28;
pub const PLAYED: usize = 300;
pub const LEVELS: usize = 462;
/// Offset 0: holds a wild; 1: holds both wilds; 2..10: a wild completes the
/// kind in [`crate::movegen::WILD_FLAG_KINDS`] order; 10, 11: always zero.
pub const WILD_FLAGS: usize = 501;

pub type StateVec = [i8; STATE_DIM];
pub type ActionVec = [i8; ACTION_DIM];

fn put_set(out: &mut [i8], offset: usize, set: &CardSet) {
    for (o, &c) in out[offset..offset + NUM_IDS].iter_mut().zip(set.counts()) {
        *o = c as i8;
    }
}

pub fn encode_state(view: &SeatView) -> StateVec {
    let mut v = [0i8; STATE_DIM];
    put_set(&mut v, HAND, &view.hand);
    put_set(&mut v, UNSEEN, &view.unseen());
    if let Some((_, c)) = &view.to_beat {
        put_set(&mut v, TO_BEAT, &c.cards);
    }
    match view.partner_move {
        PartnerMove::Played(c) => put_set(&mut v, PARTNER_MOVE, &c.cards),
        PartnerMove::Finished => v[PARTNER_MOVE..PARTNER_MOVE + NUM_IDS].fill(-1),
        PartnerMove::Passed | PartnerMove::None => {}
    }
    for (i, s) in view.others().into_iter().enumerate() {
        let n = (view.hand_counts[s] as usize).min(COUNT_SLOTS - 1);
        v[COUNTS + i * COUNT_SLOTS + n] = 1;
        put_set(&mut v, PLAYED + i * NUM_IDS, &view.played[s]);
    }
    for (i, lv) in [view.our_level(), view.their_level(), view.level].into_iter().enumerate() {
        v[LEVELS + i * NUM_RANKS + lv.index()] = 1;
    }
    let wilds = view.hand.count(view.level.wild_card());
    v[WILD_FLAGS] = (wilds >= 1) as i8;
    v[WILD_FLAGS + 1] = (wilds == 2) as i8;
    for (i, f) in wild_completions(&view.hand, view.level).into_iter().enumerate() {
        v[WILD_FLAGS + 2 + i] = f as i8;
    }
    v
}

/// Card counts of the combo; Pass is all zeros.
pub fn encode_action(combo: &Combo) -> ActionVec {
    let mut a = [0i8; ACTION_DIM];
    put_set(&mut a, 0, &combo.cards);
    a
}

/// State followed by action, as network input.
pub fn q_input(state: &StateVec, action: &ActionVec) -> Vec<f32> {
    let mut out = vec![0.0; Q_INPUT_DIM];
    q_input_into(state, action, &mut out);
    out
}

pub fn q_input_into(state: &StateVec, action: &ActionVec, out: &mut [f32]) {
    for (o, &x) in out.iter_mut().zip(state.iter().chain(action.iter())) {
        *o = x as f32;
    }
}

/// Splits a Q-network input back into its parts.
pub fn split_q_input(input: &[f32]) -> (StateVec, ActionVec) {
    let mut s = [0i8; STATE_DIM];
    let mut a = [0i8; ACTION_DIM];
    for (o, &x) in s.iter_mut().zip(&input[..STATE_DIM]) {
        *o = x as i8;
    }
    for (o, &x) in a.iter_mut().zip(&input[STATE_DIM..]) {
        *o = x as i8;
    }
    (s, a)
}

pub fn ppo_input_dim(k: usize) -> usize {
    STATE_DIM + k * ACTION_DIM + k
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("no candidate actions")]
    NoCandidates,
    #[error("{got} candidates exceed k = {k}")]
    TooManyCandidates { got: usize, k: usize },
}

/// State plus `k` candidate slots; unused slots are filled with -1 and
/// flagged illegal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PpoInput {
    pub state: StateVec,
    pub candidates: Vec<ActionVec>,
    pub legal: Vec<bool>,
}

impl PpoInput {
    pub fn k(&self) -> usize {
        self.legal.len()
    }

    pub fn n_legal(&self) -> usize {
        self.legal.iter().filter(|&&l| l).count()
    }

    /// Flat network input: state, k candidate vectors, k legality flags.
    pub fn to_vec(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(ppo_input_dim(self.k()));
        self.write_into(&mut out);
        out
    }

    pub fn write_into(&self, out: &mut Vec<f32>) {
        out.extend(self.state.iter().map(|&x| x as f32));
        for c in &self.candidates {
            out.extend(c.iter().map(|&x| x as f32));
        }
        out.extend(self.legal.iter().map(|&l| l as u8 as f32));
    }
}

pub fn ppo_input(state: &StateVec, candidates: &[Combo], k: usize) -> Result<PpoInput, FeatureError> {
    if candidates.is_empty() {
        return Err(FeatureError::NoCandidates);
    }
    if candidates.len() > k {
        return Err(FeatureError::TooManyCandidates { got: candidates.len(), k });
    }
    let mut slots: Vec<ActionVec> = candidates.iter().map(encode_action).collect();
    slots.resize(k, [-1; ACTION_DIM]);
    let legal = (0..k).map(|i| i < candidates.len()).collect();
    Ok(PpoInput { state: *state, candidates: slots, legal })
}
