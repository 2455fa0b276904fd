//! Exhaustive reference move generator.
//!
//! Enumerates every sub-multiset of the hand and every assignment of its wild
//! cards to concrete non-joker cards, then checks the combo definitions on the
//! resulting "virtual" cards directly. Slow by design; only for small hands.

use thiserror::Error;

use super::MoveContext;
use crate::cards::{Card, CardSet, Combo, ComboKind, Elevation, LevelRank, Rank, ELEVATION, NUM_IDS};

/// Largest hand the oracle accepts.
pub const ORACLE_MAX_HAND: usize = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MoveGenError {
    #[error("hand is empty")]
    EmptyHand,
    #[error("hand has {0} cards; the oracle accepts at most {ORACLE_MAX_HAND}")]
    HandTooLarge(usize),
    #[error("a Pass cannot be the combo to beat")]
    PassToBeat,
}

/// Reference legal action set: leads when `to_beat` is `None`, otherwise Pass
/// plus every covering combo.
pub fn oracle_moves(ctx: &MoveContext) -> Result<Vec<Combo>, MoveGenError> {
    let n = ctx.hand.len();
    if n == 0 {
        return Err(MoveGenError::EmptyHand);
    }
    if n > ORACLE_MAX_HAND {
        return Err(MoveGenError::HandTooLarge(n));
    }
    if ctx.to_beat.is_some_and(|b| b.is_pass()) {
        return Err(MoveGenError::PassToBeat);
    }
    let mut out = Vec::new();
    for sub in sub_multisets(&ctx.hand) {
        for combo in definitional_classify(&sub, ctx.level) {
            match &ctx.to_beat {
                None => out.push(combo),
                Some(b) if combo.covers(b) => out.push(combo),
                _ => {}
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    if ctx.to_beat.is_some() {
        out.insert(0, Combo::PASS);
    }
    Ok(out)
}

/// All non-empty sub-multisets of `hand`.
pub fn sub_multisets(hand: &CardSet) -> Vec<CardSet> {
    let ids: Vec<(usize, u8)> = (0..NUM_IDS)
        .filter_map(|i| {
            let c = hand.counts()[i];
            (c > 0).then_some((i, c))
        })
        .collect();
    let mut out = vec![CardSet::new()];
    for (i, c) in ids {
        let mut next = Vec::with_capacity(out.len() * (c as usize + 1));
        for s in &out {
            for k in 0..=c {
                let mut t = *s;
                if k > 0 {
                    t.insert_n(Card::from_index(i), k);
                }
                next.push(t);
            }
        }
        out = next;
    }
    out.retain(|s| !s.is_empty());
    out
}

/// A card after wild resolution: natural rank index 0..=12 or a joker
/// (13, 14), plus suit index (4 for jokers).
#[derive(Clone, Copy)]
struct Virtual {
    rank: usize,
    suit: usize,
}

/// Interpretations of exactly `cards` found by trying every wild assignment.
pub fn definitional_classify(cards: &CardSet, level: LevelRank) -> Vec<Combo> {
    let wild = level.wild_card();
    let all: Vec<Card> = cards.iter().collect();
    let fixed: Vec<Virtual> = all
        .iter()
        .filter(|c| **c != wild)
        .map(|c| Virtual { rank: c.rank().index(), suit: c.suit().map_or(4, |s| s.index()) })
        .collect();
    let nw = all.len() - fixed.len();
    let mut out = Vec::new();
    if all.len() == 1 {
        // a lone card is only itself
        let r = all[0].rank();
        out.push(Combo::new(ComboKind::Single, order(r.index(), level), *cards));
        return out;
    }
    // wilds are identical cards, so unordered assignments suffice
    let targets: Vec<Virtual> = (0..52).map(|i| Virtual { rank: i / 4, suit: i % 4 }).collect();
    let mut assignment = Vec::with_capacity(nw);
    assign(&targets, nw, 0, &mut assignment, &mut |virt: &[Virtual]| {
        let mut v = fixed.clone();
        v.extend_from_slice(virt);
        for (kind, key) in check_definitions(&v, level) {
            out.push(Combo::new(kind, key, *cards));
        }
    });
    out.sort_unstable();
    out.dedup();
    out
}

fn assign(
    targets: &[Virtual],
    remaining: usize,
    from: usize,
    acc: &mut Vec<Virtual>,
    f: &mut dyn FnMut(&[Virtual]),
) {
    if remaining == 0 {
        f(acc);
        return;
    }
    for i in from..targets.len() {
        acc.push(targets[i]);
        assign(targets, remaining - 1, i, acc, f);
        acc.pop();
    }
}

fn order(rank: usize, level: LevelRank) -> u8 {
    order_for(ComboKind::Single, rank, level)
}

fn order_for(kind: ComboKind, rank: usize, level: LevelRank) -> u8 {
    if kind != ComboKind::Single && ELEVATION == Elevation::SinglesOnly && rank < 13 {
        return rank as u8;
    }
    match rank {
        14 => 15,
        13 => 14,
        r if r == level.index() => 13,
        r => r as u8,
    }
}

/// Kinds and keys that the virtual card list satisfies by definition.
fn check_definitions(v: &[Virtual], level: LevelRank) -> Vec<(ComboKind, u8)> {
    let n = v.len();
    let mut hist = [0usize; 15];
    for c in v {
        hist[c.rank] += 1;
    }
    let jokers = hist[13] + hist[14];
    let mut found = Vec::new();
    let distinct: Vec<usize> = (0..15).filter(|&r| hist[r] > 0).collect();

    if distinct.len() == 1 {
        let r = distinct[0];
        match n {
            2 => found.push((ComboKind::Pair, order_for(ComboKind::Pair, r, level))),
            3 if r < 13 => found.push((ComboKind::Triple, order_for(ComboKind::Triple, r, level))),
            4..=10 if r < 13 => found.push((ComboKind::Bomb, order_for(ComboKind::Bomb, r, level))),
            _ => {}
        }
    }
    if n == 4 && hist[13] == 2 && hist[14] == 2 {
        found.push((ComboKind::JokerBomb, 0));
    }
    if jokers > 0 {
        return found;
    }
    if n == 5 && distinct.len() == 2 {
        let (a, b) = (distinct[0], distinct[1]);
        if hist[a] == 3 && hist[b] == 2 {
            found.push((ComboKind::FullHouse, order_for(ComboKind::FullHouse, a, level)));
        } else if hist[b] == 3 && hist[a] == 2 {
            found.push((ComboKind::FullHouse, order_for(ComboKind::FullHouse, b, level)));
        }
    }
    // sequences: walk the 14-position ladder A,2,..,K,A
    let ladder = |p: usize| -> usize {
        if p == 0 || p == 13 {
            Rank::Ace.index()
        } else {
            p - 1
        }
    };
    let seq = |width: usize, copies: usize| -> Vec<u8> {
        let mut starts = Vec::new();
        if n != width * copies {
            return starts;
        }
        for s in 0..=(14 - width) {
            let mut want = [0usize; 15];
            for p in s..s + width {
                want[ladder(p)] += copies;
            }
            if want == hist {
                starts.push(s as u8);
            }
        }
        starts
    };
    for s in seq(5, 1) {
        found.push((ComboKind::Straight, s));
        if v.iter().all(|c| c.suit == v[0].suit) {
            found.push((ComboKind::StraightFlush, s));
        }
    }
    for s in seq(3, 2) {
        found.push((ComboKind::Tube, s));
    }
    for s in seq(2, 3) {
        found.push((ComboKind::Plate, s));
    }
    found
}
