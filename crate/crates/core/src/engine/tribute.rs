//! Tribute phase: who pays whom, anti-tribute, and the return heuristic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::round::{next_seat, partner, team_of, Role, RoundResult, SEATS};
use crate::cards::{single_order, Card, CardSet, LevelRank, Rank, Suit, NUM_RANKS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TributeError {
    #[error("there is no tribute before the first round")]
    FirstRound,
    #[error("seat {0} owes no return")]
    NoReturnOwed(usize),
    #[error("seat {seat} does not hold {card}")]
    NotHeld { seat: usize, card: Card },
    #[error("returned card {0} has a point above 10")]
    ReturnTooHigh(Card),
}

/// One payment: `from` gives `card` to `to`, and later receives a return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payment {
    pub from: usize,
    pub to: usize,
    pub card: Card,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TributePlan {
    pub payments: Vec<Payment>,
    /// True when the payers held both Red Jokers.
    pub annulled: bool,
    pub leader: usize,
}

/// A completed return, for the replay log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Return {
    pub from: usize,
    pub to: usize,
    pub card: Card,
}

/// Highest single in `hand` under `level`, never the wild card.
/// Among equal ranks the lowest card index is taken.
pub fn tribute_card(hand: &CardSet, level: LevelRank) -> Option<Card> {
    let wild = level.wild_card();
    hand.iter()
        .filter(|&c| c != wild)
        .max_by_key(|c| (single_order(c.rank(), level), std::cmp::Reverse(c.index())))
}

/// Plans the tribute for a new round from the previous result and the new
/// deal. `round_index` is 1-based.
pub fn tribute_plan(
    prev: &RoundResult,
    hands: &[CardSet; SEATS],
    new_level: LevelRank,
    round_index: u32,
) -> Result<TributePlan, TributeError> {
    if round_index < 2 {
        return Err(TributeError::FirstRound);
    }
    let banker = prev.banker;
    let payers: Vec<usize> = if prev.promotion == 3 {
        // both losers, the one next to the Banker first
        let a = next_seat(banker);
        vec![a, partner(a)]
    } else {
        vec![(0..SEATS).find(|&s| prev.roles[s] == Role::Dweller).expect("one Dweller")]
    };
    let red_jokers: u8 = payers.iter().map(|&s| hands[s].count(Card::RED_JOKER)).sum();
    if red_jokers == 2 {
        return Ok(TributePlan { payments: Vec::new(), annulled: true, leader: banker });
    }
    let cards: Vec<Card> = payers
        .iter()
        .map(|&s| tribute_card(&hands[s], new_level).expect("a dealt hand holds a non-wild card"))
        .collect();
    if payers.len() == 1 {
        let p = Payment { from: payers[0], to: banker, card: cards[0] };
        return Ok(TributePlan { payments: vec![p], annulled: false, leader: payers[0] });
    }
    let order = |c: Card| single_order(c.rank(), new_level);
    // ties keep the payer next to the Banker as the larger one
    let big = if order(cards[1]) > order(cards[0]) { 1 } else { 0 };
    let small = 1 - big;
    let payments = vec![
        Payment { from: payers[big], to: banker, card: cards[big] },
        Payment { from: payers[small], to: partner(banker), card: cards[small] },
    ];
    Ok(TributePlan { payments, annulled: false, leader: payers[big] })
}

/// Moves the tribute cards from payers to receivers.
pub fn pay_tribute(plan: &TributePlan, hands: &mut [CardSet; SEATS]) {
    for p in &plan.payments {
        let removed = hands[p.from].remove(p.card);
        debug_assert!(removed);
        hands[p.to].insert(p.card);
    }
}

/// Checks and moves a returned card.
pub fn apply_return(
    ret: Return,
    hands: &mut [CardSet; SEATS],
) -> Result<(), TributeError> {
    if hands[ret.from].count(ret.card) == 0 {
        return Err(TributeError::NotHeld { seat: ret.from, card: ret.card });
    }
    if ret.card.is_joker() || ret.card.rank().point() > 10 {
        return Err(TributeError::ReturnTooHigh(ret.card));
    }
    hands[ret.from].remove(ret.card);
    hands[ret.to].insert(ret.card);
    Ok(())
}

/// Parts of a hand the return heuristic keeps intact.
#[derive(Debug, Clone, Default)]
struct Partition {
    bombs: CardSet,
    flushes: CardSet,
    rest: CardSet,
}

/// Natural bombs first, then straight flushes from what is left.
fn partition(hand: &CardSet, level: LevelRank) -> Partition {
    let wild = level.wild_card();
    let mut rest = *hand;
    let mut bombs = CardSet::new();
    for r in Rank::NATURAL {
        let cards: Vec<Card> = Suit::ALL
            .into_iter()
            .map(|s| Card::natural(r, s))
            .filter(|&c| c != wild)
            .collect();
        let n: u8 = cards.iter().map(|&c| rest.count(c)).sum();
        if n >= 4 {
            for c in cards {
                let k = rest.count(c);
                if k > 0 {
                    bombs.insert_n(c, k);
                    for _ in 0..k {
                        rest.remove(c);
                    }
                }
            }
        }
    }
    let mut flushes = CardSet::new();
    for suit in Suit::ALL {
        // windows over the ladder A,2..K,A; lowest first
        let mut start = 0;
        while start + 5 <= 14 {
            let cards: Vec<Card> = (start..start + 5)
                .map(|p| Card::natural(ladder_rank(p), suit))
                .collect();
            if cards.iter().all(|&c| c != wild && rest.count(c) > 0) {
                for &c in &cards {
                    rest.remove(c);
                    flushes.insert(c);
                }
            } else {
                start += 1;
            }
        }
    }
    Partition { bombs, flushes, rest }
}

fn ladder_rank(p: usize) -> Rank {
    if p == 0 || p == 13 {
        Rank::Ace
    } else {
        Rank::NATURAL[p - 1]
    }
}

/// Card a receiver gives back after accepting tribute.
///
/// Keeps bombs and straight flushes whole, returns a small card that is a
/// lone single if there is one, otherwise breaks the smallest pair or
/// triple, then a loose ten, and only then a bomb or a straight flush.
/// Level cards are avoided while alternatives of the same tier exist and
/// the wild card is never chosen unless nothing else qualifies.
pub fn tribute_return(hand: &CardSet, level: LevelRank) -> Card {
    let wild = level.wild_card();
    let part = partition(hand, level);
    let natural = |c: &Card| !c.is_joker() && *c != wild;
    let mut counts = [0u8; NUM_RANKS];
    for c in part.rest.iter().filter(natural) {
        counts[c.rank().index()] += 1;
    }
    let pick_rank = |set: &CardSet, r: usize| -> Option<Card> {
        set.iter().filter(natural).find(|c| c.rank().index() == r)
    };
    // candidate ranks ordered by point, non-level ranks first among equals
    let by_point = |pred: &dyn Fn(usize) -> bool| -> Option<usize> {
        (0..NUM_RANKS)
            .filter(|&r| pred(r))
            .min_by_key(|&r| (r == level.index(), Rank::NATURAL[r].point()))
    };
    let point = |r: usize| Rank::NATURAL[r].point();

    if let Some(r) = by_point(&|r| counts[r] == 1 && point(r) < 10) {
        return pick_rank(&part.rest, r).unwrap();
    }
    if let Some(r) = by_point(&|r| (2..=3).contains(&counts[r]) && point(r) < 10) {
        return pick_rank(&part.rest, r).unwrap();
    }
    if let Some(r) = by_point(&|r| counts[r] > 0 && point(r) == 10) {
        return pick_rank(&part.rest, r).unwrap();
    }
    for set in [&part.bombs, &part.flushes] {
        let lowest = set
            .iter()
            .filter(|c| natural(c) && c.rank().point() <= 10)
            .min_by_key(|c| (c.rank().index() == level.index(), c.rank().point()));
        if let Some(c) = lowest {
            return c;
        }
    }
    // a hand of 28 cards always holds a natural card of point at most 10
    // in practice; these fallbacks keep the function total
    hand.iter()
        .filter(|c| !c.is_joker() && c.rank().point() <= 10)
        .min_by_key(|c| (*c == wild, c.rank().point()))
        .or_else(|| hand.iter().min_by_key(|c| single_order(c.rank(), level)))
        .expect("receiver holds cards")
}

/// Pairs each receiver with the payer they owe a return.
pub fn return_obligations(plan: &TributePlan) -> Vec<(usize, usize)> {
    plan.payments.iter().map(|p| (p.to, p.from)).collect()
}

/// True if the team of `seat` paid tribute in `plan`.
pub fn team_paid(plan: &TributePlan, seat: usize) -> bool {
    plan.payments.iter().any(|p| team_of(p.from) == team_of(seat))
}
