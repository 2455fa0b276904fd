//! Legal action enumeration.
//!
//! The generator works per combo kind from rank/suit histograms with a wild
//! budget of 0..=2, so a full 27-card hand stays cheap even though it can
//! have thousands of distinct leads. [`oracle`] holds the exhaustive
//! reference implementation used by the tests.

pub mod oracle;

use crate::cards::{
    rank_key, sequence_rank, sequence_shape, single_order, Card, CardSet, Combo, ComboKind,
    LevelRank, Rank, Suit, NUM_RANKS,
};

pub use oracle::{oracle_moves, MoveGenError};

/// What the acting player sees when choosing a play.
#[derive(Debug, Clone, Copy)]
pub struct MoveContext {
    pub hand: CardSet,
    /// `None` when leading.
    pub to_beat: Option<Combo>,
    pub level: LevelRank,
}

/// Every combo formable from `hand`, sorted and deduplicated. Pass is excluded.
pub fn legal_leads(hand: &CardSet, level: LevelRank) -> Vec<Combo> {
    let idx = HandIndex::new(hand, level);
    let mut out = Vec::new();
    for kind in ComboKind::ALL {
        idx.generate(kind, &mut out);
    }
    finish(out)
}

/// Pass followed by every combo in `hand` that covers `to_beat`.
pub fn legal_follows(hand: &CardSet, to_beat: &Combo, level: LevelRank) -> Vec<Combo> {
    let idx = HandIndex::new(hand, level);
    let mut out = Vec::new();
    if !to_beat.is_bomb_class() {
        idx.generate(to_beat.kind, &mut out);
    }
    for kind in [ComboKind::Bomb, ComboKind::StraightFlush, ComboKind::JokerBomb] {
        idx.generate(kind, &mut out);
    }
    out.retain(|c| c.covers(to_beat));
    let mut out = finish(out);
    out.insert(0, Combo::PASS);
    out
}

/// Leading or following, depending on the context.
pub fn legal_actions(ctx: &MoveContext) -> Vec<Combo> {
    match &ctx.to_beat {
        None => legal_leads(&ctx.hand, ctx.level),
        Some(b) => legal_follows(&ctx.hand, b, ctx.level),
    }
}

/// Kinds flagged by [`wild_completions`], in flag order.
pub const WILD_FLAG_KINDS: [ComboKind; 8] = [
    ComboKind::Pair,
    ComboKind::Triple,
    ComboKind::FullHouse,
    ComboKind::Straight,
    ComboKind::Tube,
    ComboKind::Plate,
    ComboKind::Bomb,
    ComboKind::StraightFlush,
];

/// For each kind in [`WILD_FLAG_KINDS`]: can the hand's wilds complete a combo
/// of that kind whose key the natural cards alone cannot reach?
pub fn wild_completions(hand: &CardSet, level: LevelRank) -> [bool; 8] {
    let idx = HandIndex::new(hand, level);
    let w = idx.wilds as usize;
    let mut flags = [false; 8];
    if w == 0 {
        return flags;
    }
    let need = |have: u8, want: u8| want.saturating_sub(have) as usize;
    let completes = |n: usize| n >= 1 && n <= w;
    for (f, kind) in WILD_FLAG_KINDS.into_iter().enumerate() {
        flags[f] = match kind {
            ComboKind::Pair => (0..NUM_RANKS).any(|r| completes(need(idx.nat_count[r], 2))),
            ComboKind::Triple => (0..NUM_RANKS).any(|r| completes(need(idx.nat_count[r], 3))),
            ComboKind::Bomb => (0..NUM_RANKS).any(|r| completes(need(idx.nat_count[r], 4))),
            ComboKind::FullHouse => (0..NUM_RANKS).any(|a| {
                (0..NUM_RANKS)
                    .filter(|&b| b != a)
                    .any(|b| completes(need(idx.nat_count[a], 3) + need(idx.nat_count[b], 2)))
            }),
            ComboKind::StraightFlush => Suit::ALL.into_iter().any(|s| {
                (0..10).any(|st| {
                    completes(
                        (0..5)
                            .filter(|p| idx.nat[sequence_rank(st + p).index()][s.index()] == 0)
                            .count(),
                    )
                })
            }),
            k => {
                let (len, copies, starts) = sequence_shape(k).unwrap();
                (0..starts).any(|st| {
                    completes(
                        (0..len)
                            .map(|p| need(idx.nat_count[sequence_rank(st + p).index()], copies))
                            .sum(),
                    )
                })
            }
        };
    }
    flags
}

fn finish(mut out: Vec<Combo>) -> Vec<Combo> {
    out.sort_unstable();
    out.dedup();
    out
}

/// Per-suit copy counts of one rank, e.g. `[1, 0, 2, 0]` for H, DD.
type SuitCounts = [u8; 4];

struct HandIndex {
    level: LevelRank,
    wild: Card,
    wilds: u8,
    /// Natural copies per rank and suit; the wild identity is excluded.
    nat: [SuitCounts; NUM_RANKS],
    nat_count: [u8; NUM_RANKS],
    hand: CardSet,
}

impl HandIndex {
    fn new(hand: &CardSet, level: LevelRank) -> HandIndex {
        let wild = level.wild_card();
        let mut nat = [[0u8; 4]; NUM_RANKS];
        let mut nat_count = [0u8; NUM_RANKS];
        for (r, rank) in Rank::NATURAL.into_iter().enumerate() {
            for s in Suit::ALL {
                let c = Card::natural(rank, s);
                if c != wild {
                    nat[r][s.index()] = hand.count(c);
                    nat_count[r] += hand.count(c);
                }
            }
        }
        HandIndex { level, wild, wilds: hand.count(wild), nat, nat_count, hand: *hand }
    }

    fn generate(&self, kind: ComboKind, out: &mut Vec<Combo>) {
        match kind {
            ComboKind::Pass => {}
            ComboKind::Single => {
                for c in self.hand.iter() {
                    out.push(Combo::new(kind, single_order(c.rank(), self.level), single(c)));
                }
            }
            ComboKind::Pair | ComboKind::Triple => {
                let n = if kind == ComboKind::Pair { 2 } else { 3 };
                self.same_rank(kind, n, out);
                if kind == ComboKind::Pair {
                    for j in [Card::BLACK_JOKER, Card::RED_JOKER] {
                        if self.hand.count(j) == 2 {
                            let mut s = CardSet::new();
                            s.insert_n(j, 2);
                            out.push(Combo::new(kind, single_order(j.rank(), self.level), s));
                        }
                    }
                }
            }
            ComboKind::Bomb => {
                for n in 4..=10 {
                    self.same_rank(kind, n, out);
                }
            }
            ComboKind::JokerBomb => {
                if self.hand.count(Card::BLACK_JOKER) == 2 && self.hand.count(Card::RED_JOKER) == 2 {
                    let mut s = CardSet::new();
                    s.insert_n(Card::BLACK_JOKER, 2);
                    s.insert_n(Card::RED_JOKER, 2);
                    out.push(Combo::new(kind, 0, s));
                }
            }
            ComboKind::FullHouse => self.full_houses(out),
            ComboKind::Straight => self.straights(None, out),
            ComboKind::StraightFlush => {
                for s in Suit::ALL {
                    self.straights(Some(s), out);
                }
            }
            ComboKind::Tube | ComboKind::Plate => self.multi_sequences(kind, out),
        }
    }

    /// All ways to take `n` cards of rank `r`, wilds included.
    fn rank_options(&self, r: usize, n: u8) -> Vec<CardSet> {
        let mut res = Vec::new();
        for used in 0..=self.wilds.min(n) {
            let j = n - used;
            if j > self.nat_count[r] {
                continue;
            }
            for pick in sub_multisets(&self.nat[r], j) {
                let mut s = CardSet::new();
                for (si, &k) in pick.iter().enumerate() {
                    if k > 0 {
                        s.insert_n(Card::natural(Rank::NATURAL[r], Suit::ALL[si]), k);
                    }
                }
                if used > 0 {
                    s.insert_n(self.wild, used);
                }
                res.push(s);
            }
        }
        res
    }

    fn same_rank(&self, kind: ComboKind, n: u8, out: &mut Vec<Combo>) {
        for r in 0..NUM_RANKS {
            if self.nat_count[r] + self.wilds < n {
                continue;
            }
            let key = rank_key(kind, Rank::NATURAL[r], self.level);
            for s in self.rank_options(r, n) {
                out.push(Combo::new(kind, key, s));
            }
        }
    }

    fn full_houses(&self, out: &mut Vec<Combo>) {
        for a in 0..NUM_RANKS {
            if self.nat_count[a] + self.wilds < 3 {
                continue;
            }
            let key = rank_key(ComboKind::FullHouse, Rank::NATURAL[a], self.level);
            let triples = self.rank_options(a, 3);
            for b in 0..NUM_RANKS {
                if b == a || self.nat_count[b] + self.wilds < 2 {
                    continue;
                }
                let pairs = self.rank_options(b, 2);
                for t in &triples {
                    let tw = t.count(self.wild);
                    for p in &pairs {
                        if tw + p.count(self.wild) > self.wilds {
                            continue;
                        }
                        let cards = t.union(p).expect("wild budget checked");
                        out.push(Combo::new(ComboKind::FullHouse, key, cards));
                    }
                }
            }
        }
    }

    fn straights(&self, flush: Option<Suit>, out: &mut Vec<Combo>) {
        let kind = if flush.is_some() { ComboKind::StraightFlush } else { ComboKind::Straight };
        for start in 0..10 {
            let missing = (0..5)
                .filter(|p| {
                    let r = sequence_rank(start + p).index();
                    match flush {
                        Some(s) => self.nat[r][s.index()] == 0,
                        None => self.nat_count[r] == 0,
                    }
                })
                .count();
            if missing > self.wilds as usize {
                continue;
            }
            let mut acc = CardSet::new();
            self.straight_rec(kind, flush, start, 0, 0, &mut acc, out);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn straight_rec(
        &self,
        kind: ComboKind,
        flush: Option<Suit>,
        start: usize,
        pos: usize,
        wilds_used: u8,
        acc: &mut CardSet,
        out: &mut Vec<Combo>,
    ) {
        if pos == 5 {
            out.push(Combo::new(kind, start as u8, *acc));
            return;
        }
        let rank = sequence_rank(start + pos);
        for s in Suit::ALL {
            if flush.is_some_and(|f| f != s) || self.nat[rank.index()][s.index()] == 0 {
                continue;
            }
            let c = Card::natural(rank, s);
            acc.insert(c);
            self.straight_rec(kind, flush, start, pos + 1, wilds_used, acc, out);
            acc.remove(c);
        }
        if wilds_used < self.wilds {
            acc.insert(self.wild);
            self.straight_rec(kind, flush, start, pos + 1, wilds_used + 1, acc, out);
            acc.remove(self.wild);
        }
    }

    fn multi_sequences(&self, kind: ComboKind, out: &mut Vec<Combo>) {
        let (len, copies, starts) = sequence_shape(kind).unwrap();
        for start in 0..starts {
            let missing: usize = (0..len)
                .map(|p| copies.saturating_sub(self.nat_count[sequence_rank(start + p).index()]) as usize)
                .sum();
            if missing > self.wilds as usize {
                continue;
            }
            let mut partial = vec![CardSet::new()];
            for p in 0..len {
                let opts = self.rank_options(sequence_rank(start + p).index(), copies);
                let mut next = Vec::with_capacity(partial.len() * opts.len());
                for acc in &partial {
                    for o in &opts {
                        if acc.count(self.wild) + o.count(self.wild) <= self.wilds {
                            next.push(acc.union(o).expect("wild budget checked"));
                        }
                    }
                }
                partial = next;
            }
            out.extend(partial.into_iter().map(|cards| Combo::new(kind, start as u8, cards)));
        }
    }
}

fn single(c: Card) -> CardSet {
    let mut s = CardSet::new();
    s.insert(c);
    s
}

/// Sub-multisets of size `n` drawn from per-suit counts.
fn sub_multisets(avail: &SuitCounts, n: u8) -> Vec<SuitCounts> {
    let mut out = Vec::new();
    for a in 0..=avail[0].min(n) {
        for b in 0..=avail[1].min(n - a) {
            for c in 0..=avail[2].min(n - a - b) {
                let d = n - a - b - c;
                if d <= avail[3] {
                    out.push([a, b, c, d]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(s: &str) -> LevelRank {
        s.parse().unwrap()
    }

    fn set(s: &str) -> CardSet {
        CardSet::parse(s).unwrap()
    }

    #[test]
    fn pair_of_threes_leads() {
        let got = legal_leads(&set("S3 S3"), lv("2"));
        let kinds: Vec<_> = got.iter().map(|c| c.kind).collect();
        assert_eq!(kinds, vec![ComboKind::Single, ComboKind::Pair]);
    }

    #[test]
    fn lone_wild_is_one_single() {
        let got = legal_leads(&set("H2"), lv("2"));
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].key, 13);
    }

    #[test]
    fn nothing_covers_red_joker() {
        let rj = Combo::parse("Single:RJ", lv("2")).unwrap();
        let got = legal_follows(&set("S3 S4 D9 CK CA BJ"), &rj, lv("2"));
        assert_eq!(got, vec![Combo::PASS]);
    }

    #[test]
    fn equal_pair_is_not_a_follow() {
        let l = lv("2");
        let nines = Combo::parse("Pair:99", l).unwrap();
        let got = legal_follows(&set("S9 C9 SK CK"), &nines, l);
        assert_eq!(got.len(), 2);
        assert!(got[0].is_pass());
        assert_eq!(got[1].short(l), "Pair:KK");
    }

    #[test]
    fn bombs_answer_a_straight() {
        let l = lv("2");
        let st = Combo::parse("Straight:34567", l).unwrap();
        let got = legal_follows(&set("SQ HQ DQ CQ S3"), &st, l);
        assert!(got.iter().any(|c| c.kind == ComboKind::Bomb && c.size() == 4));
        assert!(got.iter().skip(1).all(|c| c.covers(&st)));
    }

    #[test]
    fn wild_flags() {
        let l = lv("2");
        let f = wild_completions(&set("H2 S9 C9 D9"), l);
        assert!(f[6], "bomb");
        assert!(!wild_completions(&set("S9 C9 D9"), l).iter().any(|&b| b));
    }

    #[test]
    fn sub_multiset_counts() {
        assert_eq!(sub_multisets(&[2, 2, 2, 2], 2).len(), 10);
        assert_eq!(sub_multisets(&[1, 0, 0, 1], 2), vec![[1, 0, 0, 1]]);
    }
}
