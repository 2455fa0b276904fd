//! Card identities, the 54-slot multiset representation, combo classification
//! and the covering order between combos.
//!
//! Card index layout is rank-major from 2 to A over the suits H, S, D, C
//! (indices 0..52), followed by the Black Joker (52) and the Red Joker (53).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of distinct card identities in one deck.
pub const NUM_IDS: usize = 54;
/// Number of natural (non-joker) ranks.
pub const NUM_RANKS: usize = 13;
/// Cards in the full double deck.
pub const DECK_SIZE: usize = 108;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CardError {
    #[error("invalid card notation `{0}`")]
    BadCard(String),
    #[error("invalid rank `{0}`")]
    BadRank(String),
    #[error("card {card} appears {count} times; at most 2 copies exist")]
    TooManyCopies { card: Card, count: u8 },
    #[error("jokers cannot be a level rank")]
    JokerLevel,
    #[error("invalid combo notation `{0}`")]
    BadCombo(String),
    #[error("cards `{cards}` do not form a {kind}")]
    NotA { kind: ComboKind, cards: String },
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Rank {
    Two = 0,
    Three,
    Four,
    Five,
    Six,
    Seven,
    Eight,
    Nine,
    Ten,
    Jack,
    Queen,
    King,
    Ace,
    BlackJoker,
    RedJoker,
}

impl Rank {
    pub const NATURAL: [Rank; NUM_RANKS] = [
        Rank::Two,
        Rank::Three,
        Rank::Four,
        Rank::Five,
        Rank::Six,
        Rank::Seven,
        Rank::Eight,
        Rank::Nine,
        Rank::Ten,
        Rank::Jack,
        Rank::Queen,
        Rank::King,
        Rank::Ace,
    ];

    pub fn from_index(i: usize) -> Rank {
        match i {
            0..=12 => Rank::NATURAL[i],
            13 => Rank::BlackJoker,
            14 => Rank::RedJoker,
            _ => panic!("rank index {i} out of range"),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_joker(self) -> bool {
        matches!(self, Rank::BlackJoker | Rank::RedJoker)
    }

    /// Face value 2..=14 for natural ranks (A = 14).
    pub fn point(self) -> u8 {
        self as u8 + 2
    }

    pub fn symbol(self) -> &'static str {
        const SYMBOLS: [&str; 15] = [
            "2", "3", "4", "5", "6", "7", "8", "9", "T", "J", "Q", "K", "A", "BJ", "RJ",
        ];
        SYMBOLS[self.index()]
    }

    fn parse_natural(s: &str) -> Option<Rank> {
        let i = match s {
            "2" => 0,
            "3" => 1,
            "4" => 2,
            "5" => 3,
            "6" => 4,
            "7" => 5,
            "8" => 6,
            "9" => 7,
            "T" | "10" | "t" => 8,
            "J" | "j" => 9,
            "Q" | "q" => 10,
            "K" | "k" => 11,
            "A" | "a" | "1" => 12,
            _ => return None,
        };
        Some(Rank::NATURAL[i])
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Rank {
    type Err = CardError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "BJ" | "bj" => Ok(Rank::BlackJoker),
            "RJ" | "rj" => Ok(Rank::RedJoker),
            _ => Rank::parse_natural(s).ok_or_else(|| CardError::BadRank(s.to_string())),
        }
    }
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Suit {
    Heart = 0,
    Spade,
    Diamond,
    Club,
}

impl Suit {
    pub const ALL: [Suit; 4] = [Suit::Heart, Suit::Spade, Suit::Diamond, Suit::Club];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        ['H', 'S', 'D', 'C'][self.index()]
    }
}

/// One of the 54 card identities.
#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Card(u8);

impl Card {
    pub const BLACK_JOKER: Card = Card(52);
    pub const RED_JOKER: Card = Card(53);

    pub fn natural(rank: Rank, suit: Suit) -> Card {
        assert!(!rank.is_joker(), "jokers have no suit");
        Card((rank.index() * 4 + suit.index()) as u8)
    }

    pub fn from_index(i: usize) -> Card {
        assert!(i < NUM_IDS, "card index {i} out of range");
        Card(i as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn rank(self) -> Rank {
        match self.0 {
            52 => Rank::BlackJoker,
            53 => Rank::RedJoker,
            i => Rank::NATURAL[(i / 4) as usize],
        }
    }

    pub fn suit(self) -> Option<Suit> {
        if self.0 >= 52 {
            None
        } else {
            Some(Suit::ALL[(self.0 % 4) as usize])
        }
    }

    pub fn is_joker(self) -> bool {
        self.0 >= 52
    }

    /// Heart card of the level rank.
    pub fn is_wild(self, level: LevelRank) -> bool {
        self == level.wild_card()
    }
}

impl fmt::Display for Card {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.suit() {
            None => f.write_str(self.rank().symbol()),
            Some(s) => write!(f, "{}{}", s.letter(), self.rank().symbol()),
        }
    }
}

impl FromStr for Card {
    type Err = CardError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t {
            "BJ" | "bj" => return Ok(Card::BLACK_JOKER),
            "RJ" | "rj" => return Ok(Card::RED_JOKER),
            _ => {}
        }
        let mut chars = t.chars();
        let suit = match chars.next().map(|c| c.to_ascii_uppercase()) {
            Some('H') => Suit::Heart,
            Some('S') => Suit::Spade,
            Some('D') => Suit::Diamond,
            Some('C') => Suit::Club,
            _ => return Err(CardError::BadCard(s.to_string())),
        };
        let rank = Rank::parse_natural(chars.as_str()).ok_or_else(|| CardError::BadCard(s.to_string()))?;
        Ok(Card::natural(rank, suit))
    }
}

impl Serialize for Card {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Card {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The rank of the current round. Never a joker.
#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LevelRank(Rank);

impl LevelRank {
    pub const TWO: LevelRank = LevelRank(Rank::Two);
    pub const ACE: LevelRank = LevelRank(Rank::Ace);

    pub fn new(rank: Rank) -> Result<LevelRank, CardError> {
        if rank.is_joker() {
            Err(CardError::JokerLevel)
        } else {
            Ok(LevelRank(rank))
        }
    }

    pub fn rank(self) -> Rank {
        self.0
    }

    pub fn index(self) -> usize {
        self.0.index()
    }

    pub fn wild_card(self) -> Card {
        Card::natural(self.0, Suit::Heart)
    }

    /// Level after `steps` promotions, capped at A.
    pub fn promoted(self, steps: u8) -> LevelRank {
        let i = (self.index() + steps as usize).min(Rank::Ace.index());
        LevelRank(Rank::NATURAL[i])
    }

    pub fn all() -> impl Iterator<Item = LevelRank> {
        Rank::NATURAL.into_iter().map(LevelRank)
    }
}

impl Default for LevelRank {
    fn default() -> Self {
        LevelRank::TWO
    }
}

impl fmt::Display for LevelRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for LevelRank {
    type Err = CardError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LevelRank::new(s.parse()?)
    }
}

impl Serialize for LevelRank {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LevelRank {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Multiset over the 54 card identities. Every count is 0, 1 or 2.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CardSet {
    counts: [u8; NUM_IDS],
}

impl Default for CardSet {
    fn default() -> Self {
        CardSet::new()
    }
}

impl CardSet {
    pub const fn new() -> CardSet {
        CardSet { counts: [0; NUM_IDS] }
    }

    /// Both copies of every card.
    pub fn full_deck() -> CardSet {
        CardSet { counts: [2; NUM_IDS] }
    }

    pub fn from_counts(counts: [u8; NUM_IDS]) -> Result<CardSet, CardError> {
        if let Some(i) = counts.iter().position(|&c| c > 2) {
            return Err(CardError::TooManyCopies { card: Card::from_index(i), count: counts[i] });
        }
        Ok(CardSet { counts })
    }

    pub fn from_cards<I: IntoIterator<Item = Card>>(cards: I) -> Result<CardSet, CardError> {
        let mut counts = [0u8; NUM_IDS];
        for c in cards {
            counts[c.index()] = counts[c.index()].saturating_add(1);
        }
        CardSet::from_counts(counts)
    }

    pub fn counts(&self) -> &[u8; NUM_IDS] {
        &self.counts
    }

    pub fn count(&self, card: Card) -> u8 {
        self.counts[card.index()]
    }

    pub fn len(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// Adds one copy. Panics past two copies.
    pub fn insert(&mut self, card: Card) {
        let c = &mut self.counts[card.index()];
        assert!(*c < 2, "third copy of {card}");
        *c += 1;
    }

    pub fn insert_n(&mut self, card: Card, n: u8) {
        let c = &mut self.counts[card.index()];
        assert!(*c + n <= 2, "more than two copies of {card}");
        *c += n;
    }

    /// Removes one copy; returns false if absent.
    pub fn remove(&mut self, card: Card) -> bool {
        let c = &mut self.counts[card.index()];
        if *c == 0 {
            return false;
        }
        *c -= 1;
        true
    }

    pub fn contains(&self, other: &CardSet) -> bool {
        self.counts.iter().zip(other.counts.iter()).all(|(a, b)| a >= b)
    }

    pub fn union(&self, other: &CardSet) -> Result<CardSet, CardError> {
        let mut counts = [0u8; NUM_IDS];
        for (i, c) in counts.iter_mut().enumerate() {
            *c = self.counts[i] + other.counts[i];
        }
        CardSet::from_counts(counts)
    }

    /// `self - other`; `None` when `other` is not a sub-multiset.
    pub fn difference(&self, other: &CardSet) -> Option<CardSet> {
        if !self.contains(other) {
            return None;
        }
        let mut out = *self;
        for (o, b) in out.counts.iter_mut().zip(other.counts.iter()) {
            *o -= b;
        }
        Some(out)
    }

    /// Cards with multiplicity, ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = Card> + '_ {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| std::iter::repeat_n(Card::from_index(i), c as usize))
    }

    pub fn to_vec(&self) -> Vec<Card> {
        self.iter().collect()
    }

    /// Copies per rank (index 0..15, jokers at 13 and 14).
    pub fn rank_counts(&self) -> [u8; 15] {
        let mut out = [0u8; 15];
        for (i, &c) in self.counts.iter().enumerate() {
            out[Card::from_index(i).rank().index()] += c;
        }
        out
    }

    /// Space-separated notation, e.g. `H2 SA BJ`.
    pub fn notation(&self) -> String {
        let parts: Vec<String> = self.iter().map(|c| c.to_string()).collect();
        parts.join(" ")
    }

    /// Parses cards separated by spaces or commas.
    pub fn parse(s: &str) -> Result<CardSet, CardError> {
        let cards = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Card>, _>>()?;
        CardSet::from_cards(cards)
    }
}

impl fmt::Debug for CardSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.notation())
    }
}

impl fmt::Display for CardSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.notation())
    }
}

impl FromStr for CardSet {
    type Err = CardError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CardSet::parse(s)
    }
}

impl Serialize for CardSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for CardSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let cards = Vec::<Card>::deserialize(d)?;
        CardSet::from_cards(cards).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ComboKind {
    Pass,
    Single,
    Pair,
    Triple,
    Tube,
    Plate,
    FullHouse,
    Straight,
    Bomb,
    StraightFlush,
    JokerBomb,
}

impl ComboKind {
    pub const ALL: [ComboKind; 11] = [
        ComboKind::Pass,
        ComboKind::Single,
        ComboKind::Pair,
        ComboKind::Triple,
        ComboKind::Tube,
        ComboKind::Plate,
        ComboKind::FullHouse,
        ComboKind::Straight,
        ComboKind::Bomb,
        ComboKind::StraightFlush,
        ComboKind::JokerBomb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ComboKind::Pass => "Pass",
            ComboKind::Single => "Single",
            ComboKind::Pair => "Pair",
            ComboKind::Triple => "Triple",
            ComboKind::Tube => "Tube",
            ComboKind::Plate => "Plate",
            ComboKind::FullHouse => "FullHouse",
            ComboKind::Straight => "Straight",
            ComboKind::Bomb => "Bomb",
            ComboKind::StraightFlush => "StraightFlush",
            ComboKind::JokerBomb => "JokerBomb",
        }
    }

    pub fn is_bomb_class(self) -> bool {
        matches!(self, ComboKind::Bomb | ComboKind::StraightFlush | ComboKind::JokerBomb)
    }

    /// Kinds whose key is a sequence start position rather than a rank.
    pub fn is_sequence(self) -> bool {
        matches!(
            self,
            ComboKind::Straight | ComboKind::StraightFlush | ComboKind::Tube | ComboKind::Plate
        )
    }
}

impl fmt::Display for ComboKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ComboKind {
    type Err = CardError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ComboKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CardError::BadCombo(s.to_string()))
    }
}

/// Which combo kinds compare the level rank "just below Jokers".
#[derive(Debug, Copy, Clone, PartialEq, Eq)]
pub enum Elevation {
    /// Singles, Pairs, Triples, the triple part of Full Houses and Bombs.
    RankComparedKinds,
    /// Singles only; every combination keeps natural order.
    SinglesOnly,
}

pub const ELEVATION: Elevation = Elevation::RankComparedKinds;

/// Order value used for rank-compared kinds: 0..=12 natural, 13 for the
/// level rank, 14 for the Black Joker and 15 for the Red Joker.
pub fn single_order(rank: Rank, level: LevelRank) -> u8 {
    match rank {
        Rank::RedJoker => 15,
        Rank::BlackJoker => 14,
        r if r == level.rank() => 13,
        r => r.index() as u8,
    }
}

/// Key of a rank-compared combo (Single, Pair, Triple, FullHouse, Bomb).
pub fn rank_key(kind: ComboKind, rank: Rank, level: LevelRank) -> u8 {
    let elevate = kind == ComboKind::Single || ELEVATION == Elevation::RankComparedKinds;
    if elevate || rank.is_joker() {
        single_order(rank, level)
    } else {
        rank.index() as u8
    }
}

/// Rank at sequence position `pos`: 0 is the low Ace, 1..=12 are 2..K, 13 the high Ace.
pub fn sequence_rank(pos: usize) -> Rank {
    match pos {
        0 | 13 => Rank::Ace,
        p @ 1..=12 => Rank::NATURAL[p - 1],
        _ => panic!("sequence position {pos} out of range"),
    }
}

/// Number of sequence windows: (ranks per window, copies per rank, valid starts).
pub fn sequence_shape(kind: ComboKind) -> Option<(usize, u8, usize)> {
    match kind {
        ComboKind::Straight | ComboKind::StraightFlush => Some((5, 1, 10)),
        ComboKind::Tube => Some((3, 2, 12)),
        ComboKind::Plate => Some((2, 3, 13)),
        _ => None,
    }
}

/// A classified play: a concrete card multiset with its kind and comparison key.
///
/// `key` is a rank order value (see [`rank_key`]) for Single, Pair, Triple,
/// FullHouse and Bomb, the start position of the window (see
/// [`sequence_rank`]) for Straight, StraightFlush, Tube and Plate, and 0
/// for Pass and JokerBomb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Combo {
    pub kind: ComboKind,
    pub key: u8,
    pub cards: CardSet,
}

#[derive(Debug, Copy, Clone, PartialEq, Eq)]
pub enum Coverage {
    Covers,
    DoesNotCover,
}

impl Combo {
    pub const PASS: Combo = Combo { kind: ComboKind::Pass, key: 0, cards: CardSet::new() };

    pub fn new(kind: ComboKind, key: u8, cards: CardSet) -> Combo {
        Combo { kind, key, cards }
    }

    pub fn is_pass(&self) -> bool {
        self.kind == ComboKind::Pass
    }

    pub fn size(&self) -> usize {
        self.cards.len()
    }

    pub fn is_bomb_class(&self) -> bool {
        self.kind.is_bomb_class()
    }

    /// Position on the bomb ladder: 4- and 5-card bombs, then straight
    /// flushes, then 6..10-card bombs, then the joker bomb.
    fn bomb_tier(&self) -> u8 {
        match self.kind {
            ComboKind::Bomb => {
                let n = self.size() as u8;
                if n <= 5 {
                    2 * n
                } else {
                    2 * n + 1
                }
            }
            ComboKind::StraightFlush => 11,
            ComboKind::JokerBomb => 100,
            _ => 0,
        }
    }

    /// Whether this combo may be played on top of `other`.
    pub fn covers(&self, other: &Combo) -> bool {
        if self.is_pass() || other.is_pass() {
            return false;
        }
        match (self.is_bomb_class(), other.is_bomb_class()) {
            (true, false) => true,
            (false, true) => false,
            (false, false) => {
                self.kind == other.kind && self.size() == other.size() && self.key > other.key
            }
            (true, true) => {
                let (a, b) = (self.bomb_tier(), other.bomb_tier());
                a > b || (a == b && self.kind != ComboKind::JokerBomb && self.key > other.key)
            }
        }
    }

    /// Natural rank represented by the key of rank-compared kinds.
    pub fn key_rank(&self, level: LevelRank) -> Option<Rank> {
        match self.kind {
            ComboKind::Pass | ComboKind::JokerBomb => None,
            k if k.is_sequence() => {
                let (len, _, _) = sequence_shape(k).unwrap();
                Some(sequence_rank(self.key as usize + len - 1))
            }
            _ => Some(match self.key {
                15 => Rank::RedJoker,
                14 => Rank::BlackJoker,
                13 => level.rank(),
                k => Rank::NATURAL[k as usize],
            }),
        }
    }

    /// The ranks this combo stands for, in play order, with wilds resolved.
    fn virtual_ranks(&self, level: LevelRank) -> Vec<Rank> {
        match self.kind {
            ComboKind::Pass => vec![],
            ComboKind::Single | ComboKind::JokerBomb => self.cards.iter().map(|c| c.rank()).collect(),
            ComboKind::Pair | ComboKind::Triple | ComboKind::Bomb => {
                vec![self.key_rank(level).unwrap(); self.size()]
            }
            ComboKind::FullHouse => {
                let triple = self.key_rank(level).unwrap();
                let wild = level.wild_card();
                let pair = self
                    .cards
                    .iter()
                    .filter(|c| *c != wild && c.rank() != triple)
                    .map(|c| c.rank())
                    .next()
                    .unwrap_or_else(|| {
                        // pair made entirely of wilds: any rank other than the triple
                        if triple == level.rank() {
                            Rank::Two
                        } else {
                            level.rank()
                        }
                    });
                vec![triple, triple, triple, pair, pair]
            }
            k => {
                let (len, copies, _) = sequence_shape(k).unwrap();
                (0..len)
                    .flat_map(|p| std::iter::repeat_n(sequence_rank(self.key as usize + p), copies as usize))
                    .collect()
            }
        }
    }

    /// Which impersonated card each wild stands for. Wilds used as themselves
    /// are omitted.
    pub fn wild_assignment(&self, level: LevelRank) -> Vec<(Card, Card)> {
        let wild = level.wild_card();
        let wilds = self.cards.count(wild);
        if wilds == 0 || self.kind == ComboKind::Single {
            return vec![];
        }
        let mut needed = self.virtual_ranks(level);
        for c in self.cards.iter().filter(|c| *c != wild) {
            if let Some(pos) = needed.iter().position(|r| *r == c.rank()) {
                needed.remove(pos);
            }
        }
        let suit = if self.kind == ComboKind::StraightFlush {
            self.cards.iter().find(|c| *c != wild).and_then(|c| c.suit()).unwrap_or(Suit::Heart)
        } else {
            Suit::Heart
        };
        needed
            .into_iter()
            .map(|r| (wild, Card::natural(r, suit)))
            .filter(|(w, c)| w != c)
            .collect()
    }

    /// Short notation such as `Pair:KK` or `Bomb:9999`, with wilds shown as
    /// the rank they stand for.
    pub fn short(&self, level: LevelRank) -> String {
        if self.is_pass() {
            return "Pass".into();
        }
        let ranks: String = self.virtual_ranks(level).iter().map(|r| r.symbol()).collect();
        format!("{}:{}", self.kind, ranks)
    }

    /// Concrete notation such as `Pair:SK,CK`.
    pub fn notation(&self) -> String {
        if self.is_pass() {
            return "Pass".into();
        }
        let cards: Vec<String> = self.cards.iter().map(|c| c.to_string()).collect();
        format!("{}:{}", self.kind, cards.join(","))
    }

    /// Parses `Pass`, `Kind:S9,C9` (concrete cards) or `Kind:99` (ranks only,
    /// no wilds). Ambiguous rank-only strings take the highest key.
    pub fn parse(s: &str, level: LevelRank) -> Result<Combo, CardError> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("pass") {
            return Ok(Combo::PASS);
        }
        let (kind_s, body) = s.split_once(':').ok_or_else(|| CardError::BadCombo(s.to_string()))?;
        let kind: ComboKind = kind_s.trim().parse()?;
        let cards = match CardSet::parse(body) {
            Ok(c) if !c.is_empty() => c,
            _ => parse_rank_string(body.trim())?,
        };
        classify(&cards, level)?
            .into_iter()
            .filter(|c| c.kind == kind)
            .max_by_key(|c| c.key)
            .ok_or_else(|| CardError::NotA { kind, cards: cards.notation() })
    }
}

/// Builds a multiset from ranks only, assigning suits S, C, D, H in turn
/// and skipping the wild card identity.
fn parse_rank_string(body: &str) -> Result<CardSet, CardError> {
    let mut set = CardSet::new();
    let mut rest = body;
    while !rest.is_empty() {
        let (rank, used) = if rest.starts_with("BJ") || rest.starts_with("RJ") {
            (rest[..2].parse::<Rank>()?, 2)
        } else if rest.starts_with("10") {
            (Rank::Ten, 2)
        } else {
            let ch = &rest[..1];
            (Rank::parse_natural(ch).ok_or_else(|| CardError::BadCombo(body.to_string()))?, 1)
        };
        rest = &rest[used..];
        let card = if rank.is_joker() {
            if rank == Rank::BlackJoker {
                Card::BLACK_JOKER
            } else {
                Card::RED_JOKER
            }
        } else {
            [Suit::Spade, Suit::Club, Suit::Diamond, Suit::Heart]
                .into_iter()
                .map(|s| Card::natural(rank, s))
                .find(|c| set.count(*c) < 2)
                .ok_or_else(|| CardError::BadCombo(body.to_string()))?
        };
        if set.count(card) >= 2 {
            return Err(CardError::BadCombo(body.to_string()));
        }
        set.insert(card);
    }
    Ok(set)
}

/// Covering relation between two combos.
pub fn compare(a: &Combo, b: &Combo) -> Coverage {
    if a.covers(b) {
        Coverage::Covers
    } else {
        Coverage::DoesNotCover
    }
}

/// Every (kind, key) interpretation of exactly this multiset under `level`.
/// Returns an empty vector when the cards form no legal type.
pub fn classify(cards: &CardSet, level: LevelRank) -> Result<Vec<Combo>, CardError> {
    CardSet::from_counts(*cards.counts())?;
    let n = cards.len();
    if n == 0 {
        return Ok(vec![]);
    }
    let wild = level.wild_card();
    let wilds = cards.count(wild) as usize;
    let mut natural = *cards;
    natural.counts[wild.index()] = 0;
    let rc = natural.rank_counts();
    let jokers = rc[13] as usize + rc[14] as usize;
    let naturals_n = n - wilds;
    let mut out = Vec::new();
    let mut push = |kind, key| out.push(Combo::new(kind, key, *cards));

    if n == 1 {
        let c = cards.iter().next().unwrap();
        push(ComboKind::Single, single_order(c.rank(), level));
        return Ok(out);
    }

    // Same-rank kinds: Pair, Triple, Bomb.
    let same_kind = match n {
        2 => Some(ComboKind::Pair),
        3 => Some(ComboKind::Triple),
        4..=10 => Some(ComboKind::Bomb),
        _ => None,
    };
    if let Some(kind) = same_kind {
        if naturals_n == 0 {
            for r in Rank::NATURAL {
                push(kind, rank_key(kind, r, level));
            }
        } else {
            let distinct: Vec<usize> = (0..15).filter(|&r| rc[r] > 0).collect();
            if distinct.len() == 1 {
                let r = Rank::from_index(distinct[0]);
                // jokers pair only with each other
                if !r.is_joker() || (kind == ComboKind::Pair && wilds == 0) {
                    push(kind, rank_key(kind, r, level));
                }
            }
        }
    }

    if n == 4 && rc[13] == 2 && rc[14] == 2 {
        push(ComboKind::JokerBomb, 0);
    }

    if jokers == 0 {
        if n == 5 {
            for a in 0..NUM_RANKS {
                for b in 0..NUM_RANKS {
                    if a == b || rc[a] > 3 || rc[b] > 2 {
                        continue;
                    }
                    if rc[a] as usize + rc[b] as usize != naturals_n {
                        continue;
                    }
                    let need = (3 - rc[a] as usize) + (2 - rc[b] as usize);
                    if need == wilds {
                        push(ComboKind::FullHouse, rank_key(ComboKind::FullHouse, Rank::NATURAL[a], level));
                    }
                }
            }
        }
        for kind in [ComboKind::Straight, ComboKind::StraightFlush, ComboKind::Tube, ComboKind::Plate] {
            let (len, copies, starts) = sequence_shape(kind).unwrap();
            if len * copies as usize != n {
                continue;
            }
            if kind == ComboKind::StraightFlush {
                let suits: Vec<Suit> = natural.iter().filter_map(|c| c.suit()).collect();
                if suits.windows(2).any(|w| w[0] != w[1]) {
                    continue;
                }
            }
            for s in 0..starts {
                let mut covered = 0usize;
                let mut ok = true;
                for p in 0..len {
                    let r = sequence_rank(s + p).index();
                    if rc[r] > copies {
                        ok = false;
                        break;
                    }
                    covered += rc[r] as usize;
                }
                if ok && covered == naturals_n && n - covered == wilds {
                    push(kind, s as u8);
                }
            }
        }
    }

    out.sort();
    out.dedup();
    Ok(out)
}
