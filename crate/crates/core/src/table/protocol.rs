//! JSON messages between a table and its clients. Each message is one
//! JSON object with a `type` field; see `docs/protocol.md`.

use serde::{Deserialize, Serialize};

use crate::arena::Candidate;
use crate::cards::{Card, CardSet, Combo, LevelRank};
use crate::engine::{Payment, ReplayEvent, Return, RoundResult, SeatView};

pub const PROTOCOL_VERSION: u32 = 1;

/// Server-to-client message with its routing header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub game_id: u64,
    /// Strictly increasing across everything a table sends.
    pub seq: u64,
    #[serde(flatten)]
    pub msg: ServerMsg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    /// Reply to a client hello: the seat it now controls.
    Hello { seat: usize, seats: Vec<String>, protocol: u32 },
    NewGame { seed: u64, seats: Vec<String> },
    /// What `seat` may see. `event` is the play that produced this state.
    State {
        seat: usize,
        round: u32,
        view: SeatView,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        event: Option<ReplayEvent>,
    },
    LegalActions { seat: usize, actions: Vec<Combo> },
    /// A bot's play with the options it weighed.
    BotMove { seat: usize, combo: Combo, candidates: Vec<Candidate> },
    /// `seat` received `received` and owes `to` a card of point 10 or less.
    TributePrompt { seat: usize, to: usize, received: Option<Card>, hand: CardSet, suggested: Card },
    TributeInfo { round: u32, payments: Vec<Payment>, returns: Vec<Return>, anti_tribute: bool, leader: usize },
    RoundEnd { round: u32, result: RoundResult, team_levels: [LevelRank; 2], next_level: LevelRank },
    EpisodeEnd { winner: usize, team_levels: [LevelRank; 2], rounds: u32 },
    Error {
        code: ErrorCode,
        message: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        legal: Option<Vec<Combo>>,
    },
    Ping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    IllegalAction,
    IllegalReturn,
    NotYourTurn,
    NoSeat,
    WrongGame,
    EpisodeOver,
    BadMessage,
}

/// Client-to-server message. The header fields are optional; a wrong
/// `game_id` is rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEnvelope {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(flatten)]
    pub msg: ClientMsg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMsg {
    /// Claims a human seat, a specific one if given.
    Hello {
        #[serde(default)]
        seat: Option<usize>,
    },
    /// A play during the round, or a tribute return card.
    Act {
        #[serde(default)]
        combo: Option<Combo>,
        #[serde(default)]
        card: Option<Card>,
    },
    Pong,
}
