//! A live table: bots and humans share one engine. The [`Table`] holds the
//! rules and message flow; [`server`] carries messages over TCP.

pub mod protocol;
pub mod server;

use std::str::FromStr;

use crate::arena::{mix_seed, Agent, AgentKind, AgentSpec, ArenaError, RandomAgent};
use crate::cards::{Card, Combo};
use crate::engine::{Game, Outcome, Phase, ReplayEvent, SEATS};
pub use protocol::{ClientEnvelope, ClientMsg, Envelope, ErrorCode, ServerMsg, PROTOCOL_VERSION};

/// Who plays a seat.
#[derive(Clone)]
pub enum SeatSpec {
    Human,
    Bot(AgentKind),
}

impl SeatSpec {
    /// `human` or an arena agent spec.
    pub fn parse(s: &str) -> Result<SeatSpec, ArenaError> {
        if s.trim() == "human" {
            return Ok(SeatSpec::Human);
        }
        Ok(SeatSpec::Bot(AgentSpec::from_str(s)?.load()?))
    }

    /// Four comma-separated seat specs. Commas inside a `ppo:` spec are
    /// kept with it.
    pub fn parse_list(s: &str) -> Result<Vec<SeatSpec>, ArenaError> {
        let mut parts: Vec<String> = Vec::new();
        for p in s.split(',') {
            let glued = p.starts_with("dmc:") && parts.last().is_some_and(|l| l.starts_with("ppo:"))
                || p.starts_with("k=") && parts.last().is_some_and(|l| l.starts_with("ppo:") || l.starts_with("topk:"));
            match parts.last_mut() {
                Some(l) if glued => {
                    l.push(',');
                    l.push_str(p);
                }
                _ => parts.push(p.to_string()),
            }
        }
        if parts.len() != SEATS {
            return Err(ArenaError::BadSpec(format!("expected {SEATS} seats, got {}", parts.len())));
        }
        parts.iter().map(|p| SeatSpec::parse(p)).collect()
    }

    fn name(&self) -> String {
        match self {
            SeatSpec::Human => "human".into(),
            SeatSpec::Bot(k) => k.name(),
        }
    }
}

enum Controller {
    Human { connected: bool },
    Bot(Box<dyn Agent>),
    /// A disconnected human's seat, played by a random agent.
    Fallback(Box<dyn Agent>),
}

/// A message for one seat.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub seat: usize,
    pub env: Envelope,
}

/// One episode at one table.
pub struct Table {
    pub game_id: u64,
    pub seed: u64,
    names: Vec<String>,
    game: Game,
    seats: Vec<Controller>,
    seq: u64,
    outbox: Vec<Outgoing>,
    /// Seat last sent `legal_actions`, with the action count of its log.
    prompted_play: Option<(usize, usize)>,
    prompted_returns: Vec<usize>,
    started: bool,
}

impl Table {
    pub fn new(game_id: u64, seed: u64, seats: &[SeatSpec]) -> Table {
        assert_eq!(seats.len(), SEATS, "a table has four seats");
        let controllers = seats
            .iter()
            .enumerate()
            .map(|(i, s)| match s {
                SeatSpec::Human => Controller::Human { connected: false },
                SeatSpec::Bot(k) => Controller::Bot(k.build(mix_seed(seed, i as u64))),
            })
            .collect();
        Table {
            game_id,
            seed,
            names: seats.iter().map(SeatSpec::name).collect(),
            game: Game::with_options(seed, false),
            seats: controllers,
            seq: 0,
            outbox: Vec::new(),
            prompted_play: None,
            prompted_returns: Vec::new(),
            started: false,
        }
    }

    pub fn game(&self) -> &Game {
        &self.game
    }

    pub fn is_over(&self) -> bool {
        self.game.is_over()
    }

    pub fn is_human(&self, seat: usize) -> bool {
        matches!(self.seats[seat], Controller::Human { .. })
    }

    /// Human seats that no client controls.
    pub fn free_human_seats(&self) -> Vec<usize> {
        (0..SEATS).filter(|&s| matches!(self.seats[s], Controller::Human { connected: false })).collect()
    }

    /// Seats that were human and are now played by the fallback agent.
    pub fn fallback_seats(&self) -> Vec<usize> {
        (0..SEATS).filter(|&s| matches!(self.seats[s], Controller::Fallback(_))).collect()
    }

    fn push(&mut self, seat: usize, msg: ServerMsg) {
        self.seq += 1;
        self.outbox.push(Outgoing { seat, env: Envelope { game_id: self.game_id, seq: self.seq, msg } });
    }

    fn broadcast(&mut self, f: impl Fn(usize) -> ServerMsg) {
        for s in 0..SEATS {
            self.push(s, f(s));
        }
    }

    /// Last sequence number used.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Continues numbering after `seq`, so a client's stream keeps
    /// increasing across games.
    pub fn continue_seq(&mut self, seq: u64) {
        self.seq = self.seq.max(seq);
    }

    /// A message for a client without a seat, numbered like the rest.
    pub fn unrouted(&mut self, msg: ServerMsg) -> Envelope {
        self.seq += 1;
        Envelope { game_id: self.game_id, seq: self.seq, msg }
    }

    /// Messages queued since the last call.
    pub fn drain(&mut self) -> Vec<Outgoing> {
        std::mem::take(&mut self.outbox)
    }

    /// The state payload for `seat`: its own hand and public information.
    pub fn view_for(&self, seat: usize, event: Option<ReplayEvent>) -> ServerMsg {
        ServerMsg::State { seat, round: self.game.round_number() as u32 + 1, view: self.game.view(seat), event }
    }

    fn broadcast_state(&mut self, event: Option<ReplayEvent>) {
        for s in 0..SEATS {
            let m = self.view_for(s, event.clone());
            self.push(s, m);
        }
    }

    /// Announces the game and runs bots until a human must act.
    pub fn start(&mut self) {
        if self.started {
            return;
        }
        self.started = true;
        let (seed, names) = (self.seed, self.names.clone());
        self.broadcast(|_| ServerMsg::NewGame { seed, seats: names.clone() });
        self.broadcast_state(None);
        self.advance();
    }

    /// A client took `seat`; re-sends what it needs to act.
    pub fn connect(&mut self, seat: usize) -> Result<(), ErrorCode> {
        match self.seats[seat] {
            Controller::Human { connected: false } => {}
            Controller::Fallback(_) => {}
            _ => return Err(ErrorCode::NoSeat),
        }
        self.seats[seat] = Controller::Human { connected: true };
        let names = self.names.clone();
        self.push(seat, ServerMsg::Hello { seat, seats: names, protocol: PROTOCOL_VERSION });
        if self.started {
            let m = self.view_for(seat, None);
            self.push(seat, m);
            self.prompted_play = None;
            self.prompted_returns.retain(|&s| s != seat);
            self.advance();
        }
        Ok(())
    }

    /// The client of `seat` went away; the seat waits for [`Table::fallback`].
    pub fn disconnect(&mut self, seat: usize) {
        if let Controller::Human { connected } = &mut self.seats[seat] {
            *connected = false;
        }
    }

    /// Hands a disconnected human seat to a random agent.
    pub fn fallback(&mut self, seat: usize) {
        if matches!(self.seats[seat], Controller::Human { connected: false }) {
            let agent = RandomAgent::new(mix_seed(self.seed, 100 + seat as u64));
            self.seats[seat] = Controller::Fallback(Box::new(agent));
            self.advance();
        }
    }

    fn error(&mut self, seat: usize, code: ErrorCode, message: String, legal: Option<Vec<Combo>>) {
        self.push(seat, ServerMsg::Error { code, message, legal });
    }

    /// Applies a client message from `seat`. Rejected messages leave the
    /// game untouched and answer with an error.
    pub fn handle(&mut self, seat: usize, msg: ClientEnvelope) {
        if msg.game_id.is_some_and(|g| g != self.game_id) {
            let m = format!("this table runs game {}", self.game_id);
            return self.error(seat, ErrorCode::WrongGame, m, None);
        }
        match msg.msg {
            ClientMsg::Act { combo, card } => self.act(seat, combo, card),
            ClientMsg::Hello { .. } | ClientMsg::Pong => {}
        }
    }

    fn act(&mut self, seat: usize, combo: Option<Combo>, card: Option<Card>) {
        if !self.is_human(seat) {
            return self.error(seat, ErrorCode::NotYourTurn, "seat is not played by you".into(), None);
        }
        match self.game.phase() {
            Phase::Over => self.error(seat, ErrorCode::EpisodeOver, "the episode is over".into(), None),
            Phase::Returns => {
                if !self.game.pending_returns().iter().any(|&(g, _)| g == seat) {
                    return self.error(seat, ErrorCode::NotYourTurn, "no return is owed by this seat".into(), None);
                }
                let Some(card) = card else {
                    return self.error(seat, ErrorCode::IllegalReturn, "a return needs a card".into(), None);
                };
                if let Err(e) = self.game.submit_return(seat, card) {
                    return self.error(seat, ErrorCode::IllegalReturn, e.to_string(), None);
                }
                self.prompted_returns.retain(|&s| s != seat);
                self.after_returns();
                self.advance();
            }
            Phase::Play => {
                if self.game.turn() != seat {
                    let m = format!("seat {} is to play", self.game.turn());
                    return self.error(seat, ErrorCode::NotYourTurn, m, None);
                }
                let legal = self.game.legal_actions();
                match combo {
                    Some(c) if legal.contains(&c) => {
                        self.play(c);
                        self.advance();
                    }
                    _ => {
                        let m = "not in the legal action set".to_string();
                        self.error(seat, ErrorCode::IllegalAction, m, Some(legal));
                    }
                }
            }
        }
    }

    fn play(&mut self, c: Combo) {
        let outcome = self.game.apply(&c).expect("combo was checked against the legal set");
        let event = self.game.log.iter().rev().find(|e| matches!(e, ReplayEvent::Play { .. })).cloned();
        self.broadcast_state(event);
        self.after_play(outcome);
    }

    fn after_play(&mut self, outcome: Outcome) {
        self.prompted_play = None;
        let round = self.game.results.len() as u32;
        match outcome {
            Outcome::Continue => {}
            Outcome::RoundOver(result) => {
                let team_levels = self.game.episode.team_levels;
                let next_level = self.game.episode.current_level;
                self.broadcast(|_| ServerMsg::RoundEnd { round, result: result.clone(), team_levels, next_level });
                if self.game.phase() == Phase::Play {
                    self.round_begins();
                }
            }
            Outcome::EpisodeOver { last, winner } => {
                let team_levels = self.game.episode.team_levels;
                let next_level = self.game.episode.current_level;
                self.broadcast(|_| ServerMsg::RoundEnd { round, result: last.clone(), team_levels, next_level });
                self.broadcast(|_| ServerMsg::EpisodeEnd { winner, team_levels, rounds: round });
            }
        }
    }

    fn after_returns(&mut self) {
        if self.game.phase() == Phase::Play {
            self.round_begins();
        }
    }

    /// Tribute summary and fresh states once play of a new round can start.
    fn round_begins(&mut self) {
        if let Some(ReplayEvent::RoundStart { round, tribute, returns, anti_tribute, leader, .. }) = self.game.log.last().cloned() {
            if round > 1 {
                self.broadcast(|_| ServerMsg::TributeInfo {
                    round,
                    payments: tribute.clone(),
                    returns: returns.clone(),
                    anti_tribute,
                    leader,
                });
            }
        }
        self.broadcast_state(None);
    }

    /// Runs bot turns until a human must act or the episode ends.
    fn advance(&mut self) {
        if !self.started {
            return;
        }
        loop {
            match self.game.phase() {
                Phase::Over => return,
                Phase::Returns => {
                    let pending: Vec<(usize, usize)> = self.game.pending_returns().to_vec();
                    let mut progressed = false;
                    for (from, to) in pending {
                        match &self.seats[from] {
                            Controller::Human { .. } => {
                                if !self.prompted_returns.contains(&from) {
                                    self.prompted_returns.push(from);
                                    let received = self.game.plan.as_ref().and_then(|p| p.payments.iter().find(|x| x.to == from)).map(|x| x.card);
                                    let hand = self.game.hands()[from];
                                    let suggested = self.game.suggested_return(from);
                                    self.push(from, ServerMsg::TributePrompt { seat: from, to, received, hand, suggested });
                                }
                            }
                            Controller::Bot(_) | Controller::Fallback(_) => {
                                let card = self.game.suggested_return(from);
                                self.game.submit_return(from, card).expect("heuristic return is legal");
                                progressed = true;
                            }
                        }
                    }
                    if self.game.phase() == Phase::Play {
                        self.round_begins();
                        continue;
                    }
                    if !progressed {
                        return;
                    }
                }
                Phase::Play => {
                    let seat = self.game.turn();
                    let legal = self.game.legal_actions();
                    let view = self.game.view(seat);
                    let decision = match &mut self.seats[seat] {
                        Controller::Human { .. } => {
                            let marker = (seat, self.game.log.len());
                            if self.prompted_play != Some(marker) {
                                self.prompted_play = Some(marker);
                                self.push(seat, ServerMsg::LegalActions { seat, actions: legal });
                            }
                            return;
                        }
                        Controller::Bot(a) | Controller::Fallback(a) => a.decide_explained(&view, &legal),
                    };
                    if !legal.contains(&decision.combo) {
                        log::warn!("seat {seat} chose an illegal action and forfeits the round");
                        let outcome = self.game.forfeit(seat).expect("episode is running");
                        self.after_play(outcome);
                        continue;
                    }
                    let (combo, candidates) = (decision.combo, decision.candidates);
                    self.broadcast(|_| ServerMsg::BotMove { seat, combo, candidates: candidates.clone() });
                    self.play(combo);
                }
            }
        }
    }
}
