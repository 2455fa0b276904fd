//! Step-wise driver for a whole episode: rounds, promotion and tribute.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::episode::{apply_promotion, EpisodeState};
use super::replay::ReplayEvent;
use super::round::{deal_hands, next_seat, partner, RoundResult, RoundState, StepError, SEATS};
use super::tribute::{
    apply_return, pay_tribute, return_obligations, tribute_plan, tribute_return, Return, TributeError,
    TributePlan,
};
use super::view::SeatView;
use crate::cards::{Card, CardSet, Combo};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GameError {
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Tribute(#[from] TributeError),
    #[error("the game is waiting for tribute returns")]
    AwaitingReturns,
    #[error("no tribute return is pending")]
    NotInTribute,
    #[error("the episode is over")]
    EpisodeOver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Play,
    /// Receivers of tribute still owe returns.
    Returns,
    Over,
}

/// What a successful action led to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Continue,
    RoundOver(RoundResult),
    EpisodeOver { last: RoundResult, winner: usize },
}

#[derive(Debug, Clone)]
pub struct Game {
    rng: ChaCha8Rng,
    pub episode: EpisodeState,
    pub round: RoundState,
    pub results: Vec<RoundResult>,
    pub plan: Option<TributePlan>,
    pending: Vec<(usize, usize)>,
    returns: Vec<Return>,
    auto_returns: bool,
    phase: Phase,
    pub log: Vec<ReplayEvent>,
}

impl Game {
    /// Starts an episode whose deals all come from `seed`. Tribute returns
    /// are made by the heuristic.
    pub fn new(seed: u64) -> Game {
        Game::with_options(seed, true)
    }

    /// With `auto_returns` false, [`Game::submit_return`] must be called for
    /// each obligation before play starts.
    pub fn with_options(seed: u64, auto_returns: bool) -> Game {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hands = deal_hands(&mut rng);
        let leader = rng.gen_range(0..SEATS);
        let episode = EpisodeState::new();
        let round = RoundState::with_hands(hands, leader, episode.current_level, episode.team_levels);
        let mut g = Game {
            rng,
            episode,
            round,
            results: Vec::new(),
            plan: None,
            pending: Vec::new(),
            returns: Vec::new(),
            auto_returns,
            phase: Phase::Play,
            log: Vec::new(),
        };
        g.log_round_start();
        g
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_over(&self) -> bool {
        self.phase == Phase::Over
    }

    pub fn winner(&self) -> Option<usize> {
        self.episode.episode_winner
    }

    /// Seat to act during play.
    pub fn turn(&self) -> usize {
        self.round.turn
    }

    pub fn legal_actions(&self) -> Vec<Combo> {
        self.round.legal_actions()
    }

    pub fn view(&self, seat: usize) -> SeatView {
        self.round.view(seat)
    }

    /// 0-based index of the round in progress.
    pub fn round_number(&self) -> usize {
        self.results.len()
    }

    /// Open return obligations as (giver, receiver).
    pub fn pending_returns(&self) -> &[(usize, usize)] {
        &self.pending
    }

    pub fn apply(&mut self, combo: &Combo) -> Result<Outcome, GameError> {
        match self.phase {
            Phase::Over => return Err(GameError::EpisodeOver),
            Phase::Returns => return Err(GameError::AwaitingReturns),
            Phase::Play => {}
        }
        let seat = self.round.turn;
        let trick_id = self.round.trick_id;
        self.round.apply(combo)?;
        self.log.push(ReplayEvent::Play {
            round: self.round_number() as u32 + 1,
            seat,
            combo: *combo,
            trick_id,
            level: self.round.level,
        });
        match self.round.result() {
            Some(r) => Ok(self.finish_round(r)),
            None => Ok(Outcome::Continue),
        }
    }

    /// Ends the round for a seat that broke the rules: the other team is
    /// credited with a first-and-second finish.
    pub fn forfeit(&mut self, seat: usize) -> Result<Outcome, GameError> {
        if self.phase == Phase::Over {
            return Err(GameError::EpisodeOver);
        }
        let opp = next_seat(seat);
        let r = RoundResult::from_finish_order(&[opp, partner(opp)]).expect("a team is complete");
        Ok(self.finish_round(r))
    }

    /// Records a return chosen by `from`.
    pub fn submit_return(&mut self, from: usize, card: Card) -> Result<(), GameError> {
        if self.phase != Phase::Returns {
            return Err(GameError::NotInTribute);
        }
        let idx = self
            .pending
            .iter()
            .position(|&(g, _)| g == from)
            .ok_or(TributeError::NoReturnOwed(from))?;
        let (_, to) = self.pending[idx];
        let ret = Return { from, to, card };
        apply_return(ret, &mut self.round.hands)?;
        self.pending.remove(idx);
        self.returns.push(ret);
        if self.pending.is_empty() {
            self.begin_play();
        }
        Ok(())
    }

    /// Heuristic return for `from`.
    pub fn suggested_return(&self, from: usize) -> Card {
        tribute_return(&self.round.hands[from], self.round.level)
    }

    /// Makes every open return with the heuristic.
    pub fn auto_return_all(&mut self) -> Result<(), GameError> {
        while let Some(&(from, _)) = self.pending.first() {
            let c = self.suggested_return(from);
            self.submit_return(from, c)?;
        }
        Ok(())
    }

    fn finish_round(&mut self, r: RoundResult) -> Outcome {
        self.log.push(ReplayEvent::RoundEnd { round: self.round_number() as u32 + 1, result: r.clone() });
        self.results.push(r.clone());
        self.episode = apply_promotion(&self.episode, &r);
        if let Some(winner) = self.episode.episode_winner {
            self.phase = Phase::Over;
            self.log.push(ReplayEvent::EpisodeEnd {
                winner,
                team_levels: self.episode.team_levels,
                rounds: self.results.len() as u32,
            });
            return Outcome::EpisodeOver { last: r, winner };
        }
        self.start_round(&r);
        Outcome::RoundOver(r)
    }

    fn start_round(&mut self, prev: &RoundResult) {
        let mut hands = deal_hands(&mut self.rng);
        let level = self.episode.current_level;
        let plan = tribute_plan(prev, &hands, level, self.episode.round_index).expect("round two or later");
        pay_tribute(&plan, &mut hands);
        self.pending = return_obligations(&plan);
        self.returns.clear();
        self.round = RoundState::with_hands(hands, plan.leader, level, self.episode.team_levels);
        self.plan = Some(plan);
        if self.pending.is_empty() {
            self.begin_play();
        } else {
            self.phase = Phase::Returns;
            if self.auto_returns {
                self.auto_return_all().expect("heuristic returns are legal");
            }
        }
    }

    fn begin_play(&mut self) {
        self.phase = Phase::Play;
        self.log_round_start();
    }

    fn log_round_start(&mut self) {
        let (tribute, anti) = match &self.plan {
            Some(p) => (p.payments.clone(), p.annulled),
            None => (Vec::new(), false),
        };
        self.log.push(ReplayEvent::RoundStart {
            round: self.round_number() as u32 + 1,
            level: self.round.level,
            team_levels: self.round.team_levels,
            hands: self.round.hands,
            leader: self.round.turn,
            tribute,
            returns: self.returns.clone(),
            anti_tribute: anti,
        });
    }

    /// All hands at the start of the current round, for tests.
    pub fn hands(&self) -> &[CardSet; SEATS] {
        &self.round.hands
    }
}
