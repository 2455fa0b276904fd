//! Team matches between agents, match statistics and case-study panels.

pub mod agents;

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agents::{Agent, Candidate, Decision, DmcAgent, GreedyAgent, PpoAgent, RandomAgent, RemoteAgent, UniformTopK};

use crate::engine::{team_of, Game, ReplayEvent, Role, RoundState, SEATS};
use crate::nn::{load_checkpoint, CheckpointError, Mlp, NetKind};

#[derive(Debug, Error)]
pub enum ArenaError {
    #[error("bad agent spec {0:?}")]
    BadSpec(String),
    #[error("{path}: {source}")]
    Checkpoint { path: PathBuf, source: CheckpointError },
    #[error("decision {index} is out of range ({count} decisions in the replay)")]
    OutOfRange { index: usize, count: usize },
    #[error("replay does not re-simulate: {0}")]
    Replay(String),
}

/// Textual agent description:
/// `random | greedy | dmc:<ckpt> | ppo:<ckpt>,dmc:<ckpt>,k=<n> |
/// topk:<dmc ckpt>,k=<n> | remote:<addr>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentSpec {
    Random,
    Greedy,
    Dmc { ckpt: PathBuf },
    Ppo { ckpt: PathBuf, dmc: PathBuf, k: usize },
    UniformTopK { dmc: PathBuf, k: usize },
    Remote { addr: String },
}

impl FromStr for AgentSpec {
    type Err = ArenaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ArenaError::BadSpec(s.to_string());
        let s = s.trim();
        match s {
            "random" => return Ok(AgentSpec::Random),
            "greedy" => return Ok(AgentSpec::Greedy),
            _ => {}
        }
        let (head, rest) = s.split_once(':').ok_or_else(bad)?;
        let parse_k = |p: &str| p.strip_prefix("k=").and_then(|v| v.parse::<usize>().ok()).filter(|&k| k > 0);
        match head {
            "dmc" => Ok(AgentSpec::Dmc { ckpt: rest.into() }),
            "remote" => Ok(AgentSpec::Remote { addr: rest.into() }),
            "ppo" => {
                let parts: Vec<&str> = rest.split(',').collect();
                let [p, d, k] = parts.as_slice() else { return Err(bad()) };
                let dmc = d.strip_prefix("dmc:").ok_or_else(bad)?;
                Ok(AgentSpec::Ppo { ckpt: p.into(), dmc: dmc.into(), k: parse_k(k).ok_or_else(bad)? })
            }
            "topk" => {
                let (d, k) = rest.split_once(',').ok_or_else(bad)?;
                Ok(AgentSpec::UniformTopK { dmc: d.into(), k: parse_k(k).ok_or_else(bad)? })
            }
            _ => Err(bad()),
        }
    }
}

/// An agent recipe with its networks loaded, cheap to clone per seat.
#[derive(Clone)]
pub enum AgentKind {
    Random,
    Greedy(GreedyAgent),
    Dmc(Arc<Mlp<f32>>),
    Ppo { dmc: Arc<Mlp<f32>>, policy: Arc<Mlp<f32>>, k: usize },
    UniformTopK { dmc: Arc<Mlp<f32>>, k: usize },
    Remote(String),
}

fn load(path: &Path, kind: NetKind) -> Result<Arc<Mlp<f32>>, ArenaError> {
    load_checkpoint(path, Some(kind))
        .map(|c| Arc::new(c.net))
        .map_err(|source| ArenaError::Checkpoint { path: path.to_path_buf(), source })
}

impl AgentSpec {
    pub fn load(&self) -> Result<AgentKind, ArenaError> {
        Ok(match self {
            AgentSpec::Random => AgentKind::Random,
            AgentSpec::Greedy => AgentKind::Greedy(GreedyAgent::default()),
            AgentSpec::Dmc { ckpt } => AgentKind::Dmc(load(ckpt, NetKind::Q)?),
            AgentSpec::Ppo { ckpt, dmc, k } => {
                let policy = load(ckpt, NetKind::Ppo)?;
                if policy.output_dim() != k + 1 {
                    return Err(ArenaError::BadSpec(format!("policy {} was not trained with k={k}", ckpt.display())));
                }
                AgentKind::Ppo { dmc: load(dmc, NetKind::Q)?, policy, k: *k }
            }
            AgentSpec::UniformTopK { dmc, k } => AgentKind::UniformTopK { dmc: load(dmc, NetKind::Q)?, k: *k },
            AgentSpec::Remote { addr } => AgentKind::Remote(addr.clone()),
        })
    }
}

impl AgentKind {
    pub fn build(&self, seed: u64) -> Box<dyn Agent> {
        match self {
            AgentKind::Random => Box::new(RandomAgent::new(seed)),
            AgentKind::Greedy(g) => Box::new(g.clone()),
            AgentKind::Dmc(net) => Box::new(DmcAgent::new(net.clone())),
            AgentKind::Ppo { dmc, policy, k } => Box::new(PpoAgent::new(dmc.clone(), policy.clone(), *k, seed)),
            AgentKind::UniformTopK { dmc, k } => Box::new(UniformTopK::new(dmc.clone(), *k, seed)),
            AgentKind::Remote(addr) => Box::new(RemoteAgent::new(addr)),
        }
    }

    pub fn name(&self) -> String {
        self.build(0).name()
    }
}

/// SplitMix64 step, for deriving independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleTally {
    pub banker: u64,
    pub follower: u64,
    pub third: u64,
    pub dweller: u64,
    pub double_dweller: u64,
}

impl RoleTally {
    fn add(&mut self, r: Role) {
        match r {
            Role::Banker => self.banker += 1,
            Role::Follower => self.follower += 1,
            Role::Third => self.third += 1,
            Role::Dweller => self.dweller += 1,
            Role::DoubleDweller => self.double_dweller += 1,
        }
    }

    fn merge(&mut self, o: &RoleTally) {
        self.banker += o.banker;
        self.follower += o.follower;
        self.third += o.third;
        self.dweller += o.dweller;
        self.double_dweller += o.double_dweller;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub team_a: String,
    pub team_b: String,
    pub n_games: u64,
    pub seed: u64,
    pub team_a_wins: u64,
    pub team_b_wins: u64,
    pub winrate_a: f64,
    /// Wilson 95% interval for team A's win rate.
    pub ci95: (f64, f64),
    pub mean_rounds: f64,
    /// Rounds lost to illegal actions, per team.
    pub forfeits: [u64; 2],
    pub roles_a: RoleTally,
    pub roles_b: RoleTally,
    /// Round-one leads per team (A, B) and seat pair ({0,2}, {1,3}).
    pub first_leads: [[u64; 2]; 2],
}

impl MatchReport {
    pub fn ci_excludes_half(&self) -> bool {
        self.ci95.0 > 0.5 || self.ci95.1 < 0.5
    }
}

/// Wilson score interval at z = 1.96.
pub fn wilson_interval(wins: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.96f64;
    let n = n as f64;
    let p = wins as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) + z * z / (4.0 * n)) / n).sqrt() / denom;
    (center - half, center + half)
}

#[derive(Debug, Clone, Default)]
struct GameOutcome {
    a_won: bool,
    rounds: u64,
    forfeits: [u64; 2],
    roles: [RoleTally; 2],
    first_lead: (usize, usize),
}

/// Team that team A plays as in game `g`: games come in pairs on the same
/// deal with the teams swapped.
pub fn team_a_side(g: u64) -> usize {
    (g % 2) as usize
}

pub fn deal_seed(seed: u64, g: u64) -> u64 {
    mix_seed(seed, g / 2)
}

/// Plays one episode; `agents[s]` sits at seat `s`.
pub fn play_episode(game: &mut Game, agents: &mut [Box<dyn Agent>]) -> [u64; 2] {
    let mut forfeits = [0u64; 2];
    while !game.is_over() {
        let seat = game.turn();
        let legal = game.legal_actions();
        let view = game.view(seat);
        let c = agents[seat].decide(&view, &legal);
        if legal.contains(&c) {
            game.apply(&c).expect("legal action applies");
        } else {
            forfeits[team_of(seat)] += 1;
            game.forfeit(seat).expect("episode in progress");
        }
    }
    forfeits
}

fn play_one(a: &AgentKind, b: &AgentKind, seed: u64, g: u64) -> GameOutcome {
    let side = team_a_side(g);
    let mut game = Game::new(deal_seed(seed, g));
    let first_leader = game.turn();
    let mut agents: Vec<Box<dyn Agent>> = (0..SEATS)
        .map(|s| {
            let kind = if team_of(s) == side { a } else { b };
            kind.build(mix_seed(mix_seed(seed, g), s as u64 + 1))
        })
        .collect();
    let f = play_episode(&mut game, &mut agents);
    let mut out = GameOutcome {
        a_won: game.winner() == Some(side),
        rounds: game.results.len() as u64,
        first_lead: (if team_of(first_leader) == side { 0 } else { 1 }, first_leader % 2),
        ..Default::default()
    };
    // index by A/B rather than by seat parity
    out.forfeits = if side == 0 { f } else { [f[1], f[0]] };
    for r in &game.results {
        for s in 0..SEATS {
            let t = if team_of(s) == side { 0 } else { 1 };
            out.roles[t].add(r.roles[s]);
        }
    }
    out
}

/// Plays `n_games` episodes between two teams. Consecutive games share a
/// deal with seats swapped; results are identical for a given seed when the
/// agents are deterministic given their seeds.
pub fn play_match(a: &AgentKind, b: &AgentKind, n_games: u64, seed: u64) -> MatchReport {
    let outcomes: Vec<GameOutcome> = (0..n_games).into_par_iter().map(|g| play_one(a, b, seed, g)).collect();
    let mut r = MatchReport {
        team_a: a.name(),
        team_b: b.name(),
        n_games,
        seed,
        team_a_wins: 0,
        team_b_wins: 0,
        winrate_a: 0.0,
        ci95: (0.0, 1.0),
        mean_rounds: 0.0,
        forfeits: [0, 0],
        roles_a: RoleTally::default(),
        roles_b: RoleTally::default(),
        first_leads: [[0; 2]; 2],
    };
    let mut rounds = 0;
    for o in &outcomes {
        if o.a_won {
            r.team_a_wins += 1;
        } else {
            r.team_b_wins += 1;
        }
        rounds += o.rounds;
        r.forfeits[0] += o.forfeits[0];
        r.forfeits[1] += o.forfeits[1];
        r.roles_a.merge(&o.roles[0]);
        r.roles_b.merge(&o.roles[1]);
        r.first_leads[o.first_lead.0][o.first_lead.1] += 1;
    }
    if n_games > 0 {
        r.winrate_a = r.team_a_wins as f64 / n_games as f64;
        r.mean_rounds = rounds as f64 / n_games as f64;
    }
    r.ci95 = wilson_interval(r.team_a_wins, n_games);
    r
}

/// Fields of one decision, as shown in case-study figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasePanel {
    pub decision_index: usize,
    pub round: u32,
    pub level: String,
    pub team_levels: [String; 2],
    pub seat: usize,
    pub hand: String,
    /// Plays of the current round so far, as `seat: action`.
    pub history: Vec<String>,
    pub remaining_cards: [u8; SEATS],
    pub legal_actions: Vec<String>,
    pub candidates: Vec<PanelCandidate>,
    pub chosen: String,
    /// What was actually played at this point of the replay.
    pub recorded: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelCandidate {
    pub action: String,
    pub score: f32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prob: Option<f32>,
}

/// Rebuilds the state before the `index`-th play of a replay and asks
/// `agent` what it would do there.
pub fn dump_case_study(events: &[ReplayEvent], agent: &mut dyn Agent, index: usize) -> Result<CasePanel, ArenaError> {
    let mut state: Option<(u32, RoundState)> = None;
    let mut seen = 0;
    for e in events {
        match e {
            ReplayEvent::RoundStart { round, level, team_levels, hands, leader, .. } => {
                state = Some((*round, RoundState::with_hands(*hands, *leader, *level, *team_levels)));
            }
            ReplayEvent::Play { seat, combo, .. } => {
                let (round, s) = state.as_mut().ok_or_else(|| ArenaError::Replay("play outside a round".into()))?;
                if seen == index {
                    return Ok(panel(index, *round, s, agent, combo));
                }
                s.apply_for(*seat, combo).map_err(|e| ArenaError::Replay(e.to_string()))?;
                seen += 1;
            }
            _ => {}
        }
    }
    Err(ArenaError::OutOfRange { index, count: seen })
}

fn panel(index: usize, round: u32, s: &RoundState, agent: &mut dyn Agent, recorded: &crate::cards::Combo) -> CasePanel {
    let lv = s.level;
    let seat = s.turn;
    let view = s.view(seat);
    let legal = s.legal_actions();
    let d = agent.decide_explained(&view, &legal);
    CasePanel {
        decision_index: index,
        round,
        level: lv.to_string(),
        team_levels: s.team_levels.map(|l| l.to_string()),
        seat,
        hand: s.hands[seat].notation(),
        history: s.log.iter().map(|p| format!("{}: {}", p.seat, p.combo.short(lv))).collect(),
        remaining_cards: view.hand_counts,
        legal_actions: legal.iter().map(|c| c.short(lv)).collect(),
        candidates: d
            .candidates
            .iter()
            .map(|c| PanelCandidate { action: c.combo.short(lv), score: c.score, prob: c.prob })
            .collect(),
        chosen: d.combo.short(lv),
        recorded: recorded.short(lv),
    }
}
