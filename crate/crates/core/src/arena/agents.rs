use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cards::{Combo, ComboKind};
use crate::dmc::{argmax, q_values};
use crate::engine::SeatView;
use crate::features::encode_state;
use crate::nn::Mlp;
use crate::ppo::{ppo_decide, sample_slot, top_k_candidates};

/// A scored option shown in case studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub combo: Combo,
    pub score: f32,
    /// Policy probability, for agents that sample.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prob: Option<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub combo: Combo,
    pub candidates: Vec<Candidate>,
}

pub trait Agent: Send {
    fn name(&self) -> String;

    /// Picks a play from `legal`, which is never empty.
    fn decide(&mut self, view: &SeatView, legal: &[Combo]) -> Combo {
        self.decide_explained(view, legal).combo
    }

    /// Like [`Agent::decide`], with the options the agent weighed.
    fn decide_explained(&mut self, view: &SeatView, legal: &[Combo]) -> Decision;
}

pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> RandomAgent {
        RandomAgent { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> String {
        "random".into()
    }

    fn decide_explained(&mut self, _view: &SeatView, legal: &[Combo]) -> Decision {
        let combo = *legal.choose(&mut self.rng).expect("legal set is never empty");
        Decision { combo, candidates: Vec::new() }
    }
}

/// Scripted baseline: leads the smallest non-bomb combo, follows with the
/// smallest covering combo of the same kind, and bombs only when an
/// opponent is close to going out.
#[derive(Debug, Clone)]
pub struct GreedyAgent {
    /// Bomb when some opponent holds at most this many cards.
    pub bomb_threshold: u8,
}

impl Default for GreedyAgent {
    fn default() -> Self {
        GreedyAgent { bomb_threshold: 5 }
    }
}

fn bomb_rank(c: &Combo) -> (u8, u8) {
    let tier = match c.kind {
        ComboKind::Bomb if c.size() <= 5 => 2 * c.size() as u8,
        ComboKind::Bomb => 2 * c.size() as u8 + 1,
        ComboKind::StraightFlush => 11,
        _ => 100,
    };
    (tier, c.key)
}

impl GreedyAgent {
    pub fn choose(&self, view: &SeatView, legal: &[Combo]) -> Combo {
        let wild = view.level.wild_card();
        let small = |c: &&Combo| (c.size(), c.key, c.cards.count(wild));
        let plays = legal.iter().filter(|c| !c.is_pass());
        match &view.to_beat {
            None => {
                if let Some(c) = plays.clone().filter(|c| !c.is_bomb_class()).min_by_key(small) {
                    return *c;
                }
                *plays.min_by_key(|c| bomb_rank(c)).expect("a leader has a play")
            }
            Some((_, beat)) => {
                if !beat.is_bomb_class() {
                    if let Some(c) = plays.clone().filter(|c| c.kind == beat.kind).min_by_key(small) {
                        return *c;
                    }
                }
                let pressed = view.min_opponent_cards().is_some_and(|n| n <= self.bomb_threshold);
                if pressed {
                    if let Some(c) = plays.filter(|c| c.is_bomb_class()).min_by_key(|c| bomb_rank(c)) {
                        return *c;
                    }
                }
                Combo::PASS
            }
        }
    }
}

impl Agent for GreedyAgent {
    fn name(&self) -> String {
        "greedy".into()
    }

    fn decide_explained(&mut self, view: &SeatView, legal: &[Combo]) -> Decision {
        Decision { combo: self.choose(view, legal), candidates: Vec::new() }
    }
}

/// Plays the legal action with the highest Q.
pub struct DmcAgent {
    pub net: Arc<Mlp<f32>>,
    /// Candidates reported by `decide_explained`.
    pub show: usize,
}

impl DmcAgent {
    pub fn new(net: Arc<Mlp<f32>>) -> DmcAgent {
        DmcAgent { net, show: 5 }
    }
}

impl Agent for DmcAgent {
    fn name(&self) -> String {
        "dmc".into()
    }

    fn decide(&mut self, view: &SeatView, legal: &[Combo]) -> Combo {
        let q = q_values(&self.net, &encode_state(view), legal);
        legal[argmax(&q)]
    }

    fn decide_explained(&mut self, view: &SeatView, legal: &[Combo]) -> Decision {
        let q = q_values(&self.net, &encode_state(view), legal);
        let top = top_k_candidates(&q, self.show).expect("legal set is never empty");
        let candidates = top.iter().map(|&i| Candidate { combo: legal[i], score: q[i], prob: None }).collect();
        Decision { combo: legal[argmax(&q)], candidates }
    }
}

/// Samples among the Q network's top `k` actions with the policy network.
pub struct PpoAgent {
    pub dmc: Arc<Mlp<f32>>,
    pub policy: Arc<Mlp<f32>>,
    pub k: usize,
    rng: ChaCha8Rng,
}

impl PpoAgent {
    pub fn new(dmc: Arc<Mlp<f32>>, policy: Arc<Mlp<f32>>, k: usize, seed: u64) -> PpoAgent {
        PpoAgent { dmc, policy, k, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Agent for PpoAgent {
    fn name(&self) -> String {
        format!("ppo(k={})", self.k)
    }

    fn decide_explained(&mut self, view: &SeatView, legal: &[Combo]) -> Decision {
        let state = encode_state(view);
        let d = ppo_decide(&self.dmc, &self.policy, self.k, &state, legal, &mut self.rng)
            .expect("legal set is never empty");
        let candidates = d
            .candidates
            .iter()
            .zip(&d.q)
            .zip(&d.probs)
            .map(|((c, &q), &p)| Candidate { combo: *c, score: q, prob: Some(p) })
            .collect();
        Decision { combo: d.candidates[d.slot], candidates }
    }
}

/// Picks uniformly among the Q network's top `k` actions.
pub struct UniformTopK {
    pub dmc: Arc<Mlp<f32>>,
    pub k: usize,
    rng: ChaCha8Rng,
}

impl UniformTopK {
    pub fn new(dmc: Arc<Mlp<f32>>, k: usize, seed: u64) -> UniformTopK {
        UniformTopK { dmc, k, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Agent for UniformTopK {
    fn name(&self) -> String {
        format!("uniform-top{}", self.k)
    }

    fn decide_explained(&mut self, view: &SeatView, legal: &[Combo]) -> Decision {
        let q = q_values(&self.dmc, &encode_state(view), legal);
        let top = top_k_candidates(&q, self.k).expect("legal set is never empty");
        let p = 1.0 / top.len() as f32;
        let probs = vec![p; top.len()];
        let slot = sample_slot(&probs, &mut self.rng);
        let candidates = top.iter().map(|&i| Candidate { combo: legal[i], score: q[i], prob: Some(p) }).collect();
        Decision { combo: legal[top[slot]], candidates }
    }
}

/// Request sent to an external agent, one JSON object per line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub view: SeatView,
    pub legal: Vec<Combo>,
}

/// Reply: index into `legal`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteReply {
    pub index: usize,
}

/// Forwards decisions to a process speaking newline-delimited JSON.
/// On connection or protocol failure the first legal action is played,
/// which is Pass when following.
pub struct RemoteAgent {
    addr: String,
    conn: Option<(BufReader<TcpStream>, TcpStream)>,
}

impl RemoteAgent {
    pub fn new(addr: &str) -> RemoteAgent {
        RemoteAgent { addr: addr.to_string(), conn: None }
    }

    fn ask(&mut self, req: &RemoteRequest) -> std::io::Result<usize> {
        if self.conn.is_none() {
            let s = TcpStream::connect(&self.addr)?;
            self.conn = Some((BufReader::new(s.try_clone()?), s));
        }
        let (reader, writer) = self.conn.as_mut().unwrap();
        let mut line = serde_json::to_string(req)?;
        line.push('\n');
        writer.write_all(line.as_bytes())?;
        let mut reply = String::new();
        reader.read_line(&mut reply)?;
        let r: RemoteReply = serde_json::from_str(&reply)?;
        Ok(r.index)
    }
}

impl Agent for RemoteAgent {
    fn name(&self) -> String {
        format!("remote:{}", self.addr)
    }

    fn decide_explained(&mut self, view: &SeatView, legal: &[Combo]) -> Decision {
        let req = RemoteRequest { view: view.clone(), legal: legal.to_vec() };
        let combo = match self.ask(&req) {
            Ok(i) => legal.get(i).copied().unwrap_or(legal[0]),
            Err(e) => {
                log::warn!("remote agent {}: {e}", self.addr);
                self.conn = None;
                legal[0]
            }
        };
        Decision { combo, candidates: Vec::new() }
    }
}
