//! Deep Monte Carlo: epsilon-greedy self-play over Q(s, a) and regression of
//! Q onto the final value of each sample.

use std::collections::VecDeque;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cards::Combo;
use crate::engine::{assign_values, Game, GameError, RoundResult, SeatView, Valued, SEATS};
use crate::features::{encode_action, encode_state, ActionVec, StateVec, ACTION_DIM, Q_INPUT_DIM, STATE_DIM};
use crate::nn::{q_net_sizes, Mlp, NnError, Optimizer, RmsProp, Scalar};

#[derive(Debug, Error)]
pub enum DmcError {
    #[error("no legal actions")]
    NoLegalActions,
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmcConfig {
    pub epsilon: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Episodes received between updates.
    pub train_freq: usize,
    pub lr: f64,
    pub rmsprop_alpha: f64,
    pub rmsprop_eps: f64,
    /// Clamp each regression target to within this distance of the
    /// behaviour Q; `None` trains on the raw value.
    pub q_clip_lambda: Option<f32>,
    pub hidden: Vec<usize>,
}

impl Default for DmcConfig {
    fn default() -> Self {
        DmcConfig {
            epsilon: 0.01,
            buffer_capacity: 65536,
            batch_size: 32768,
            train_freq: 250,
            lr: 1e-3,
            rmsprop_alpha: 0.99,
            rmsprop_eps: 1e-5,
            q_clip_lambda: None,
            hidden: crate::nn::Q_HIDDEN.to_vec(),
        }
    }
}

impl DmcConfig {
    /// Scaled-down settings that train on a single core in minutes.
    pub fn desk() -> DmcConfig {
        DmcConfig {
            epsilon: 0.05,
            buffer_capacity: 16384,
            batch_size: 1024,
            train_freq: 1,
            hidden: vec![128, 128],
            ..DmcConfig::default()
        }
    }
}

/// One decision of one seat.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: StateVec,
    pub action: ActionVec,
    pub behavior_q: f32,
    pub r: f32,
    pub seat: u8,
    /// 0-based round within the episode.
    pub round: u16,
}

impl Valued for Sample {
    fn seat(&self) -> usize {
        self.seat as usize
    }
    fn round(&self) -> usize {
        self.round as usize
    }
    fn set_value(&mut self, r: f32) {
        self.r = r;
    }
}

impl Sample {
    pub fn q_input_into(&self, out: &mut [f32]) {
        crate::features::q_input_into(&self.state, &self.action, out);
    }
}

/// Epsilon-greedy choice among the first `legal_count` entries of `q`;
/// ties go to the lowest index.
pub fn select_action<R: Rng>(q: &[f32], legal_count: usize, epsilon: f64, rng: &mut R) -> Result<usize, DmcError> {
    if legal_count == 0 || q.len() < legal_count {
        return Err(DmcError::NoLegalActions);
    }
    if epsilon > 0.0 && rng.gen_bool(epsilon.min(1.0)) {
        return Ok(rng.gen_range(0..legal_count));
    }
    Ok(argmax(&q[..legal_count]))
}

pub fn argmax(q: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Q of every legal action in one seat's view.
pub fn q_values(net: &Mlp<f32>, state: &StateVec, legal: &[Combo]) -> Vec<f32> {
    let prefix: Vec<f32> = state.iter().map(|&x| x as f32).collect();
    let mut actions = Vec::with_capacity(legal.len() * ACTION_DIM);
    for c in legal {
        actions.extend(encode_action(c).iter().map(|&x| x as f32));
    }
    net.predict_shared_prefix(&prefix, &actions, ACTION_DIM).expect("Q network takes state and action")
}

/// Mean squared error of Q against the targets, and its parameter gradient.
pub fn dmc_loss<T: Scalar>(net: &Mlp<T>, inputs: &[T], targets: &[T]) -> Result<(T, Vec<T>), DmcError> {
    let n = targets.len();
    if n == 0 {
        return Err(DmcError::EmptyBatch);
    }
    let cache = net.forward(inputs, n)?;
    let inv = T::from_f64(1.0 / n as f64);
    let two = T::from_f64(2.0);
    let mut loss = T::ZERO;
    let mut grad = Vec::with_capacity(n);
    for (&q, &r) in cache.output().iter().zip(targets) {
        let d = q - r;
        loss += d * d * inv;
        grad.push(two * d * inv);
    }
    let grads = net.backward(&cache, &grad)?;
    Ok((loss, grads))
}

/// FIFO ring of samples.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<S> {
    capacity: usize,
    items: VecDeque<S>,
}

impl<S> ReplayBuffer<S> {
    pub fn new(capacity: usize) -> ReplayBuffer<S> {
        assert!(capacity > 0);
        ReplayBuffer { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn push(&mut self, s: S) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(s);
    }

    pub fn extend<I: IntoIterator<Item = S>>(&mut self, it: I) {
        for s in it {
            self.push(s);
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Up to `n` distinct samples drawn uniformly.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<&S> {
        let n = n.min(self.items.len());
        sample_indices(rng, self.items.len(), n).into_iter().map(|i| &self.items[i]).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &S> {
        self.items.iter()
    }
}

/// Output of one self-play episode.
#[derive(Debug, Clone)]
pub struct EpisodeData<S> {
    /// One trajectory per seat.
    pub trajectories: [Vec<S>; SEATS],
    pub results: Vec<RoundResult>,
    pub winner: usize,
}

impl<S> EpisodeData<S> {
    pub fn sample_count(&self) -> usize {
        self.trajectories.iter().map(Vec::len).sum()
    }
}

/// Plays one episode with all four seats sharing `net`. Tribute returns
/// use the heuristic and leave no samples.
pub fn actor_episode(
    seed: u64,
    net: &Mlp<f32>,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeData<Sample>, DmcError> {
    let mut game = Game::new(seed);
    let mut trajectories: [Vec<Sample>; SEATS] = Default::default();
    while !game.is_over() {
        let seat = game.turn();
        let view: SeatView = game.view(seat);
        let state = encode_state(&view);
        let legal = game.legal_actions();
        let q = q_values(net, &state, &legal);
        let i = select_action(&q, legal.len(), epsilon, rng)?;
        trajectories[seat].push(Sample {
            state,
            action: encode_action(&legal[i]),
            behavior_q: q[i],
            r: 0.0,
            seat: seat as u8,
            round: game.round_number() as u16,
        });
        game.apply(&legal[i])?;
    }
    let winner = game.winner().expect("finished episode has a winner");
    for t in trajectories.iter_mut() {
        assign_values(&game.results, Some(winner), t);
    }
    Ok(EpisodeData { trajectories, results: game.results, winner })
}

/// The single owner of the Q network during training.
pub struct DmcLearner {
    pub config: DmcConfig,
    pub net: Mlp<f32>,
    pub optimizer: RmsProp<f32>,
    pub buffer: ReplayBuffer<Sample>,
    pub receptions: u64,
    pub updates: u64,
    rng: ChaCha8Rng,
}

impl DmcLearner {
    pub fn new(config: DmcConfig, seed: u64) -> DmcLearner {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::new(&q_net_sizes(&config.hidden), &mut rng);
        DmcLearner::with_net(config, net, seed)
    }

    pub fn with_net(config: DmcConfig, net: Mlp<f32>, seed: u64) -> DmcLearner {
        let optimizer = RmsProp::new(net.params().len(), config.lr, config.rmsprop_alpha, config.rmsprop_eps);
        DmcLearner {
            buffer: ReplayBuffer::new(config.buffer_capacity),
            config,
            net,
            optimizer,
            receptions: 0,
            updates: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed),
        }
    }

    /// Stores one episode; trains when a multiple of `train_freq` episodes
    /// has arrived. Returns the loss if an update ran.
    pub fn receive(&mut self, episode: EpisodeData<Sample>) -> Result<Option<f32>, DmcError> {
        for t in episode.trajectories {
            self.buffer.extend(t);
        }
        self.receptions += 1;
        if self.receptions.is_multiple_of(self.config.train_freq as u64) {
            return self.train_step().map(Some);
        }
        Ok(None)
    }

    /// One update on a batch of `min(batch_size, buffer length)` samples.
    pub fn train_step(&mut self) -> Result<f32, DmcError> {
        let batch = self.buffer.sample(self.config.batch_size, &mut self.rng);
        if batch.is_empty() {
            return Err(DmcError::EmptyBatch);
        }
        let mut inputs = vec![0.0f32; batch.len() * Q_INPUT_DIM];
        let mut targets = Vec::with_capacity(batch.len());
        for (row, s) in inputs.chunks_exact_mut(Q_INPUT_DIM).zip(&batch) {
            s.q_input_into(row);
            let t = match self.config.q_clip_lambda {
                Some(l) => s.r.clamp(s.behavior_q - l, s.behavior_q + l),
                None => s.r,
            };
            targets.push(t);
        }
        let (loss, grads) = dmc_loss(&self.net, &inputs, &targets)?;
        self.optimizer.step(self.net.params_mut(), &grads)?;
        self.updates += 1;
        Ok(loss)
    }
}

/// Dimension check used by loaders.
pub fn is_q_net(net: &Mlp<f32>) -> bool {
    net.input_dim() == STATE_DIM + ACTION_DIM && net.output_dim() == 1
}
