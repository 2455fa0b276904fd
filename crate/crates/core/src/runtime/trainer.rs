//! The algorithm-specific halves of the actor-learner loop.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::wire::WireSample;
use super::RuntimeError;
use crate::dmc::{actor_episode, DmcLearner, EpisodeData, Sample};
use crate::nn::{Checkpoint, Mlp, NetKind, OptimState, Optimizer, RmsProp, Adam};
use crate::ppo::{ppo_actor_episode, PpoConfig, PpoLearner, PpoSample, PpoStats};

/// What one update reports to the metrics log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub loss: f32,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub ppo: Option<PpoStats>,
}

/// Learner side: owns the trainable network.
pub trait Trainer: Send {
    type Sample: WireSample;

    fn kind(&self) -> NetKind;
    /// Candidate slots, 0 for a Q network.
    fn k(&self) -> usize;
    fn net(&self) -> &Mlp<f32>;
    fn optimizer(&self) -> &dyn Optimizer<f32>;
    fn train_freq(&self) -> usize;
    fn receptions(&self) -> u64;
    fn updates(&self) -> u64;
    fn buffer_len(&self) -> usize;
    fn buffer_capacity(&self) -> usize;
    /// Stores an episode and trains if one is due.
    fn receive(&mut self, episode: EpisodeData<Self::Sample>) -> Result<Option<UpdateStats>, RuntimeError>;
    /// Takes network, optimizer and counters from a checkpoint.
    fn restore(&mut self, ck: Checkpoint) -> Result<(), RuntimeError>;
}

/// Actor side: plays one episode with the given parameters.
pub trait Rollout: Send {
    type Sample: WireSample;

    fn play(&mut self, seed: u64, params: &Mlp<f32>) -> Result<EpisodeData<Self::Sample>, RuntimeError>;
}

fn check_restore(ck: &Checkpoint, kind: NetKind, net: &Mlp<f32>) -> Result<(), RuntimeError> {
    if ck.meta.kind != kind || ck.net.sizes() != net.sizes() {
        return Err(RuntimeError::Resume(format!(
            "checkpoint holds {:?} {:?}, run expects {:?} {:?}",
            ck.meta.kind,
            ck.meta.sizes,
            kind,
            net.sizes()
        )));
    }
    Ok(())
}

fn opt_buffers(ck: &Checkpoint) -> Vec<Vec<f32>> {
    ck.optimizer.as_ref().map(|o| o.buffers().iter().map(|b| b.to_vec()).collect()).unwrap_or_default()
}

impl Trainer for DmcLearner {
    type Sample = Sample;

    fn kind(&self) -> NetKind {
        NetKind::Q
    }
    fn k(&self) -> usize {
        0
    }
    fn net(&self) -> &Mlp<f32> {
        &self.net
    }
    fn optimizer(&self) -> &dyn Optimizer<f32> {
        &self.optimizer
    }
    fn train_freq(&self) -> usize {
        self.config.train_freq
    }
    fn receptions(&self) -> u64 {
        self.receptions
    }
    fn updates(&self) -> u64 {
        self.updates
    }
    fn buffer_len(&self) -> usize {
        self.buffer.len()
    }
    fn buffer_capacity(&self) -> usize {
        self.buffer.capacity()
    }

    fn receive(&mut self, episode: EpisodeData<Sample>) -> Result<Option<UpdateStats>, RuntimeError> {
        Ok(DmcLearner::receive(self, episode)?.map(|loss| UpdateStats { loss, ppo: None }))
    }

    fn restore(&mut self, ck: Checkpoint) -> Result<(), RuntimeError> {
        check_restore(&ck, NetKind::Q, &self.net)?;
        let mut buffers = opt_buffers(&ck);
        match ck.meta.optimizer {
            Some(OptimState::RmsProp { lr, alpha, eps }) if buffers.len() == 1 => {
                self.optimizer = RmsProp { lr, alpha, eps, sq: buffers.pop().unwrap() };
            }
            _ => return Err(RuntimeError::Resume("checkpoint lacks RMSProp state".into())),
        }
        self.net = ck.net;
        self.updates = ck.meta.step;
        self.receptions = ck.meta.step * self.config.train_freq as u64;
        Ok(())
    }
}

impl Trainer for PpoLearner {
    type Sample = PpoSample;

    fn kind(&self) -> NetKind {
        NetKind::Ppo
    }
    fn k(&self) -> usize {
        self.config.k
    }
    fn net(&self) -> &Mlp<f32> {
        &self.net
    }
    fn optimizer(&self) -> &dyn Optimizer<f32> {
        &self.optimizer
    }
    fn train_freq(&self) -> usize {
        self.config.train_freq
    }
    fn receptions(&self) -> u64 {
        self.receptions
    }
    fn updates(&self) -> u64 {
        self.updates
    }
    fn buffer_len(&self) -> usize {
        self.buffer.len()
    }
    fn buffer_capacity(&self) -> usize {
        self.buffer.capacity()
    }

    fn receive(&mut self, episode: EpisodeData<PpoSample>) -> Result<Option<UpdateStats>, RuntimeError> {
        Ok(PpoLearner::receive(self, episode)?.map(|s| UpdateStats { loss: s.policy_loss + s.value_loss, ppo: Some(s) }))
    }

    fn restore(&mut self, ck: Checkpoint) -> Result<(), RuntimeError> {
        check_restore(&ck, NetKind::Ppo, &self.net)?;
        let mut buffers = opt_buffers(&ck);
        match ck.meta.optimizer {
            Some(OptimState::Adam { lr, beta1, beta2, eps, t }) if buffers.len() == 2 => {
                let v = buffers.pop().unwrap();
                let m = buffers.pop().unwrap();
                self.optimizer = Adam { lr, beta1, beta2, eps, t, m, v };
            }
            _ => return Err(RuntimeError::Resume("checkpoint lacks Adam state".into())),
        }
        self.net = ck.net;
        self.updates = ck.meta.step;
        self.receptions = ck.meta.step * self.config.train_freq as u64;
        Ok(())
    }
}

/// Epsilon-greedy self-play over a Q network.
pub struct DmcRollout {
    pub epsilon: f64,
    rng: ChaCha8Rng,
}

impl DmcRollout {
    pub fn new(epsilon: f64, seed: u64) -> DmcRollout {
        DmcRollout { epsilon, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Rollout for DmcRollout {
    type Sample = Sample;

    fn play(&mut self, seed: u64, params: &Mlp<f32>) -> Result<EpisodeData<Sample>, RuntimeError> {
        Ok(actor_episode(seed, params, self.epsilon, &mut self.rng)?)
    }
}

/// Self-play with the policy network choosing among the frozen Q
/// network's top candidates.
pub struct PpoRollout {
    pub dmc: Arc<Mlp<f32>>,
    pub config: PpoConfig,
    rng: ChaCha8Rng,
}

impl PpoRollout {
    pub fn new(dmc: Arc<Mlp<f32>>, config: PpoConfig, seed: u64) -> PpoRollout {
        PpoRollout { dmc, config, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Rollout for PpoRollout {
    type Sample = PpoSample;

    fn play(&mut self, seed: u64, params: &Mlp<f32>) -> Result<EpisodeData<PpoSample>, RuntimeError> {
        Ok(ppo_actor_episode(seed, &self.dmc, params, &self.config, &mut self.rng)?)
    }
}
