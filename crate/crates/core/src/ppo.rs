//! PPO over the top-k actions of a frozen Q network.
//!
//! The policy network sees the state, `k` candidate action vectors ordered
//! by descending Q, and a legality flag per slot. Its last layer holds `k`
//! logits followed by the state value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cards::Combo;
use crate::dmc::{q_values, EpisodeData, ReplayBuffer};
use crate::engine::{sample_value, Game, GameError, SEATS};
use crate::features::{encode_state, ppo_input, ppo_input_dim, FeatureError, PpoInput};
use crate::nn::{ppo_net_sizes, Adam, Mlp, NnError, Optimizer, Scalar};

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("no legal actions")]
    NoLegalActions,
    #[error("sequence lengths differ: {0} rewards, {1} values")]
    LengthMismatch(usize, usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub policy_weight: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub k: usize,
    pub lr: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub train_freq: usize,
    pub normalize_advantages: bool,
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            entropy_coef: 0.05,
            value_coef: 0.5,
            policy_weight: 1.0,
            gamma: 0.99,
            lambda: 0.95,
            k: 2,
            lr: 1e-4,
            buffer_capacity: 2048,
            batch_size: 2048,
            train_freq: 13,
            normalize_advantages: true,
            hidden: crate::nn::PPO_HIDDEN.to_vec(),
        }
    }
}

impl PpoConfig {
    pub fn desk() -> PpoConfig {
        PpoConfig { train_freq: 1, hidden: vec![128, 64], lr: 3e-4, ..PpoConfig::default() }
    }
}

/// Indices of up to `k` actions by descending Q, ties to the lower index.
pub fn top_k_candidates(q: &[f32], k: usize) -> Result<Vec<usize>, PpoError> {
    if q.is_empty() {
        return Err(PpoError::NoLegalActions);
    }
    let mut idx: Vec<usize> = (0..q.len()).collect();
    idx.sort_by(|&a, &b| q[b].total_cmp(&q[a]).then(a.cmp(&b)));
    idx.truncate(k.max(1));
    Ok(idx)
}

/// Softmax over the legal slots; illegal slots get probability 0.
pub fn masked_softmax<T: Scalar>(logits: &[T], legal: &[bool]) -> Vec<T> {
    let max = logits
        .iter()
        .zip(legal)
        .filter(|(_, &l)| l)
        .map(|(&z, _)| z.to_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits
        .iter()
        .zip(legal)
        .map(|(&z, &l)| if l { (z.to_f64() - max).exp() } else { 0.0 })
        .collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| T::from_f64(x / s)).collect()
}

/// Generalized advantage estimates and returns for one trajectory that ends
/// after its last step.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    if rewards.len() != values.len() {
        return Err(PpoError::LengthMismatch(rewards.len(), values.len()));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// One policy decision.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoSample {
    pub input: PpoInput,
    pub slot: usize,
    pub old_logprob: f32,
    pub value: f32,
    pub r: f32,
    pub advantage: f32,
    pub ret: f32,
    pub seat: u8,
    pub round: u16,
}

/// A training batch in flat form.
#[derive(Debug, Clone)]
pub struct PpoBatch<T> {
    pub k: usize,
    pub inputs: Vec<T>,
    pub legal: Vec<bool>,
    pub slots: Vec<usize>,
    pub old_logprobs: Vec<T>,
    pub advantages: Vec<T>,
    pub returns: Vec<T>,
}

impl<T: Scalar> PpoBatch<T> {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn from_samples(samples: &[&PpoSample], k: usize, normalize: bool) -> PpoBatch<T> {
        let mut inputs = Vec::with_capacity(samples.len() * ppo_input_dim(k));
        let mut flat = Vec::new();
        let mut b = PpoBatch {
            k,
            inputs: Vec::new(),
            legal: Vec::with_capacity(samples.len() * k),
            slots: Vec::with_capacity(samples.len()),
            old_logprobs: Vec::with_capacity(samples.len()),
            advantages: Vec::with_capacity(samples.len()),
            returns: Vec::with_capacity(samples.len()),
        };
        for s in samples {
            flat.clear();
            s.input.write_into(&mut flat);
            inputs.extend(flat.iter().map(|&x| T::from_f64(x as f64)));
            b.legal.extend_from_slice(&s.input.legal);
            b.slots.push(s.slot);
            b.old_logprobs.push(T::from_f64(s.old_logprob as f64));
            b.advantages.push(T::from_f64(s.advantage as f64));
            b.returns.push(T::from_f64(s.ret as f64));
        }
        b.inputs = inputs;
        if normalize {
            normalize_advantages(&mut b.advantages);
        }
        b
    }
}

/// Zero mean, unit variance; left alone when the spread is negligible.
pub fn normalize_advantages<T: Scalar>(adv: &mut [T]) {
    let n = adv.len() as f64;
    if n < 2.0 {
        return;
    }
    let mean = adv.iter().map(|a| a.to_f64()).sum::<f64>() / n;
    let var = adv.iter().map(|a| (a.to_f64() - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd < 1e-8 {
        return;
    }
    for a in adv.iter_mut() {
        *a = T::from_f64((a.to_f64() - mean) / sd);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoLosses<T> {
    /// Clipped surrogate objective, to be maximized.
    pub surrogate: T,
    pub entropy: T,
    /// `-surrogate - c_e * entropy`.
    pub policy_loss: T,
    pub value_loss: T,
    pub total: T,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grads: Vec<T>,
}

/// Losses and parameter gradients of `policy_weight * L_p + value_coef * L_v`.
pub fn ppo_losses<T: Scalar>(net: &Mlp<T>, batch: &PpoBatch<T>, cfg: &PpoConfig) -> Result<PpoLosses<T>, PpoError> {
    let n = batch.len();
    if n == 0 {
        return Err(PpoError::EmptyBatch);
    }
    let k = batch.k;
    let cache = net.forward(&batch.inputs, n)?;
    let out = cache.output();
    let inv_n = 1.0 / n as f64;
    let (eps, ce, cv, wp) = (cfg.clip, cfg.entropy_coef, cfg.value_coef, cfg.policy_weight);
    let mut out_grad = vec![T::ZERO; n * (k + 1)];
    let (mut surr, mut ent, mut vloss) = (0.0, 0.0, 0.0);
    let (mut clipped, mut kl) = (0usize, 0.0);
    for i in 0..n {
        let row = &out[i * (k + 1)..(i + 1) * (k + 1)];
        let legal = &batch.legal[i * k..(i + 1) * k];
        let p: Vec<f64> = masked_softmax(&row[..k], legal).iter().map(|x| x.to_f64()).collect();
        let a = batch.slots[i];
        let logp = p[a].ln();
        let old = batch.old_logprobs[i].to_f64();
        let adv = batch.advantages[i].to_f64();
        let ratio = (logp - old).exp();
        let unclipped = ratio * adv;
        let clipped_ratio = ratio.clamp(1.0 - eps, 1.0 + eps);
        let s = unclipped.min(clipped_ratio * adv);
        surr += s;
        if (ratio - 1.0).abs() > eps {
            clipped += 1;
        }
        kl += old - logp;
        // d s / d logp is ratio * adv on the unclipped branch and 0 when clipped
        let ds = if unclipped <= clipped_ratio * adv { unclipped } else { 0.0 };
        let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
        ent += h;
        let g = &mut out_grad[i * (k + 1)..(i + 1) * (k + 1)];
        for j in 0..k {
            if !legal[j] {
                continue;
            }
            let dlogp = if j == a { 1.0 } else { 0.0 } - p[j];
            let dh = if p[j] > 0.0 { -p[j] * (p[j].ln() + h) } else { 0.0 };
            g[j] = T::from_f64(wp * inv_n * (-ds * dlogp - ce * dh));
        }
        let v = row[k].to_f64();
        let d = v - batch.returns[i].to_f64();
        vloss += d * d;
        g[k] = T::from_f64(cv * inv_n * 2.0 * d);
    }
    let grads = net.backward(&cache, &out_grad)?;
    let surrogate = surr * inv_n;
    let entropy = ent * inv_n;
    let policy_loss = -surrogate - ce * entropy;
    let value_loss = vloss * inv_n;
    Ok(PpoLosses {
        surrogate: T::from_f64(surrogate),
        entropy: T::from_f64(entropy),
        policy_loss: T::from_f64(policy_loss),
        value_loss: T::from_f64(value_loss),
        total: T::from_f64(wp * policy_loss + cv * value_loss),
        clip_fraction: clipped as f64 * inv_n,
        approx_kl: kl * inv_n,
        grads,
    })
}

/// Logits and value for one input.
pub fn policy_forward(net: &Mlp<f32>, input: &PpoInput) -> (Vec<f32>, f32) {
    let k = input.k();
    let out = net.predict(&input.to_vec(), 1).expect("policy network matches k");
    (out[..k].to_vec(), out[k])
}

/// Draws a slot from `probs` with one uniform draw.
pub fn sample_slot<R: Rng>(probs: &[f32], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p as f64;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// What the policy did at one decision.
#[derive(Debug, Clone)]
pub struct PpoDecision {
    pub candidates: Vec<Combo>,
    pub q: Vec<f32>,
    pub probs: Vec<f32>,
    pub value: f32,
    pub slot: usize,
    pub input: PpoInput,
}

/// Scores the legal actions with the Q network, keeps the top `k` and
/// samples one with the policy.
pub fn ppo_decide<R: Rng>(
    dmc: &Mlp<f32>,
    policy: &Mlp<f32>,
    k: usize,
    state: &crate::features::StateVec,
    legal: &[Combo],
    rng: &mut R,
) -> Result<PpoDecision, PpoError> {
    let q = q_values(dmc, state, legal);
    let top = top_k_candidates(&q, k)?;
    let candidates: Vec<Combo> = top.iter().map(|&i| legal[i]).collect();
    let input = ppo_input(state, &candidates, k)?;
    let (logits, value) = policy_forward(policy, &input);
    let probs = masked_softmax(&logits, &input.legal);
    let slot = sample_slot(&probs, rng);
    Ok(PpoDecision { q: top.iter().map(|&i| q[i]).collect(), candidates, probs, value, slot, input })
}

/// Self-play episode with all seats on the same policy. Advantages are
/// computed per seat and per round, with the round's value as the reward of
/// the round's last decision.
pub fn ppo_actor_episode(
    seed: u64,
    dmc: &Mlp<f32>,
    policy: &Mlp<f32>,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeData<PpoSample>, PpoError> {
    let mut game = Game::new(seed);
    let mut trajectories: [Vec<PpoSample>; SEATS] = Default::default();
    while !game.is_over() {
        let seat = game.turn();
        let state = encode_state(&game.view(seat));
        let legal = game.legal_actions();
        let d = ppo_decide(dmc, policy, cfg.k, &state, &legal, rng)?;
        trajectories[seat].push(PpoSample {
            old_logprob: d.probs[d.slot].ln(),
            value: d.value,
            slot: d.slot,
            input: d.input,
            r: 0.0,
            advantage: 0.0,
            ret: 0.0,
            seat: seat as u8,
            round: game.round_number() as u16,
        });
        game.apply(&d.candidates[d.slot])?;
    }
    let winner = game.winner().expect("finished episode has a winner");
    for t in trajectories.iter_mut() {
        finish_trajectory(t, &game.results, winner, cfg)?;
    }
    Ok(EpisodeData { trajectories, results: game.results, winner })
}

/// Sets values, advantages and returns of one seat's samples.
pub fn finish_trajectory(
    t: &mut [PpoSample],
    results: &[crate::engine::RoundResult],
    winner: usize,
    cfg: &PpoConfig,
) -> Result<(), PpoError> {
    let mut start = 0;
    while start < t.len() {
        let round = t[start].round;
        let end = start + t[start..].iter().take_while(|s| s.round == round).count();
        let r = sample_value(&results[round as usize], t[start].seat as usize, Some(winner));
        let mut rewards = vec![0.0; end - start];
        *rewards.last_mut().unwrap() = r as f64;
        let values: Vec<f64> = t[start..end].iter().map(|s| s.value as f64).collect();
        let (adv, ret) = gae(&rewards, &values, cfg.gamma, cfg.lambda)?;
        for (i, s) in t[start..end].iter_mut().enumerate() {
            s.r = r;
            s.advantage = adv[i] as f32;
            s.ret = ret[i] as f32;
        }
        start = end;
    }
    Ok(())
}

/// Owner of the policy network during training; the Q network is frozen.
pub struct PpoLearner {
    pub config: PpoConfig,
    pub net: Mlp<f32>,
    pub optimizer: Adam<f32>,
    pub buffer: ReplayBuffer<PpoSample>,
    pub receptions: u64,
    pub updates: u64,
    rng: ChaCha8Rng,
}

/// Statistics of one update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f32,
    pub value_loss: f32,
    pub entropy: f32,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

impl PpoLearner {
    pub fn new(config: PpoConfig, seed: u64) -> PpoLearner {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::new(&ppo_net_sizes(&config.hidden, config.k), &mut rng);
        PpoLearner::with_net(config, net, seed)
    }

    pub fn with_net(config: PpoConfig, net: Mlp<f32>, seed: u64) -> PpoLearner {
        PpoLearner {
            optimizer: Adam::new(net.params().len(), config.lr),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            config,
            net,
            receptions: 0,
            updates: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37),
        }
    }

    pub fn receive(&mut self, episode: EpisodeData<PpoSample>) -> Result<Option<PpoStats>, PpoError> {
        for t in episode.trajectories {
            self.buffer.extend(t);
        }
        self.receptions += 1;
        if self.receptions.is_multiple_of(self.config.train_freq as u64) {
            return self.train_step().map(Some);
        }
        Ok(None)
    }

    pub fn train_step(&mut self) -> Result<PpoStats, PpoError> {
        let picked = self.buffer.sample(self.config.batch_size, &mut self.rng);
        if picked.is_empty() {
            return Err(PpoError::EmptyBatch);
        }
        let batch = PpoBatch::<f32>::from_samples(&picked, self.config.k, self.config.normalize_advantages);
        let l = ppo_losses(&self.net, &batch, &self.config)?;
        self.optimizer.step(self.net.params_mut(), &l.grads)?;
        self.updates += 1;
        Ok(PpoStats {
            policy_loss: l.policy_loss,
            value_loss: l.value_loss,
            entropy: l.entropy,
            clip_fraction: l.clip_fraction,
            approx_kl: l.approx_kl,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_orders_by_q() {
        assert_eq!(top_k_candidates(&[0.3, 0.9, -0.2], 2).unwrap(), vec![1, 0]);
        assert_eq!(top_k_candidates(&[0.3], 2).unwrap(), vec![0]);
        assert_eq!(top_k_candidates(&[0.5, 0.5, 0.1], 2).unwrap(), vec![0, 1]);
        assert!(top_k_candidates(&[], 2).is_err());
    }

    #[test]
    fn masked_softmax_zeroes_pads() {
        let p = masked_softmax(&[1.0f64, 1.0, 50.0], &[true, true, false]);
        assert_eq!(p, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn gae_base_cases() {
        let (a, r) = gae(&[2.0], &[0.5], 0.99, 0.95).unwrap();
        assert_eq!(a, vec![1.5]);
        assert_eq!(r, vec![2.0]);
        let (a, _) = gae(&[0.0, 3.0], &[1.0, 2.0], 1.0, 1.0).unwrap();
        assert_eq!(a[0], 2.0);
        assert!(gae(&[0.0], &[], 0.9, 0.9).is_err());
    }
}
