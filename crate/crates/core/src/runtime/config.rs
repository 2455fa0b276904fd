use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dmc::DmcConfig;
use crate::ppo::PpoConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dmc,
    Ppo,
}

/// Everything a training run needs. Loaded from TOML; missing keys take
/// the published values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Actor worker threads.
    pub actors: usize,
    /// Stop after this many received episodes; 0 runs until interrupted.
    pub episodes: u64,
    /// Episodes an actor plays between parameter pulls.
    pub pull_period: u64,
    /// Episodes the actor-to-learner queue holds before actors block.
    pub channel_capacity: usize,
    /// Wall-clock checkpoint interval in seconds.
    pub checkpoint_secs: f64,
    /// Also checkpoint every this many updates; 0 disables.
    pub checkpoint_updates: u64,
    /// Warn when no episode arrives for this long.
    pub stall_secs: f64,
    /// Wall-clock evaluation interval in seconds; 0 disables.
    pub eval_secs: f64,
    pub eval_games: usize,
    /// Agent specs to evaluate against.
    pub eval_opponents: Vec<String>,
    /// Frozen Q network for PPO runs.
    pub dmc_checkpoint: Option<PathBuf>,
    pub dmc: DmcConfig,
    pub ppo: PpoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::published(Algorithm::Dmc)
    }
}

impl RunConfig {
    /// Single-machine settings: a few actors and small networks.
    pub fn desk(algorithm: Algorithm) -> RunConfig {
        RunConfig {
            algorithm,
            seed: 0,
            actors: 4,
            episodes: 0,
            pull_period: 1,
            channel_capacity: 16,
            checkpoint_secs: 600.0,
            checkpoint_updates: 0,
            stall_secs: 60.0,
            eval_secs: 1800.0,
            eval_games: 200,
            eval_opponents: vec!["random".into(), "greedy".into()],
            dmc_checkpoint: None,
            dmc: DmcConfig::desk(),
            ppo: PpoConfig::desk(),
        }
    }

    /// The published hyperparameters, including actor counts.
    pub fn published(algorithm: Algorithm) -> RunConfig {
        let dmc = DmcConfig { q_clip_lambda: Some(0.65), ..DmcConfig::default() };
        RunConfig {
            actors: match algorithm {
                Algorithm::Dmc => 80,
                Algorithm::Ppo => 40,
            },
            checkpoint_secs: 24.0 * 3600.0,
            eval_secs: 24.0 * 3600.0,
            eval_games: 1000,
            dmc,
            ppo: PpoConfig::default(),
            ..RunConfig::desk(algorithm)
        }
    }

    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        let c: RunConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let c = RunConfig::read(path)?;
        c.validate()?;
        Ok(c)
    }

    /// Parses without validating, for callers that override keys first.
    pub fn read(path: &Path) -> Result<RunConfig, ConfigError> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Episodes received between updates for the active algorithm.
    pub fn train_freq(&self) -> usize {
        match self.algorithm {
            Algorithm::Dmc => self.dmc.train_freq,
            Algorithm::Ppo => self.ppo.train_freq,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.actors == 0 {
            return bad("actors must be positive");
        }
        if self.pull_period == 0 || self.channel_capacity == 0 {
            return bad("pull_period and channel_capacity must be positive");
        }
        let d = &self.dmc;
        if !(0.0..=1.0).contains(&d.epsilon) {
            return bad("dmc.epsilon must lie in [0, 1]");
        }
        if d.batch_size == 0 || d.train_freq == 0 || d.batch_size > d.buffer_capacity {
            return bad("dmc needs 0 < batch_size <= buffer_capacity and train_freq > 0");
        }
        if d.lr <= 0.0 || d.hidden.is_empty() {
            return bad("dmc.lr must be positive and hidden non-empty");
        }
        let p = &self.ppo;
        if !(p.gamma > 0.0 && p.gamma <= 1.0) || !(0.0..=1.0).contains(&p.lambda) {
            return bad("ppo needs 0 < gamma <= 1 and 0 <= lambda <= 1");
        }
        if p.clip <= 0.0 || p.k == 0 || p.lr <= 0.0 {
            return bad("ppo needs clip > 0, k >= 1, lr > 0");
        }
        if p.batch_size == 0 || p.train_freq == 0 || p.batch_size > p.buffer_capacity || p.hidden.is_empty() {
            return bad("ppo needs 0 < batch_size <= buffer_capacity, train_freq > 0, hidden non-empty");
        }
        if self.algorithm == Algorithm::Ppo && self.dmc_checkpoint.is_none() {
            return bad("ppo runs need dmc_checkpoint");
        }
        Ok(())
    }
}
