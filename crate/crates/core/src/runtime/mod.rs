//! Actor-learner orchestration: actors play self-play episodes with the
//! latest published parameters and ship them to a single learner, which
//! trains, publishes new versions and writes checkpoints.

mod actors;
mod bulletin;
mod channel;
mod config;
mod eval;
mod learner;
mod metrics;
mod tcp;
mod trainer;
pub mod wire;

use std::net::TcpListener;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

pub use actors::{episode_seed, run_actor, run_actors, ActorOptions, ActorReport};
pub use bulletin::{BulletinError, ParameterBulletin, Snapshot};
pub use channel::{sample_channel, Closed, Recv, SampleReceiver, SampleSender};
pub use config::{Algorithm, ConfigError, RunConfig};
pub use eval::{checkpoint_agent, evaluate_checkpoint, evaluate_periodically, EvalPoint, EvalSetup};
pub use learner::{checkpoint_path, list_checkpoints, resume, run_learner, LearnerOptions, LearnerReport};
pub use metrics::{read_metrics, MetricRecord, MetricsWriter};
pub use tcp::{connect_with_retry, remote_actor, serve_actors, serve_learner, Retry};
pub use trainer::{DmcRollout, PpoRollout, Rollout, Trainer, UpdateStats};
pub use wire::{Shipment, WireError, WireSample};

use crate::arena::{AgentSpec, ArenaError};
use crate::dmc::{DmcError, DmcLearner};
use crate::nn::{load_checkpoint, CheckpointError, Mlp, NetKind};
use crate::ppo::{PpoError, PpoLearner};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Bulletin(#[from] BulletinError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dmc(#[from] DmcError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Arena(#[from] ArenaError),
    #[error("cannot resume: {0}")]
    Resume(String),
    #[error("learner unreachable: {0}")]
    Unreachable(String),
    #[error("protocol: {0}")]
    Protocol(String),
}

/// Actor side of an in-process run.
#[derive(Debug, Clone)]
pub struct InProcess {
    pub actors: usize,
    pub channel_capacity: usize,
    pub actor: ActorOptions,
}

/// Runs `setup.actors` actor threads and the learner on the calling
/// thread until the learner stops.
pub fn train_in_process<T, R, F>(
    trainer: &mut T,
    bulletin: &ParameterBulletin,
    make: F,
    setup: &InProcess,
    opts: &LearnerOptions,
    metrics: Option<&mut MetricsWriter>,
) -> Result<(LearnerReport, Vec<ActorReport>), RuntimeError>
where
    T: Trainer,
    R: Rollout<Sample = T::Sample>,
    F: Fn(u32) -> R + Sync + Send,
{
    let (tx, rx) = sample_channel(setup.channel_capacity);
    let stop = AtomicBool::new(false);
    std::thread::scope(|scope| {
        let actors = scope.spawn(|| run_actors(setup.actors, make, bulletin, tx, &setup.actor, &stop));
        let report = run_learner(trainer, &rx, bulletin, opts, metrics);
        stop.store(true, Ordering::Relaxed);
        drop(rx);
        let actor_reports = actors.join().expect("actor pool panicked")?;
        Ok((report?, actor_reports))
    })
}

fn learner_options(cfg: &RunConfig, out_dir: &Path, dmc: Option<&Arc<Mlp<f32>>>) -> Result<LearnerOptions, RuntimeError> {
    let eval = if cfg.eval_secs > 0.0 && cfg.eval_games > 0 && !cfg.eval_opponents.is_empty() {
        let opponents = cfg
            .eval_opponents
            .iter()
            .map(|s| AgentSpec::from_str(s).and_then(|a| a.load()))
            .collect::<Result<Vec<_>, _>>()?;
        let setup = EvalSetup { opponents, games: cfg.eval_games as u64, seed: cfg.seed, dmc: dmc.cloned() };
        Some((Duration::from_secs_f64(cfg.eval_secs), setup))
    } else {
        None
    };
    Ok(LearnerOptions {
        out_dir: Some(out_dir.to_path_buf()),
        checkpoint_every: (cfg.checkpoint_secs > 0.0).then(|| Duration::from_secs_f64(cfg.checkpoint_secs)),
        checkpoint_updates: (cfg.checkpoint_updates > 0).then_some(cfg.checkpoint_updates),
        stall_after: Duration::from_secs_f64(cfg.stall_secs.max(1.0)),
        max_receptions: (cfg.episodes > 0).then_some(cfg.episodes),
        eval,
    })
}

fn load_dmc(cfg: &RunConfig) -> Result<Arc<Mlp<f32>>, RuntimeError> {
    let path = cfg.dmc_checkpoint.as_ref().ok_or_else(|| ConfigError::Invalid("ppo runs need dmc_checkpoint".into()))?;
    Ok(Arc::new(load_checkpoint(path, Some(NetKind::Q))?.net))
}

fn actor_options(cfg: &RunConfig, per_actor: Option<u64>) -> ActorOptions {
    ActorOptions { seed: cfg.seed, pull_period: cfg.pull_period, episodes: per_actor }
}

/// The two trainers a config can describe.
pub enum AnyTrainer {
    Dmc(DmcLearner),
    Ppo(PpoLearner),
}

/// Builds the learner for `cfg`, resuming from the newest checkpoint in
/// `out_dir` if there is one. Returns it with the bulletin to publish to.
pub fn prepare_trainer(cfg: &RunConfig, out_dir: &Path) -> Result<(AnyTrainer, Arc<ParameterBulletin>), RuntimeError> {
    std::fs::create_dir_all(out_dir)?;
    Ok(match cfg.algorithm {
        Algorithm::Dmc => {
            let mut t = DmcLearner::new(cfg.dmc.clone(), cfg.seed);
            let v = resume(&mut t, out_dir)?.unwrap_or(0);
            let b = Arc::new(ParameterBulletin::new(v, t.net.clone()));
            (AnyTrainer::Dmc(t), b)
        }
        Algorithm::Ppo => {
            let mut t = PpoLearner::new(cfg.ppo.clone(), cfg.seed);
            let v = resume(&mut t, out_dir)?.unwrap_or(0);
            let b = Arc::new(ParameterBulletin::new(v, t.net.clone()));
            (AnyTrainer::Ppo(t), b)
        }
    })
}

/// Single-process training driven by a config; checkpoints and
/// `metrics.jsonl` go to `out_dir`.
pub fn train(cfg: &RunConfig, out_dir: &Path) -> Result<LearnerReport, RuntimeError> {
    cfg.validate()?;
    let (trainer, bulletin) = prepare_trainer(cfg, out_dir)?;
    let mut metrics = MetricsWriter::append(&out_dir.join("metrics.jsonl"))?;
    let setup = InProcess { actors: cfg.actors, channel_capacity: cfg.channel_capacity, actor: actor_options(cfg, None) };
    let report = match trainer {
        AnyTrainer::Dmc(mut t) => {
            let opts = learner_options(cfg, out_dir, None)?;
            let eps = cfg.dmc.epsilon;
            let seed = cfg.seed;
            let make = |id: u32| DmcRollout::new(eps, episode_seed(seed, id, u64::MAX));
            train_in_process(&mut t, &bulletin, make, &setup, &opts, Some(&mut metrics))?.0
        }
        AnyTrainer::Ppo(mut t) => {
            let dmc = load_dmc(cfg)?;
            let opts = learner_options(cfg, out_dir, Some(&dmc))?;
            let (pc, seed) = (cfg.ppo.clone(), cfg.seed);
            let make = |id: u32| PpoRollout::new(dmc.clone(), pc.clone(), episode_seed(seed, id, u64::MAX));
            train_in_process(&mut t, &bulletin, make, &setup, &opts, Some(&mut metrics))?.0
        }
    };
    Ok(report)
}

/// Learner process for a multi-process run.
pub fn run_learner_server(cfg: &RunConfig, out_dir: &Path, addr: &str) -> Result<LearnerReport, RuntimeError> {
    cfg.validate()?;
    let (trainer, bulletin) = prepare_trainer(cfg, out_dir)?;
    let mut metrics = MetricsWriter::append(&out_dir.join("metrics.jsonl"))?;
    let listener = TcpListener::bind(addr)?;
    log::info!("learner listening on {}", listener.local_addr()?);
    match trainer {
        AnyTrainer::Dmc(mut t) => {
            let opts = learner_options(cfg, out_dir, None)?;
            serve_learner(listener, &mut t, bulletin, cfg.channel_capacity, &opts, Some(&mut metrics))
        }
        AnyTrainer::Ppo(mut t) => {
            let dmc = load_dmc(cfg)?;
            let opts = learner_options(cfg, out_dir, Some(&dmc))?;
            serve_learner(listener, &mut t, bulletin, cfg.channel_capacity, &opts, Some(&mut metrics))
        }
    }
}

/// Actor process for a multi-process run. `episodes` is per actor.
pub fn run_actor_client(cfg: &RunConfig, addr: &str, n: usize, episodes: Option<u64>) -> Result<Vec<ActorReport>, RuntimeError> {
    cfg.validate()?;
    let opts = actor_options(cfg, episodes);
    let seed = cfg.seed;
    match cfg.algorithm {
        Algorithm::Dmc => {
            let eps = cfg.dmc.epsilon;
            serve_actors(addr, n, |id| DmcRollout::new(eps, episode_seed(seed, id, u64::MAX)), &opts, Retry::default())
        }
        Algorithm::Ppo => {
            let dmc = load_dmc(cfg)?;
            let pc = cfg.ppo.clone();
            serve_actors(addr, n, |id| PpoRollout::new(dmc.clone(), pc.clone(), episode_seed(seed, id, u64::MAX)), &opts, Retry::default())
        }
    }
}
