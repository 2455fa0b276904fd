use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use super::bulletin::{ParameterBulletin, Snapshot};
use super::channel::SampleSender;
use super::trainer::Rollout;
use super::wire::Shipment;
use super::RuntimeError;
use crate::arena::mix_seed;

/// Deal seed of an actor's episode.
pub fn episode_seed(base: u64, actor: u32, episode: u64) -> u64 {
    mix_seed(mix_seed(base, actor as u64), episode)
}

#[derive(Debug, Clone)]
pub struct ActorOptions {
    pub seed: u64,
    /// Episodes between parameter pulls.
    pub pull_period: u64,
    /// Episodes per actor; `None` runs until stopped.
    pub episodes: Option<u64>,
}

/// Episodes shipped by one actor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ActorReport {
    pub episodes: u64,
    pub failed: u64,
}

/// One actor loop: pull, play, ship. Returns when the episode budget is
/// spent, `stop` is set, or the learner hangs up.
pub fn run_actor<R: Rollout>(
    id: u32,
    rollout: &mut R,
    bulletin: &ParameterBulletin,
    tx: &SampleSender<R::Sample>,
    opts: &ActorOptions,
    stop: &AtomicBool,
) -> Result<ActorReport, RuntimeError> {
    let mut report = ActorReport::default();
    let mut snapshot: Option<Arc<Snapshot>> = None;
    let mut e = 0u64;
    while opts.episodes.is_none_or(|n| e < n) && !stop.load(Ordering::Relaxed) {
        if snapshot.is_none() || e.is_multiple_of(opts.pull_period) {
            snapshot = Some(bulletin.pull()?);
        }
        let s = snapshot.as_ref().unwrap();
        let seed = episode_seed(opts.seed, id, e);
        e += 1;
        let data = match rollout.play(seed, &s.net) {
            Ok(d) => d,
            Err(err) => {
                // a faulted episode ships nothing
                log::warn!("actor {id}: episode {seed} aborted: {err}");
                report.failed += 1;
                continue;
            }
        };
        if tx.send(Shipment { actor: id, episode: e - 1, version: s.version, data }).is_err() {
            break;
        }
        report.episodes += 1;
    }
    Ok(report)
}

/// Runs `n` actors on their own threads until each finishes.
pub fn run_actors<R, F>(
    n: usize,
    make: F,
    bulletin: &ParameterBulletin,
    tx: SampleSender<R::Sample>,
    opts: &ActorOptions,
    stop: &AtomicBool,
) -> Result<Vec<ActorReport>, RuntimeError>
where
    R: Rollout,
    F: Fn(u32) -> R + Sync,
{
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n as u32)
            .map(|id| {
                let tx = tx.clone();
                let make = &make;
                scope.spawn(move || {
                    let mut r = make(id);
                    run_actor(id, &mut r, bulletin, &tx, opts, stop)
                })
            })
            .collect();
        drop(tx);
        handles.into_iter().map(|h| h.join().expect("actor thread panicked")).collect()
    })
}
