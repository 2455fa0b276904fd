use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::bulletin::ParameterBulletin;
use super::channel::{Recv, SampleReceiver};
use super::eval::{evaluate_checkpoint, EvalSetup};
use super::metrics::{MetricRecord, MetricsWriter};
use super::trainer::Trainer;
use super::RuntimeError;
use crate::nn::{load_checkpoint, save_checkpoint};

/// Checkpoint file for an update count.
pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("ckpt_{step}.dzck"))
}

/// `(step, path)` of every checkpoint in `dir`, by step.
pub fn list_checkpoints(dir: &Path) -> std::io::Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir)? {
        let p = e?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(step) = name.strip_prefix("ckpt_").and_then(|s| s.strip_suffix(".dzck")) {
            if let Ok(step) = step.parse() {
                out.push((step, p));
            }
        }
    }
    out.sort();
    Ok(out)
}

pub struct LearnerOptions {
    /// Checkpoint directory; `None` keeps everything in memory.
    pub out_dir: Option<PathBuf>,
    pub checkpoint_every: Option<Duration>,
    /// Also checkpoint every this many updates.
    pub checkpoint_updates: Option<u64>,
    pub stall_after: Duration,
    /// Stop after this many receptions in this run.
    pub max_receptions: Option<u64>,
    pub eval: Option<(Duration, EvalSetup)>,
}

impl Default for LearnerOptions {
    fn default() -> Self {
        LearnerOptions {
            out_dir: None,
            checkpoint_every: None,
            checkpoint_updates: None,
            stall_after: Duration::from_secs(60),
            max_receptions: None,
            eval: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearnerReport {
    pub receptions: u64,
    pub trajectories: u64,
    pub samples: u64,
    pub updates: u64,
    pub version: u64,
    pub dropped: u64,
    pub stalls: u64,
    pub checkpoints: Vec<PathBuf>,
    /// Parameter version of each accepted episode, in arrival order.
    pub episode_versions: Vec<u64>,
}

/// Latest checkpoint in `dir` loaded into `trainer`; returns its version.
pub fn resume<T: Trainer>(trainer: &mut T, dir: &Path) -> Result<Option<u64>, RuntimeError> {
    let Some((_, path)) = list_checkpoints(dir)?.pop() else { return Ok(None) };
    let ck = load_checkpoint(&path, Some(trainer.kind()))?;
    let version = ck.meta.version;
    trainer.restore(ck)?;
    log::info!("resumed from {} at update {}", path.display(), trainer.updates());
    Ok(Some(version))
}

fn write_checkpoint<T: Trainer>(trainer: &T, dir: &Path, version: u64) -> Result<PathBuf, RuntimeError> {
    let path = checkpoint_path(dir, trainer.updates());
    save_checkpoint(&path, trainer.net(), Some(trainer.optimizer()), trainer.kind(), trainer.k(), trainer.updates(), version)?;
    Ok(path)
}

/// Consumes episodes until the channel closes or `max_receptions` is
/// reached. Every update publishes a new parameter version.
pub fn run_learner<T: Trainer>(
    trainer: &mut T,
    rx: &SampleReceiver<T::Sample>,
    bulletin: &ParameterBulletin,
    opts: &LearnerOptions,
    mut metrics: Option<&mut MetricsWriter>,
) -> Result<LearnerReport, RuntimeError> {
    let mut report = LearnerReport { version: bulletin.version(), ..Default::default() };
    let start = Instant::now();
    let mut last_ckpt = Instant::now();
    let mut last_eval = Instant::now();
    let mut last_arrival = Instant::now();
    let log_line = |m: &mut Option<&mut MetricsWriter>, r: MetricRecord| {
        if let Some(w) = m.as_deref_mut() {
            if let Err(e) = w.write(&r) {
                log::warn!("metrics write failed: {e}");
            }
        }
    };
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir)?;
    }

    while opts.max_receptions.is_none_or(|m| report.receptions < m) {
        let shipment = match rx.recv_timeout(Duration::from_millis(200)) {
            Recv::Shipment(s) => s,
            Recv::Closed => break,
            Recv::Timeout => {
                let idle = last_arrival.elapsed();
                if idle >= opts.stall_after {
                    report.stalls += 1;
                    log::warn!("learner stalled: no episode for {:.0}s", idle.as_secs_f64());
                    log_line(&mut metrics, MetricRecord::Stall { idle_secs: idle.as_secs_f64() });
                    last_arrival = Instant::now();
                }
                continue;
            }
        };
        last_arrival = Instant::now();
        let reason = match shipment.validate() {
            Err(e) => Some(e.to_string()),
            Ok(()) if shipment.version > report.version => Some(format!("version {} from the future", shipment.version)),
            Ok(()) => None,
        };
        if let Some(reason) = reason {
            report.dropped += 1;
            log::warn!("dropped episode from actor {}: {reason}", shipment.actor);
            log_line(&mut metrics, MetricRecord::Dropped { total: report.dropped, reason });
            continue;
        }
        report.receptions += 1;
        report.trajectories += shipment.trajectories() as u64;
        report.samples += shipment.data.sample_count() as u64;
        report.episode_versions.push(shipment.version);

        let Some(stats) = trainer.receive(shipment.data)? else { continue };
        report.updates += 1;
        report.version = bulletin.publish(trainer.net());
        let elapsed = start.elapsed().as_secs_f64();
        log_line(
            &mut metrics,
            MetricRecord::Update {
                step: trainer.updates(),
                version: report.version,
                receptions: trainer.receptions(),
                elapsed_secs: elapsed,
                samples_per_sec: report.samples as f64 / elapsed.max(1e-9),
                buffer_fill: trainer.buffer_len() as f64 / trainer.buffer_capacity() as f64,
                stats,
            },
        );

        let Some(dir) = &opts.out_dir else { continue };
        let by_time = opts.checkpoint_every.is_some_and(|d| last_ckpt.elapsed() >= d);
        let by_count = opts.checkpoint_updates.is_some_and(|n| n > 0 && trainer.updates().is_multiple_of(n));
        if by_time || by_count {
            let path = write_checkpoint(trainer, dir, report.version)?;
            log_line(&mut metrics, MetricRecord::Checkpoint { step: trainer.updates(), path: path.clone() });
            report.checkpoints.push(path.clone());
            last_ckpt = Instant::now();
            if let Some((every, setup)) = &opts.eval {
                if last_eval.elapsed() >= *every {
                    for r in evaluate_checkpoint(&path, setup)? {
                        log_line(&mut metrics, r);
                    }
                    last_eval = Instant::now();
                }
            }
        }
    }

    if let Some(dir) = &opts.out_dir {
        let last = checkpoint_path(dir, trainer.updates());
        if report.checkpoints.last() != Some(&last) {
            write_checkpoint(trainer, dir, report.version)?;
            log_line(&mut metrics, MetricRecord::Checkpoint { step: trainer.updates(), path: last.clone() });
            report.checkpoints.push(last);
        }
    }
    Ok(report)
}
