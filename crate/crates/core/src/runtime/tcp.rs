//! Multi-process transport: actors connect to the learner over TCP and
//! exchange length-prefixed frames.

use std::io::{BufReader, BufWriter};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use super::actors::{episode_seed, ActorOptions, ActorReport};
use super::bulletin::{ParameterBulletin, Snapshot};
use super::channel::{sample_channel, SampleSender};
use super::learner::{run_learner, LearnerOptions, LearnerReport};
use super::metrics::MetricsWriter;
use super::trainer::{Rollout, Trainer};
use super::wire::{decode_shipment, encode_shipment, read_frame, write_frame, Frame, Shipment, WireError, WireSample};
use super::RuntimeError;
use crate::nn::{decode_checkpoint, encode_checkpoint, NetKind};

/// Reconnect schedule for actors.
#[derive(Debug, Clone, Copy)]
pub struct Retry {
    pub attempts: u32,
    pub first: Duration,
    pub max: Duration,
}

impl Default for Retry {
    fn default() -> Self {
        Retry { attempts: 8, first: Duration::from_millis(100), max: Duration::from_secs(5) }
    }
}

pub fn connect_with_retry(addr: &str, retry: Retry) -> Result<TcpStream, RuntimeError> {
    let mut wait = retry.first;
    let mut last = None;
    for attempt in 0..retry.attempts.max(1) {
        match TcpStream::connect(addr) {
            Ok(s) => {
                s.set_nodelay(true).ok();
                return Ok(s);
            }
            Err(e) => {
                log::warn!("connect {addr} attempt {}: {e}", attempt + 1);
                last = Some(e);
                std::thread::sleep(wait);
                wait = (wait * 2).min(retry.max);
            }
        }
    }
    Err(RuntimeError::Unreachable(format!("{addr}: {}", last.map(|e| e.to_string()).unwrap_or_default())))
}

struct Served {
    kind: NetKind,
    k: usize,
    bulletin: Arc<ParameterBulletin>,
    stop: Arc<AtomicBool>,
    dropped: Arc<AtomicU64>,
}

fn serve_connection<S: WireSample>(stream: TcpStream, tx: SampleSender<S>, srv: &Served) -> Result<(), WireError> {
    let peer = stream.peer_addr().ok();
    let mut r = BufReader::new(stream.try_clone()?);
    let mut w = BufWriter::new(stream);
    while let Some(frame) = read_frame(&mut r)? {
        match frame {
            Frame::Pull { have } => {
                if srv.stop.load(Ordering::Relaxed) {
                    write_frame(&mut w, &Frame::Stop)?;
                    continue;
                }
                let s = srv.bulletin.pull().map_err(|_| WireError::Checksum)?;
                if have == Some(s.version) {
                    write_frame(&mut w, &Frame::Unchanged)?;
                } else {
                    let bytes = encode_checkpoint(&s.net, None, srv.kind, srv.k, s.version, s.version);
                    write_frame(&mut w, &Frame::Params(bytes))?;
                }
            }
            Frame::Samples(bytes) => match decode_shipment::<S>(&bytes) {
                Ok(sh) => {
                    if tx.send(sh).is_err() {
                        write_frame(&mut w, &Frame::Stop)?;
                        return Ok(());
                    }
                }
                Err(e) => {
                    srv.dropped.fetch_add(1, Ordering::Relaxed);
                    log::warn!("dropped shipment from {peer:?}: {e}");
                }
            },
            other => log::warn!("unexpected frame from {peer:?}: {other:?}"),
        }
    }
    Ok(())
}

/// Runs the learner behind `listener` until `opts.max_receptions` is
/// reached; actors connect with [`serve_actors`].
pub fn serve_learner<T: Trainer>(
    listener: TcpListener,
    trainer: &mut T,
    bulletin: Arc<ParameterBulletin>,
    channel_capacity: usize,
    opts: &LearnerOptions,
    metrics: Option<&mut MetricsWriter>,
) -> Result<LearnerReport, RuntimeError> {
    let (tx, rx) = sample_channel::<T::Sample>(channel_capacity);
    let served = Arc::new(Served {
        kind: trainer.kind(),
        k: trainer.k(),
        bulletin: bulletin.clone(),
        stop: Arc::new(AtomicBool::new(false)),
        dropped: Arc::new(AtomicU64::new(0)),
    });
    listener.set_nonblocking(true)?;
    let acceptor = {
        let served = served.clone();
        std::thread::spawn(move || {
            while !served.stop.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        log::info!("actor connected from {peer}");
                        stream.set_nonblocking(false).ok();
                        stream.set_nodelay(true).ok();
                        let tx = tx.clone();
                        let served = served.clone();
                        std::thread::spawn(move || {
                            if let Err(e) = serve_connection(stream, tx, &served) {
                                log::warn!("connection {peer}: {e}");
                            }
                        });
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(20));
                    }
                    Err(e) => log::warn!("accept: {e}"),
                }
            }
        })
    };
    let result = run_learner(trainer, &rx, &bulletin, opts, metrics);
    served.stop.store(true, Ordering::Relaxed);
    drop(rx);
    acceptor.join().expect("acceptor thread panicked");
    let mut report = result?;
    report.dropped += served.dropped.load(Ordering::Relaxed);
    Ok(report)
}

enum Pulled {
    Snapshot(Arc<Snapshot>),
    Stop,
}

fn pull(r: &mut BufReader<TcpStream>, w: &mut BufWriter<TcpStream>, have: Option<&Arc<Snapshot>>) -> Result<Pulled, RuntimeError> {
    write_frame(w, &Frame::Pull { have: have.map(|s| s.version) })?;
    match read_frame(r)? {
        Some(Frame::Params(bytes)) => {
            let ck = decode_checkpoint(&bytes, None)?;
            Ok(Pulled::Snapshot(Arc::new(Snapshot::new(ck.meta.version, ck.net))))
        }
        Some(Frame::Unchanged) => match have {
            Some(s) => Ok(Pulled::Snapshot(s.clone())),
            None => Err(RuntimeError::Protocol("learner sent no parameters".into())),
        },
        Some(Frame::Stop) | None => Ok(Pulled::Stop),
        Some(other) => Err(RuntimeError::Protocol(format!("unexpected reply {other:?}"))),
    }
}

/// One remote actor; returns when the learner says stop or goes away.
pub fn remote_actor<R: Rollout>(addr: &str, id: u32, rollout: &mut R, opts: &ActorOptions, retry: Retry) -> Result<ActorReport, RuntimeError> {
    let mut report = ActorReport::default();
    let stream = connect_with_retry(addr, retry)?;
    let mut r = BufReader::new(stream.try_clone()?);
    let mut w = BufWriter::new(stream);
    let mut snapshot: Option<Arc<Snapshot>> = None;
    let mut e = 0u64;
    while opts.episodes.is_none_or(|n| e < n) {
        if snapshot.is_none() || e.is_multiple_of(opts.pull_period) {
            match pull(&mut r, &mut w, snapshot.as_ref()) {
                Ok(Pulled::Snapshot(s)) => snapshot = Some(s),
                Ok(Pulled::Stop) => break,
                Err(RuntimeError::Wire(err)) => {
                    log::warn!("actor {id}: learner connection lost: {err}");
                    break;
                }
                Err(err) => return Err(err),
            }
        }
        let s = snapshot.as_ref().unwrap();
        let seed = episode_seed(opts.seed, id, e);
        e += 1;
        let data = match rollout.play(seed, &s.net) {
            Ok(d) => d,
            Err(err) => {
                log::warn!("actor {id}: episode {seed} aborted: {err}");
                report.failed += 1;
                continue;
            }
        };
        let bytes = encode_shipment(&Shipment { actor: id, episode: e - 1, version: s.version, data });
        if let Err(err) = write_frame(&mut w, &Frame::Samples(bytes)) {
            log::warn!("actor {id}: learner connection lost: {err}");
            break;
        }
        report.episodes += 1;
    }
    Ok(report)
}

/// Runs `n` remote actors on threads against the learner at `addr`.
pub fn serve_actors<R, F>(addr: &str, n: usize, make: F, opts: &ActorOptions, retry: Retry) -> Result<Vec<ActorReport>, RuntimeError>
where
    R: Rollout,
    F: Fn(u32) -> R + Sync,
{
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n as u32)
            .map(|id| {
                let make = &make;
                scope.spawn(move || remote_actor(addr, id, &mut make(id), opts, retry))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("actor thread panicked")).collect()
    })
}
