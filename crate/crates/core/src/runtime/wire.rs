//! Binary encodings for samples, shipments and TCP frames.
//!
//! A frame is a little-endian u32 length, then a tag byte, then
//! `length - 1` payload bytes.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dmc::{EpisodeData, Sample};
use crate::engine::{RoundResult, SEATS};
use crate::features::{ActionVec, PpoInput, StateVec, ACTION_DIM, STATE_DIM};
use crate::ppo::PpoSample;

/// Largest frame accepted from a peer.
pub const MAX_FRAME: usize = 1 << 30;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("payload ends early")]
    Truncated,
    #[error("trailing bytes after payload")]
    Trailing,
    #[error("bad header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checksum mismatch")]
    Checksum,
    #[error("unknown frame tag {0}")]
    Tag(u8),
    #[error("frame of {0} bytes exceeds limit")]
    TooLarge(usize),
    #[error("invalid sample: {0}")]
    Invalid(&'static str),
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.0.len() < n {
            return Err(WireError::Truncated);
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Ok(a)
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, WireError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32, WireError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i8s<const N: usize>(&mut self) -> Result<[i8; N], WireError> {
        let b = self.take(N)?;
        let mut out = [0i8; N];
        for (o, &x) in out.iter_mut().zip(b) {
            *o = x as i8;
        }
        Ok(out)
    }
}

fn put_i8s(out: &mut Vec<u8>, xs: &[i8]) {
    out.extend(xs.iter().map(|&x| x as u8));
}

fn finite(x: f32, what: &'static str) -> Result<f32, WireError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(WireError::Invalid(what))
    }
}

/// A training sample that can cross a process boundary.
pub trait WireSample: Sized + Send + 'static {
    fn write(&self, out: &mut Vec<u8>);
    fn read(buf: &mut &[u8]) -> Result<Self, WireError>;
    /// Rejects values no actor could have produced.
    fn check(&self) -> Result<(), WireError>;
    fn seat(&self) -> usize;
}

impl WireSample for Sample {
    fn write(&self, out: &mut Vec<u8>) {
        put_i8s(out, &self.state);
        put_i8s(out, &self.action);
        out.extend_from_slice(&self.behavior_q.to_le_bytes());
        out.extend_from_slice(&self.r.to_le_bytes());
        out.push(self.seat);
        out.extend_from_slice(&self.round.to_le_bytes());
    }

    fn read(buf: &mut &[u8]) -> Result<Self, WireError> {
        let mut r = Reader(buf);
        let s = Sample {
            state: r.i8s::<STATE_DIM>()?,
            action: r.i8s::<ACTION_DIM>()?,
            behavior_q: r.f32()?,
            r: r.f32()?,
            seat: r.u8()?,
            round: r.u16()?,
        };
        *buf = r.0;
        Ok(s)
    }

    fn check(&self) -> Result<(), WireError> {
        finite(self.behavior_q, "behavior_q")?;
        finite(self.r, "value")?;
        if self.seat as usize >= SEATS {
            return Err(WireError::Invalid("seat"));
        }
        Ok(())
    }

    fn seat(&self) -> usize {
        self.seat as usize
    }
}

impl WireSample for PpoSample {
    fn write(&self, out: &mut Vec<u8>) {
        let k = self.input.k();
        out.push(k as u8);
        put_i8s(out, &self.input.state);
        for c in &self.input.candidates {
            put_i8s(out, c);
        }
        out.extend(self.input.legal.iter().map(|&l| l as u8));
        out.push(self.slot as u8);
        for x in [self.old_logprob, self.value, self.r, self.advantage, self.ret] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.push(self.seat);
        out.extend_from_slice(&self.round.to_le_bytes());
    }

    fn read(buf: &mut &[u8]) -> Result<Self, WireError> {
        let mut r = Reader(buf);
        let k = r.u8()? as usize;
        let state: StateVec = r.i8s::<STATE_DIM>()?;
        let mut candidates: Vec<ActionVec> = Vec::with_capacity(k);
        for _ in 0..k {
            candidates.push(r.i8s::<ACTION_DIM>()?);
        }
        let legal = r.take(k)?.iter().map(|&b| b != 0).collect();
        let s = PpoSample {
            input: PpoInput { state, candidates, legal },
            slot: r.u8()? as usize,
            old_logprob: r.f32()?,
            value: r.f32()?,
            r: r.f32()?,
            advantage: r.f32()?,
            ret: r.f32()?,
            seat: r.u8()?,
            round: r.u16()?,
        };
        *buf = r.0;
        Ok(s)
    }

    fn check(&self) -> Result<(), WireError> {
        if self.input.k() == 0 || self.slot >= self.input.k() || !self.input.legal[self.slot] {
            return Err(WireError::Invalid("slot"));
        }
        for x in [self.old_logprob, self.value, self.r, self.advantage, self.ret] {
            finite(x, "non-finite field")?;
        }
        if self.old_logprob > 0.0 {
            return Err(WireError::Invalid("old_logprob"));
        }
        if self.seat as usize >= SEATS {
            return Err(WireError::Invalid("seat"));
        }
        Ok(())
    }

    fn seat(&self) -> usize {
        self.seat as usize
    }
}

/// One episode's four trajectories on their way to the learner.
#[derive(Debug, Clone)]
pub struct Shipment<S> {
    pub actor: u32,
    /// Episode counter of the sending actor.
    pub episode: u64,
    /// Parameter version the episode was played with.
    pub version: u64,
    pub data: EpisodeData<S>,
}

impl<S: WireSample> Shipment<S> {
    pub fn trajectories(&self) -> usize {
        self.data.trajectories.len()
    }

    /// Checks every sample and that each trajectory holds only its seat.
    pub fn validate(&self) -> Result<(), WireError> {
        for (seat, t) in self.data.trajectories.iter().enumerate() {
            for s in t {
                s.check()?;
                if s.seat() != seat {
                    return Err(WireError::Invalid("sample in the wrong trajectory"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ShipmentHeader {
    actor: u32,
    episode: u64,
    version: u64,
    winner: usize,
    results: Vec<RoundResult>,
    lengths: [usize; SEATS],
    crc32: u32,
}

/// Layout: u32 header length, JSON header, concatenated samples.
pub fn encode_shipment<S: WireSample>(s: &Shipment<S>) -> Vec<u8> {
    let mut body = Vec::new();
    for t in &s.data.trajectories {
        for x in t {
            x.write(&mut body);
        }
    }
    let header = ShipmentHeader {
        actor: s.actor,
        episode: s.episode,
        version: s.version,
        winner: s.data.winner,
        results: s.data.results.clone(),
        lengths: std::array::from_fn(|i| s.data.trajectories[i].len()),
        crc32: crc32fast::hash(&body),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(4 + json.len() + body.len());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&body);
    out
}

pub fn decode_shipment<S: WireSample>(bytes: &[u8]) -> Result<Shipment<S>, WireError> {
    let mut r = Reader(bytes);
    let n = r.u32()? as usize;
    let header: ShipmentHeader = serde_json::from_slice(r.take(n)?)?;
    let mut body = r.0;
    if crc32fast::hash(body) != header.crc32 {
        return Err(WireError::Checksum);
    }
    let mut trajectories: [Vec<S>; SEATS] = Default::default();
    for (t, &len) in trajectories.iter_mut().zip(&header.lengths) {
        for _ in 0..len {
            t.push(S::read(&mut body)?);
        }
    }
    if !body.is_empty() {
        return Err(WireError::Trailing);
    }
    Ok(Shipment {
        actor: header.actor,
        episode: header.episode,
        version: header.version,
        data: EpisodeData { trajectories, results: header.results, winner: header.winner },
    })
}

/// Messages exchanged between actor processes and the learner.
#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    /// Actor asks for parameters newer than the version it holds.
    Pull { have: Option<u64> },
    /// Checkpoint-encoded network.
    Params(Vec<u8>),
    /// The actor already holds the latest version.
    Unchanged,
    /// Encoded [`Shipment`].
    Samples(Vec<u8>),
    /// Training is over; the actor should exit.
    Stop,
}

impl Frame {
    fn tag(&self) -> u8 {
        match self {
            Frame::Pull { .. } => 1,
            Frame::Params(_) => 2,
            Frame::Unchanged => 3,
            Frame::Samples(_) => 4,
            Frame::Stop => 5,
        }
    }
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<(), WireError> {
    let mut payload = Vec::new();
    match frame {
        Frame::Pull { have } => payload.extend_from_slice(&have.map_or(u64::MAX, |v| v).to_le_bytes()),
        Frame::Params(b) | Frame::Samples(b) => payload.extend_from_slice(b),
        Frame::Unchanged | Frame::Stop => {}
    }
    let len = payload.len() + 1;
    if len > MAX_FRAME {
        return Err(WireError::TooLarge(len));
    }
    w.write_all(&(len as u32).to_le_bytes())?;
    w.write_all(&[frame.tag()])?;
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, WireError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len == 0 {
        return Err(WireError::Truncated);
    }
    if len > MAX_FRAME {
        return Err(WireError::TooLarge(len));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    let payload = buf.split_off(1);
    let frame = match buf[0] {
        1 => {
            let v = Reader(&payload).u64()?;
            Frame::Pull { have: (v != u64::MAX).then_some(v) }
        }
        2 => Frame::Params(payload),
        3 => Frame::Unchanged,
        4 => Frame::Samples(payload),
        5 => Frame::Stop,
        t => return Err(WireError::Tag(t)),
    };
    Ok(Some(frame))
}
