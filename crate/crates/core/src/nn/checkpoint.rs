//! Checkpoint files.
//!
//! Layout: the magic bytes `DZCK`, a little-endian u32 format version, a
//! little-endian u32 length followed by that many bytes of JSON metadata,
//! then the network parameters as little-endian f32 in layer order, then
//! the optimizer buffers in the same encoding.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::optim::{restore, OptimState, Optimizer};
use super::{param_count, Mlp};
use crate::features::LAYOUT_VERSION;

pub const MAGIC: &[u8; 4] = b"DZCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("bad metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("file is truncated")]
    Truncated,
    #[error("checksum mismatch")]
    Checksum,
    #[error("checkpoint holds a {found:?} network with sizes {found_sizes:?}, expected {expected:?}")]
    ShapeConflict { expected: NetKind, found: NetKind, found_sizes: Vec<usize> },
    #[error("feature layout version {0} does not match this build")]
    Layout(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    Q,
    Ppo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: NetKind,
    pub sizes: Vec<usize>,
    /// Candidate slots, 0 for a value network.
    pub k: usize,
    pub layout_version: u32,
    pub step: u64,
    /// Parameter version published by the learner.
    pub version: u64,
    pub optimizer: Option<OptimState>,
    pub optimizer_len: usize,
    pub crc32: u32,
}

pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub net: Mlp<f32>,
    pub optimizer: Option<Box<dyn Optimizer<f32>>>,
}

impl std::fmt::Debug for Checkpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Checkpoint").field("meta", &self.meta).finish_non_exhaustive()
    }
}

fn push_f32s(out: &mut Vec<u8>, xs: &[f32]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Serializes a network and optional optimizer into checkpoint bytes.
pub fn encode_checkpoint(
    net: &Mlp<f32>,
    optimizer: Option<&dyn Optimizer<f32>>,
    kind: NetKind,
    k: usize,
    step: u64,
    version: u64,
) -> Vec<u8> {
    let mut body = Vec::with_capacity(net.params().len() * 4);
    push_f32s(&mut body, net.params());
    let mut opt_len = 0;
    if let Some(o) = optimizer {
        for b in o.buffers() {
            opt_len += b.len();
            push_f32s(&mut body, b);
        }
    }
    let meta = CheckpointMeta {
        kind,
        sizes: net.sizes().to_vec(),
        k,
        layout_version: LAYOUT_VERSION,
        step,
        version,
        optimizer: optimizer.map(|o| o.state()),
        optimizer_len: opt_len,
        crc32: crc32fast::hash(&body),
    };
    let json = serde_json::to_vec(&meta).expect("metadata serializes");
    let mut out = Vec::with_capacity(12 + json.len() + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&body);
    out
}

/// Parses checkpoint bytes, checking that the network is of `expected` kind.
pub fn decode_checkpoint(bytes: &[u8], expected: Option<NetKind>) -> Result<Checkpoint, CheckpointError> {
    let mut r = bytes;
    let mut head = [0u8; 4];
    r.read_exact(&mut head).map_err(|_| CheckpointError::Truncated)?;
    if &head != MAGIC {
        return Err(CheckpointError::Magic);
    }
    r.read_exact(&mut head).map_err(|_| CheckpointError::Truncated)?;
    let version = u32::from_le_bytes(head);
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    r.read_exact(&mut head).map_err(|_| CheckpointError::Truncated)?;
    let len = u32::from_le_bytes(head) as usize;
    if r.len() < len {
        return Err(CheckpointError::Truncated);
    }
    let meta: CheckpointMeta = serde_json::from_slice(&r[..len])?;
    let body = &r[len..];
    if let Some(kind) = expected {
        if kind != meta.kind {
            return Err(CheckpointError::ShapeConflict { expected: kind, found: meta.kind, found_sizes: meta.sizes });
        }
    }
    if meta.layout_version != LAYOUT_VERSION {
        return Err(CheckpointError::Layout(meta.layout_version));
    }
    let n = param_count(&meta.sizes);
    if body.len() != 4 * (n + meta.optimizer_len) {
        return Err(CheckpointError::Truncated);
    }
    if crc32fast::hash(body) != meta.crc32 {
        return Err(CheckpointError::Checksum);
    }
    let floats: Vec<f32> = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let net = Mlp::from_params(&meta.sizes, floats[..n].to_vec()).expect("length checked");
    let optimizer = meta.optimizer.as_ref().map(|state| {
        let rest = &floats[n..];
        let buffers = if rest.is_empty() { Vec::new() } else { rest.chunks(n).map(|c| c.to_vec()).collect() };
        restore(state, n, buffers)
    });
    Ok(Checkpoint { meta, net, optimizer })
}

pub fn save_checkpoint(
    path: &Path,
    net: &Mlp<f32>,
    optimizer: Option<&dyn Optimizer<f32>>,
    kind: NetKind,
    k: usize,
    step: u64,
    version: u64,
) -> Result<(), CheckpointError> {
    let bytes = encode_checkpoint(net, optimizer, kind, k, step, version);
    // write then rename so readers never see a partial file
    let tmp = path.with_extension("dzck.tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, expected: Option<NetKind>) -> Result<Checkpoint, CheckpointError> {
    decode_checkpoint(&fs::read(path)?, expected)
}
