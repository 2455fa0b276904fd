use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::nn::Mlp;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BulletinError {
    #[error("snapshot {version} failed its checksum")]
    Torn { version: u64 },
    #[error("version {new} does not follow {current}")]
    Stale { current: u64, new: u64 },
}

/// An immutable copy of the learner's parameters.
#[derive(Debug)]
pub struct Snapshot {
    pub version: u64,
    pub net: Mlp<f32>,
    pub crc32: u32,
}

fn params_crc(net: &Mlp<f32>) -> u32 {
    let mut h = crc32fast::Hasher::new();
    for x in net.params() {
        h.update(&x.to_le_bytes());
    }
    h.finalize()
}

impl Snapshot {
    pub fn new(version: u64, net: Mlp<f32>) -> Snapshot {
        let crc32 = params_crc(&net);
        Snapshot { version, net, crc32 }
    }

    pub fn verify(&self) -> Result<(), BulletinError> {
        if params_crc(&self.net) == self.crc32 {
            Ok(())
        } else {
            Err(BulletinError::Torn { version: self.version })
        }
    }
}

/// Latest published parameters. Readers get an `Arc` to a whole snapshot,
/// so a pull never mixes two versions.
#[derive(Debug)]
pub struct ParameterBulletin {
    latest: RwLock<Arc<Snapshot>>,
}

impl ParameterBulletin {
    pub fn new(version: u64, net: Mlp<f32>) -> ParameterBulletin {
        ParameterBulletin { latest: RwLock::new(Arc::new(Snapshot::new(version, net))) }
    }

    pub fn version(&self) -> u64 {
        self.latest.read().unwrap().version
    }

    /// Publishes `net` as the next version and returns that version.
    pub fn publish(&self, net: &Mlp<f32>) -> u64 {
        let mut g = self.latest.write().unwrap();
        let version = g.version + 1;
        *g = Arc::new(Snapshot::new(version, net.clone()));
        version
    }

    /// Publishes with an explicit version, which must be larger than the
    /// current one.
    pub fn publish_as(&self, version: u64, net: &Mlp<f32>) -> Result<(), BulletinError> {
        let mut g = self.latest.write().unwrap();
        if version <= g.version {
            return Err(BulletinError::Stale { current: g.version, new: version });
        }
        *g = Arc::new(Snapshot::new(version, net.clone()));
        Ok(())
    }

    /// Latest snapshot, checksum verified.
    pub fn pull(&self) -> Result<Arc<Snapshot>, BulletinError> {
        let s = self.latest.read().unwrap().clone();
        s.verify()?;
        Ok(s)
    }
}
