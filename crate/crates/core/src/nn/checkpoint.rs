//! JSON checkpoint container for a [`Network`] plus caller-defined metadata.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so
//! weights survive a save/load cycle bit for bit.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};
use crate::util::{read_json, write_json_atomic};

pub const CHECKPOINT_FORMAT: &str = "hri-anomaly-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<E> {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub network: Network,
    pub extra: E,
}

impl<E> Checkpoint<E> {
    pub fn new(network: Network, seed: u64, extra: E) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            seed,
            network,
            extra,
        }
    }
}

pub fn save_checkpoint<E: Serialize>(path: &Path, checkpoint: &Checkpoint<E>) -> Result<()> {
    write_json_atomic(path, checkpoint)
}

pub fn load_checkpoint<E: DeserializeOwned>(path: &Path) -> Result<Checkpoint<E>> {
    let ck: Checkpoint<E> = read_json(path)?;
    if ck.format != CHECKPOINT_FORMAT {
        return Err(Error::validation(format!(
            "{} is not a checkpoint (format tag {:?})",
            path.display(),
            ck.format
        )));
    }
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::validation(format!(
            "unsupported checkpoint version {}",
            ck.version
        )));
    }
    // re-run structural validation on the deserialized chain
    let network = Network::new(ck.network.stages().to_vec())?;
    for stage in network.stages() {
        if let super::network::Stage::Block(b) = stage {
            b.norm.validate()?;
            if b.norm.features() != b.linear.outputs() {
                return Err(Error::shape("checkpoint block has inconsistent widths"));
            }
        }
    }
    Ok(Checkpoint { network, ..ck })
}
