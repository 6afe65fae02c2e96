//! Versioned JSON checkpoints. Parameters are stored as 64-bit floats in
//! shortest round-trip form, so write-then-read is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mlp, NetworkError};

pub const CHECKPOINT_FORMAT: &str = "ldssl-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub network: Mlp,
}

impl Checkpoint {
    pub fn new(network: Mlp, seed: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            seed,
            network,
        }
    }
}

pub fn write_checkpoint(path: &Path, network: &Mlp, seed: u64) -> Result<(), NetworkError> {
    let ckpt = Checkpoint::new(network.clone(), seed);
    let text = serde_json::to_string(&ckpt).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, NetworkError> {
    let text = fs::read_to_string(path)?;
    let ckpt: Checkpoint =
        serde_json::from_str(&text).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(NetworkError::Checkpoint(format!("unknown format {:?}", ckpt.format)));
    }
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(NetworkError::Checkpoint(format!("unsupported version {}", ckpt.version)));
    }
    // Re-validate shapes and finiteness.
    let network = Mlp::new(
        ckpt.network
            .layers()
            .iter()
            .map(|l| {
                super::DenseLayer::new(l.weights().clone(), l.biases().clone(), l.activation(), l.l2_penalty())
            })
            .collect::<Result<_, _>>()?,
        ckpt.network.output_normalized(),
    )?;
    Ok(Checkpoint { network, ..ckpt })
}
