//! Binary parameter snapshots.
//!
//! Layout (little-endian):
//!
//! | bytes | content                 |
//! |-------|-------------------------|
//! | 4     | magic `TTNW`            |
//! | 4     | format version (u32, 1) |
//! | 4     | depth `D` (u32)         |
//! | 4     | width `W` (u32)         |
//! | 8     | parameter count (u64)   |
//! | 8·n   | parameters (f64)        |
//!
//! A JSON sidecar with the same stem describes shape, seed and epoch.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Network, NetworkShape};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TTNW";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub depth: usize,
    pub width: usize,
    pub n_params: usize,
    pub seed: u64,
    pub epoch: usize,
    pub layout: String,
}

impl SnapshotMeta {
    pub fn new(shape: NetworkShape, seed: u64, epoch: usize) -> Self {
        Self {
            depth: shape.depth,
            width: shape.width,
            n_params: shape.n_params(),
            seed,
            epoch,
            layout: "per layer: weights row-major (out x in), then biases; f64 little-endian"
                .to_string(),
        }
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_snapshot(path: &Path, net: &Network<f64>, meta: &SnapshotMeta) -> Result<()> {
    let shape = net.shape();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * net.params().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(shape.depth as u32).to_le_bytes());
    buf.extend_from_slice(&(shape.width as u32).to_le_bytes());
    buf.extend_from_slice(&(net.params().len() as u64).to_le_bytes());
    for p in net.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    fs::write(path, buf)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

/// Read a snapshot; the sidecar is optional but must agree with the header
/// when present.
pub fn read_snapshot(path: &Path) -> Result<(Network<f64>, Option<SnapshotMeta>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format(format!(
            "{} is not a parameter snapshot",
            path.display()
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported snapshot version {version}"
        )));
    }
    let shape = NetworkShape::new(u32_at(8) as usize, u32_at(12) as usize)?;
    let n = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    if n != shape.n_params() || bytes.len() != HEADER_LEN + 8 * n {
        return Err(Error::Format(format!(
            "header declares {n} parameters for {shape}, file holds {} bytes",
            bytes.len()
        )));
    }
    let params = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let net = Network::unflatten(shape, params)?;

    let side = sidecar_path(path);
    let meta = if side.exists() {
        let meta: SnapshotMeta = serde_json::from_str(&fs::read_to_string(side)?)?;
        if meta.depth != shape.depth || meta.width != shape.width || meta.n_params != n {
            return Err(Error::Format("sidecar disagrees with binary header".into()));
        }
        Some(meta)
    } else {
        None
    };
    Ok((net, meta))
}
