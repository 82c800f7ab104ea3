//! Checkpoint format: `MAYA`, u32 version, u32 descriptor length, the UTF-8
//! JSON descriptor (architecture + metadata), then every parameter block as
//! little-endian f32 in layer order. Integers are little-endian.

use serde::{Deserialize, Serialize};

use super::network::{Architecture, Network};
use super::NnError;

pub const MAGIC: &[u8; 4] = b"MAYA";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    #[serde(default)]
    pub manifest_hash: Option<String>,
    #[serde(default)]
    pub epochs: usize,
    #[serde(default)]
    pub labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Descriptor {
    architecture: Architecture,
    meta: CheckpointMeta,
}

pub fn encode(net: &Network, meta: &CheckpointMeta) -> Vec<u8> {
    let desc = serde_json::to_vec(&Descriptor {
        architecture: net.architecture().clone(),
        meta: meta.clone(),
    })
    .expect("descriptor serializes");
    let mut out = Vec::with_capacity(12 + desc.len() + net.param_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    out.extend_from_slice(&desc);
    for block in net.blocks() {
        for v in block {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<(Network, CheckpointMeta), NnError> {
    let bad = |m: &str| NnError::Checkpoint(m.to_string());
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("missing MAYA magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + len).ok_or_else(|| bad("truncated descriptor"))?;
    let desc: Descriptor = serde_json::from_slice(body)
        .map_err(|e| NnError::Checkpoint(format!("descriptor: {e}")))?;
    let mut net = Network::build_uninit(desc.architecture)?;
    let mut rest = &bytes[12 + len..];
    if rest.len() != net.param_count() * 4 {
        return Err(NnError::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            net.param_count() * 4,
            rest.len()
        )));
    }
    for block in net.blocks_mut() {
        let (head, tail) = rest.split_at(block.len() * 4);
        for (v, c) in block.iter_mut().zip(head.chunks_exact(4)) {
            *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
        }
        rest = tail;
    }
    Ok((net, desc.meta))
}

pub fn save(path: &std::path::Path, net: &Network, meta: &CheckpointMeta) -> Result<(), NnError> {
    std::fs::write(path, encode(net, meta)).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load(path: &std::path::Path) -> Result<(Network, CheckpointMeta), NnError> {
    let bytes = std::fs::read(path).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
    decode(&bytes)
}
