//! Versioned binary checkpoints.
//!
//! Layout: `b"RBSC"`, `u32` version, `u64` header length, UTF-8 JSON header,
//! then every tensor as little-endian `f64` in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Network;
use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::ops::RunningStats;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"RBSC";
pub const VERSION: u32 = 1;
const PREFIX: usize = 4 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorRole {
    Param,
    Buffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub role: TensorRole,
    pub layer: usize,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the payload section.
    pub offset: u64,
    /// Number of `f64` values.
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub spec: NetworkSpec,
    pub dtype: String,
    pub tensors: Vec<TensorEntry>,
}

impl Header {
    /// Number of trainable values recorded in the manifest.
    pub fn param_values(&self) -> u64 {
        self.tensors
            .iter()
            .filter(|t| t.role == TensorRole::Param)
            .map(|t| t.len)
            .sum()
    }
}

fn manifest(net: &Network) -> Vec<(TensorEntry, &[f64])> {
    let mut out: Vec<(TensorEntry, &[f64])> = Vec::new();
    let mut offset = 0u64;
    let mut add = |out: &mut Vec<_>, name: String, role, layer, shape: Vec<usize>, data| {
        let len = shape.iter().product::<usize>() as u64;
        out.push((TensorEntry { name, role, layer, shape, offset, len }, data));
        offset += len * 8;
    };
    for (i, (layer, ps)) in net.spec().layers.iter().zip(net.params()).enumerate() {
        for (name, t) in layer.param_names().iter().zip(ps) {
            let shape = t.shape().to_vec();
            add(&mut out, format!("layer{i}.{name}"), TensorRole::Param, i, shape, t.data());
        }
    }
    for (i, stats) in net.running_stats().iter().enumerate() {
        if let Some(s) = stats {
            for (name, v) in [("running_mean", &s.mean), ("running_var", &s.var)] {
                let shape = vec![v.len()];
                add(&mut out, format!("layer{i}.{name}"), TensorRole::Buffer, i, shape, v.as_slice());
            }
        }
    }
    out
}

pub fn encode(net: &Network) -> Result<Vec<u8>> {
    let entries = manifest(net);
    let header = Header {
        spec: net.spec().clone(),
        dtype: "f64".into(),
        tensors: entries.iter().map(|(e, _)| e.clone()).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let payload: usize = entries.iter().map(|(_, d)| d.len() * 8).sum();
    let mut buf = Vec::with_capacity(PREFIX + json.len() + payload);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, data) in &entries {
        for v in *data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

/// Parses only the prefix and JSON header.
pub fn decode_header(bytes: &[u8]) -> Result<(Header, usize)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::CheckpointVersion("missing RBSC magic bytes".into()));
    }
    if bytes.len() < PREFIX {
        return Err(Error::CheckpointTruncated(format!(
            "{} bytes is shorter than the {PREFIX}-byte prefix",
            bytes.len()
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::CheckpointVersion(format!(
            "checkpoint version {version}, this build reads version {VERSION}"
        )));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = PREFIX
        .checked_add(hlen)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| {
            Error::CheckpointTruncated(format!("header of {hlen} bytes runs past end of file"))
        })?;
    let header: Header = serde_json::from_slice(&bytes[PREFIX..body])
        .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    if header.dtype != "f64" {
        return Err(Error::Format(format!("unsupported dtype `{}`", header.dtype)));
    }
    Ok((header, body))
}

pub fn decode(bytes: &[u8]) -> Result<Network> {
    let (header, body) = decode_header(bytes)?;
    let payload = &bytes[body..];
    let layers = header.spec.layers.len();
    let mut params: Vec<Vec<Tensor>> = vec![Vec::new(); layers];
    let mut running: Vec<Option<RunningStats>> = vec![None; layers];
    for e in &header.tensors {
        if e.layer >= layers {
            return Err(Error::CheckpointShape(format!(
                "tensor `{}` refers to layer {} of {layers}",
                e.name, e.layer
            )));
        }
        if e.shape.iter().product::<usize>() as u64 != e.len {
            return Err(Error::CheckpointShape(format!(
                "tensor `{}` has shape {:?} but length {}",
                e.name, e.shape, e.len
            )));
        }
        let start = e.offset as usize;
        let end = start
            .checked_add(e.len as usize * 8)
            .filter(|&end| end <= payload.len())
            .ok_or_else(|| {
                Error::CheckpointTruncated(format!(
                    "tensor `{}` needs bytes {start}..{} of a {}-byte payload",
                    e.name,
                    start + e.len as usize * 8,
                    payload.len()
                ))
            })?;
        let values: Vec<f64> = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        match e.role {
            TensorRole::Param => params[e.layer].push(
                Tensor::new(&e.shape, values).map_err(|err| Error::CheckpointShape(err.to_string()))?,
            ),
            TensorRole::Buffer => {
                let stats = running[e.layer].get_or_insert_with(|| RunningStats {
                    mean: Vec::new(),
                    var: Vec::new(),
                });
                if e.name.ends_with("running_mean") {
                    stats.mean = values;
                } else {
                    stats.var = values;
                }
            }
        }
    }
    Network::from_parts(header.spec, params, running)
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, encode(net)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::spec::build_tranet;
    use crate::ops::Mode;

    fn trained_ish() -> Network {
        let spec = build_tranet([1, 28, 28], 4).unwrap();
        let mut net = Network::init(&spec, 3).unwrap();
        let x = Tensor::from_fn(&[2, 1, 28, 28], |i| (i % 17) as f64 / 17.0);
        net.forward(&x, Mode::Train, 1).unwrap();
        net
    }

    #[test]
    fn round_trip_is_exact() {
        let net = trained_ish();
        let back = decode(&encode(&net).unwrap()).unwrap();
        assert_eq!(back, net);
        let (header, _) = decode_header(&encode(&net).unwrap()).unwrap();
        assert_eq!(header.param_values(), 7156);
    }

    #[test]
    fn corrupt_magic_is_version_error() {
        let mut bytes = encode(&trained_ish()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::CheckpointVersion(_))));
        let mut bytes = encode(&trained_ish()).unwrap();
        bytes[4] = 9;
        assert!(matches!(decode(&bytes), Err(Error::CheckpointVersion(_))));
    }

    #[test]
    fn truncation_is_reported() {
        let bytes = encode(&trained_ish()).unwrap();
        for cut in [10, 40, bytes.len() - 1] {
            assert!(
                matches!(decode(&bytes[..cut]), Err(Error::CheckpointTruncated(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn spec_mismatch_is_shape_error() {
        let net = trained_ish();
        let bytes = encode(&net).unwrap();
        let (mut header, body) = decode_header(&bytes).unwrap();
        header.spec.layers[0] = crate::net::LayerSpec::Conv(crate::ops::ConvParams::square(9, 3, 1, 0));
        let json = serde_json::to_vec(&header).unwrap();
        let mut forged = Vec::new();
        forged.extend_from_slice(MAGIC);
        forged.extend_from_slice(&VERSION.to_le_bytes());
        forged.extend_from_slice(&(json.len() as u64).to_le_bytes());
        forged.extend_from_slice(&json);
        forged.extend_from_slice(&bytes[body..]);
        assert!(matches!(decode(&forged), Err(Error::CheckpointShape(_))));
    }
}
