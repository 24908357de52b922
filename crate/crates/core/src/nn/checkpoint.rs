//! Versioned binary container for network weights.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "MRBCKPT\0"
//! version      u32      currently 1
//! header_len   u64
//! header       JSON     {"networks":[{"name","layers":[LayerSpec..],"tensors":n}..],"metadata":{..}}
//! tensors      repeated per network, per tensor:
//!                u32 network index, u32 layer index, u32 ndim, u64 dims[ndim],
//!                u64 count, f64 values[count]
//! checksum     32 bytes SHA-256 of every preceding byte
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::LayerSpec;
use super::network::Network;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MRBCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NetworkHeader {
    name: String,
    layers: Vec<LayerSpec>,
    tensors: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    networks: Vec<NetworkHeader>,
    metadata: serde_json::Value,
}

/// Named networks plus free-form metadata.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub networks: Vec<(String, Network)>,
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn new(metadata: serde_json::Value) -> Self {
        Self {
            networks: Vec::new(),
            metadata,
        }
    }

    pub fn with(mut self, name: &str, net: &Network) -> Self {
        self.networks.push((name.to_string(), net.clone()));
        self
    }

    pub fn take(&mut self, name: &str) -> Result<Network> {
        let i = self
            .networks
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no network '{name}'")))?;
        Ok(self.networks.remove(i).1)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            networks: self
                .networks
                .iter()
                .map(|(name, n)| NetworkHeader {
                    name: name.clone(),
                    layers: n.specs().to_vec(),
                    tensors: n.params().tensors().len(),
                })
                .collect(),
            metadata: self.metadata.clone(),
        };
        let hjson = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(hjson.len() as u64).to_le_bytes());
        out.extend_from_slice(&hjson);
        for (ni, (_, net)) in self.networks.iter().enumerate() {
            let layers = net.tensor_layers();
            for (t, layer) in net.params().tensors().iter().zip(layers) {
                out.extend_from_slice(&(ni as u32).to_le_bytes());
                out.extend_from_slice(&(layer as u32).to_le_bytes());
                out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
                for d in &t.shape {
                    out.extend_from_slice(&(*d as u64).to_le_bytes());
                }
                out.extend_from_slice(&(t.values.len() as u64).to_le_bytes());
                for v in &t.values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 + 4 + 8 + 32 {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Format("checkpoint checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let hlen = r.u64()? as usize;
        let header: Header = serde_json::from_slice(r.take(hlen)?)?;
        let mut networks = Vec::with_capacity(header.networks.len());
        for (ni, nh) in header.networks.into_iter().enumerate() {
            let mut tensors = Vec::with_capacity(nh.tensors);
            for _ in 0..nh.tensors {
                let idx = r.u32()? as usize;
                let _layer = r.u32()?;
                if idx != ni {
                    return Err(Error::Format(format!(
                        "tensor for network {idx} found while reading network {ni}"
                    )));
                }
                let ndim = r.u32()? as usize;
                let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
                let count = r.u64()? as usize;
                let values = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                tensors.push((shape, values));
            }
            networks.push((nh.name, Network::from_parts(nh.layers, tensors)?));
        }
        if r.pos != body.len() {
            return Err(Error::Format("trailing bytes in checkpoint".into()));
        }
        Ok(Self {
            networks,
            metadata: header.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
