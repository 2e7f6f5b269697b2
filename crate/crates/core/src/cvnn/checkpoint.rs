//! Versioned checkpoint container.
//!
//! ```text
//! "CVNN" | u32 version | u32 header length | JSON header
//!        | u64 value count | f32 values ... | u32 CRC-32 of all prior bytes
//! ```
//!
//! All integers and floats are little endian. The JSON header carries the
//! layer specs and model metadata; the payload holds every parameter as
//! `(re, im)` pairs followed by batch-norm running statistics, in layer
//! order.

use serde_json::Value;

use super::{Layer, LayerSpec, Network};
use crate::clx::C64;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CVNN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Value,
    pub payload: Vec<f32>,
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(24 + header.len() + 4 * self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 24 || &bytes[..4] != MAGIC {
            return Err(Error::MalformedHeader("not a CVNN checkpoint".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let version = u32::from_le_bytes(body[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::MalformedHeader(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u32::from_le_bytes(body[8..12].try_into().unwrap()) as usize;
        let rest = body.get(12..).unwrap_or(&[]);
        if rest.len() < hlen + 8 {
            return Err(Error::Truncated { expected: hlen + 8, found: rest.len() });
        }
        let header: Value = serde_json::from_slice(&rest[..hlen])?;
        let count = u64::from_le_bytes(rest[hlen..hlen + 8].try_into().unwrap()) as usize;
        let data = &rest[hlen + 8..];
        if data.len() != count * 4 {
            return Err(Error::Truncated { expected: count * 4, found: data.len() });
        }
        let payload = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { header, payload })
    }
}

/// Appends a network's parameters and running statistics.
pub fn write_network(net: &Network, out: &mut Vec<f32>) {
    for layer in net.layers() {
        write_layer(layer, out);
    }
}

pub fn write_layer(layer: &Layer, out: &mut Vec<f32>) {
    for p in layer.params() {
        out.push(p.re as f32);
        out.push(p.im as f32);
    }
    for r in layer.running() {
        out.extend(r.mean.iter().chain(&r.cov).map(|&v| v as f32));
    }
}

/// Sequential reader over a checkpoint payload.
pub struct PayloadReader<'a> {
    data: &'a [f32],
    pos: usize,
}

impl<'a> PayloadReader<'a> {
    pub fn new(data: &'a [f32]) -> Self {
        Self { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [f32]> {
        let end = self.pos + n;
        if end > self.data.len() {
            return Err(Error::Truncated { expected: end * 4, found: self.data.len() * 4 });
        }
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn read_layer(&mut self, spec: LayerSpec) -> Result<Layer> {
        let n = spec.param_count();
        let raw = self.take(2 * n)?;
        let params = raw.chunks_exact(2).map(|c| C64::new(c[0] as f64, c[1] as f64)).collect();
        let mut layer = Layer::with_params(spec, params)?;
        for r in layer.running_mut() {
            let v = self.take(5)?;
            r.mean = [v[0] as f64, v[1] as f64];
            r.cov = [v[2] as f64, v[3] as f64, v[4] as f64];
        }
        Ok(layer)
    }

    pub fn read_network(&mut self, specs: &[LayerSpec]) -> Result<Network> {
        Ok(Network::from_layers(specs.iter().map(|s| self.read_layer(*s)).collect::<Result<_>>()?))
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::MalformedHeader(format!(
                "{} unread payload values",
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}
