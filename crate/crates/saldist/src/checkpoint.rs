//! Binary model checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "SALDIST1"                        8-byte magic, the trailing 1 is the version
//! u32 layer_count
//! per layer: u8 kind                0 = conv, 1 = relu, 2 = max-pool
//!   conv only: u32 in_channels, u32 out_channels, u32 kernel_size,
//!              u8 same_padding, f64 lr_multiplier
//! per conv, in layer order: f64 weights[out][in][ky][kx], f64 bias[out]
//! ```

use std::fs;
use std::path::Path;

use saldist_core::net::{ConvParams, ConvSpec, FcnModel, Layer, LayerSpec};

use crate::{IoError, IoResult};

pub const MAGIC: &[u8; 8] = b"SALDIST1";

pub fn encode(model: &FcnModel) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for l in model.layers() {
        match l.spec {
            LayerSpec::Conv(c) => {
                out.push(0);
                for v in [c.in_channels, c.out_channels, c.kernel_size] {
                    out.extend_from_slice(&(v as u32).to_le_bytes());
                }
                out.push(c.same_padding as u8);
                out.extend_from_slice(&c.lr_multiplier.to_le_bytes());
            }
            LayerSpec::ReLU => out.push(1),
            LayerSpec::MaxPool => out.push(2),
        }
    }
    for p in model.layers().iter().filter_map(|l| l.params.as_ref()) {
        for v in p.weights.iter().chain(&p.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> IoResult<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(IoError::format(self.path, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> IoResult<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> IoResult<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f64(&mut self) -> IoResult<f64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(f64::from_le_bytes(a))
    }

    fn f64s(&mut self, n: usize) -> IoResult<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> IoResult<FcnModel> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(IoError::format(path, "not a saldist checkpoint (bad magic)"));
    }
    let mut c = Cursor { bytes, pos: 8, path };
    let count = c.u32()?;
    if count > 4096 {
        return Err(IoError::format(path, "implausible layer count"));
    }
    let mut specs = Vec::with_capacity(count);
    for _ in 0..count {
        specs.push(match c.u8()? {
            0 => {
                let (i, o, k) = (c.u32()?, c.u32()?, c.u32()?);
                let same_padding = match c.u8()? {
                    0 => false,
                    1 => true,
                    _ => return Err(IoError::format(path, "bad padding flag")),
                };
                LayerSpec::Conv(ConvSpec {
                    in_channels: i,
                    out_channels: o,
                    kernel_size: k,
                    same_padding,
                    lr_multiplier: c.f64()?,
                })
            }
            1 => LayerSpec::ReLU,
            2 => LayerSpec::MaxPool,
            k => return Err(IoError::format(path, format!("unknown layer kind {k}"))),
        });
    }
    let mut layers = Vec::with_capacity(count);
    for spec in specs {
        let params = match spec {
            LayerSpec::Conv(cs) => Some(ConvParams {
                weights: c.f64s(cs.weight_count())?,
                bias: c.f64s(cs.out_channels)?,
            }),
            _ => None,
        };
        layers.push(Layer { spec, params });
    }
    if c.pos != bytes.len() {
        return Err(IoError::format(path, "trailing bytes after checkpoint"));
    }
    FcnModel::from_layers(layers).map_err(|e| IoError::core(path, e))
}

pub fn save(path: &Path, model: &FcnModel) -> IoResult<()> {
    fs::write(path, encode(model)).map_err(|e| IoError::io(path, e))
}

pub fn load(path: &Path) -> IoResult<FcnModel> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode(&bytes, path)
}
