//! Portable float maps.
//!
//! `Pf` holds one channel, `PF` three interleaved channels. The header is
//! the type line, `width height`, and a scale whose sign gives the byte
//! order (negative: little-endian). Pixel rows are stored bottom-to-top,
//! while [`GridMap`] and [`Tensor`] index rows top-to-bottom, so rows are
//! flipped on both read and write. Samples are 32-bit floats: writing a
//! 64-bit map rounds each value to the nearest `f32`, and maps that already
//! hold `f32` values round-trip bit-exactly.

use std::fs;
use std::path::Path;

use saldist_core::net::Tensor;
use saldist_core::GridMap;

use crate::{IoError, IoResult};

/// Encodes a 1- or 3-channel tensor; the scale written is `-1.0`.
pub fn encode(t: &Tensor) -> Option<Vec<u8>> {
    let magic = match t.channels() {
        1 => "Pf",
        3 => "PF",
        _ => return None,
    };
    let (c, h, w) = (t.channels(), t.height(), t.width());
    let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(c * h * w * 4);
    let data = t.data();
    for r in (0..h).rev() {
        for x in 0..w {
            for ch in 0..c {
                let v = data[(ch * h + r) * w + x] as f32;
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Some(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> IoResult<Tensor> {
    let bad = |m: &str| IoError::format(path, m);
    // Three whitespace-terminated header tokens, then exactly one separator.
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos || pos >= bytes.len() {
            return Err(bad("truncated PFM header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII PFM header"))?);
    }
    pos += 1;
    let channels = match tokens[0] {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(bad("not a PFM file (expected Pf or PF)")),
    };
    let w: usize = tokens[1].parse().map_err(|_| bad("bad PFM width"))?;
    let h: usize = tokens[2].parse().map_err(|_| bad("bad PFM height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad PFM scale"))?;
    if w == 0 || h == 0 {
        return Err(bad("PFM dimensions must be positive"));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("PFM scale must be non-zero"));
    }
    let little = scale < 0.0;
    let body = &bytes[pos..];
    let n = channels * w * h;
    if body.len() != n * 4 {
        return Err(bad(&format!("PFM body has {} bytes, expected {}", body.len(), n * 4)));
    }
    let mut data = vec![0.0; n];
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let ch = k % channels;
        let pix = k / channels;
        let (r, x) = (h - 1 - pix / w, pix % w);
        data[(ch * h + r) * w + x] = v as f64;
    }
    Tensor::new(channels, h, w, data).map_err(|e| IoError::core(path, e))
}

pub fn read_tensor(path: &Path) -> IoResult<Tensor> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode(&bytes, path)
}

pub fn write_tensor(path: &Path, t: &Tensor) -> IoResult<()> {
    let bytes = encode(t).ok_or_else(|| IoError::format(path, "PFM holds 1 or 3 channels"))?;
    fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

/// Reads a single-channel map.
pub fn read_map(path: &Path) -> IoResult<GridMap> {
    let t = read_tensor(path)?;
    if t.channels() != 1 {
        return Err(IoError::format(path, "expected a single-channel (Pf) map"));
    }
    t.channel(0).map_err(|e| IoError::core(path, e))
}

pub fn write_map(path: &Path, map: &GridMap) -> IoResult<()> {
    let t = Tensor::from_channels(std::slice::from_ref(map)).map_err(|e| IoError::core(path, e))?;
    write_tensor(path, &t)
}
