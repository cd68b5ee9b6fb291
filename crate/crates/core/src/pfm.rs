//! Portable Float Map I/O (grayscale `Pf`).
//!
//! Files are written little-endian (negative scale) with rows stored
//! bottom-to-top, as the format requires. Big-endian files are accepted on
//! read. Invalid pixels are stored as 0.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::scalar::Real;

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        reason: reason.into(),
    }
}

/// Encode raw `f32` values. No invalid-pixel translation is applied.
pub fn encode(raster: &Raster<f32>) -> Vec<u8> {
    let (w, h) = raster.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for v in (0..h).rev() {
        for &x in raster.row(v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// Decode raw `f32` values.
pub fn decode(bytes: &[u8]) -> Result<Raster<f32>> {
    let mut pos = 0usize;
    let mut token = |what: &str| -> Result<(String, usize)> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(start, format!("missing {what}")));
        }
        let s = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        Ok((s, start))
    };
    let (magic, at) = token("magic")?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => return Err(format_err(at, "color PFM is not supported")),
        _ => return Err(format_err(at, format!("bad magic {magic:?}"))),
    }
    let (w, at) = token("width")?;
    let width: usize = w.parse().map_err(|_| format_err(at, "bad width"))?;
    let (h, at) = token("height")?;
    let height: usize = h.parse().map_err(|_| format_err(at, "bad height"))?;
    let (s, at) = token("scale")?;
    let scale: f32 = s.parse().map_err(|_| format_err(at, "bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err(at, "scale must be non-zero"));
    }
    // exactly one whitespace byte separates the header from the data
    let data_start = pos + 1;
    let needed = width * height * 4;
    if bytes.len() < data_start + needed {
        return Err(format_err(bytes.len(), format!("truncated: need {needed} data bytes")));
    }
    let little = scale < 0.0;
    let mut data = vec![0f32; width * height];
    for (i, chunk) in bytes[data_start..data_start + needed].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_row, u) = (i / width, i % width);
        data[(height - 1 - file_row) * width + u] = x;
    }
    Raster::from_vec(width, height, data)
}

/// Write a raster; NaN / invalid pixels become 0.
pub fn save<T: Real>(path: impl AsRef<Path>, raster: &Raster<T>) -> Result<()> {
    let path = path.as_ref();
    let raw = raster.map(|x| if x.is_finite() { x.to_f32().unwrap_or(0.0) } else { 0.0 });
    fs::write(path, encode(&raw)).map_err(|e| Error::io(path, e))
}

/// Read a raster; 0 and non-finite pixels become invalid (NaN).
pub fn load<T: Real>(path: impl AsRef<Path>) -> Result<Raster<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let raw = decode(&bytes)?;
    Ok(raw.map(|x| {
        if x == 0.0 || !x.is_finite() {
            T::nan()
        } else {
            T::lit(x as f64)
        }
    }))
}
