//! Binary PPM (P6) and PGM (P5) images, 8 bits per sample.

use std::path::Path;

use crate::error::{Error, Result};

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes row-major RGB values in [0, 1].
pub fn encode_ppm(width: usize, height: usize, rgb: &[f64]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend(rgb.iter().map(|v| quantize(*v)));
    out
}

/// Encodes row-major grey values in [0, 1].
pub fn encode_pgm(width: usize, height: usize, grey: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(grey.iter().map(|v| quantize(*v)));
    out
}

/// Parses a P5/P6 header, skipping `#` comments. Returns (width, height, data offset).
fn parse_header(bytes: &[u8], magic: &[u8; 2], path: &Path) -> Result<(usize, usize, usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::parse(path, 1, format!("expected {} image", String::from_utf8_lossy(magic))));
    }
    let mut pos = 2;
    let mut fields = Vec::with_capacity(3);
    while fields.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(path, 1, "malformed image header"));
        }
        let v: usize = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(path, 1, "malformed image header"))?;
        fields.push(v);
    }
    if fields[2] != 255 {
        return Err(Error::parse(path, 1, format!("only 8-bit images are supported (maxval {})", fields[2])));
    }
    // exactly one whitespace byte separates the header from the raster
    Ok((fields[0], fields[1], pos + 1))
}

fn decode(bytes: &[u8], magic: &[u8; 2], channels: usize, path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let (w, h, off) = parse_header(bytes, magic, path)?;
    let need = w * h * channels;
    if bytes.len() < off + need {
        return Err(Error::parse(path, 1, format!("expected {need} samples, file is truncated")));
    }
    Ok((w, h, bytes[off..off + need].iter().map(|b| *b as f64 / 255.0).collect()))
}

pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    decode(bytes, b"P6", 3, path)
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    decode(bytes, b"P5", 1, path)
}

pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[f64]) -> Result<()> {
    std::fs::write(path, encode_ppm(width, height, rgb))?;
    Ok(())
}

pub fn write_pgm(path: &Path, width: usize, height: usize, grey: &[f64]) -> Result<()> {
    std::fs::write(path, encode_pgm(width, height, grey))?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    decode_ppm(&std::fs::read(path)?, path)
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    decode_pgm(&std::fs::read(path)?, path)
}

/// Depth buffer as grey: near is bright, empty pixels black.
pub fn depth_to_grey(depth: &[f64]) -> Vec<f64> {
    let finite = depth.iter().filter(|d| d.is_finite());
    let lo = finite.clone().cloned().fold(f64::INFINITY, f64::min);
    let hi = finite.cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    depth
        .iter()
        .map(|d| if d.is_finite() { 1.0 - 0.8 * (d - lo) / span } else { 0.0 })
        .collect()
}
