//! Portable Float Map reading and writing.
//!
//! Only little-endian colour maps are produced or accepted: header
//! `PF\n<W> <H>\n-1.0\n`, then `W*H*3` little-endian f32 values with rows
//! stored bottom to top.

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::image::RgbImage;

pub fn encode_pfm(image: &RgbImage) -> Vec<u8> {
    let header = format!("PF\n{} {}\n-1.0\n", image.width, image.height);
    let mut out = Vec::with_capacity(header.len() + image.data.len() * 12);
    out.extend_from_slice(header.as_bytes());
    let mut buf = [0u8; 4];
    for y in (0..image.height).rev() {
        for p in &image.data[y * image.width..(y + 1) * image.width] {
            for &v in p {
                LittleEndian::write_f32(&mut buf, v);
                out.extend_from_slice(&buf);
            }
        }
    }
    out
}

/// Reads one whitespace-delimited header token, consuming exactly one trailing
/// whitespace byte.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos || *pos >= bytes.len() {
        return Err(Error::MalformedHeader("truncated header".into()));
    }
    let tok = std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| Error::MalformedHeader("non-ASCII header".into()))?;
    *pos += 1;
    Ok(tok)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<RgbImage> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    if magic != "PF" {
        return Err(Error::MalformedHeader(format!(
            "expected magic PF, found {magic:?}"
        )));
    }
    let parse_dim = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::MalformedHeader(format!("bad dimension {s:?}")))
    };
    let width = parse_dim(next_token(bytes, &mut pos)?)?;
    let height = parse_dim(next_token(bytes, &mut pos)?)?;
    let scale: f64 = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::MalformedHeader("bad scale".into()))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::MalformedHeader("bad scale".into()));
    }
    if scale > 0.0 {
        return Err(Error::UnsupportedByteOrder);
    }

    let count = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(3))
        .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
    let payload = &bytes[pos..];
    let expected = count * 4;
    if payload.len() < expected {
        return Err(Error::ShortRead {
            expected,
            found: payload.len(),
        });
    }

    let mut image = RgbImage::new(width, height);
    for (i, chunk) in payload[..expected].chunks_exact(4).enumerate() {
        let v = LittleEndian::read_f32(chunk);
        if !v.is_finite() {
            return Err(Error::NonFinite(i));
        }
        let pixel = i / 3;
        let (row_from_bottom, x) = (pixel / width, pixel % width);
        let y = height - 1 - row_from_bottom;
        image.data[y * width + x][i % 3] = v;
    }
    Ok(image)
}

pub fn write_pfm(path: impl AsRef<Path>, image: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pfm(image)).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes)
}
