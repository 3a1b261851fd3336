//! Binary PGM (P5, 8-bit) input/output.
//!
//! Reading produces float images with the raw 0..=255 sample values;
//! writing rounds and clamps into [0, 255], so integer-valued images
//! round-trip losslessly.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::{num, Scalar};
use std::io::{Read, Write};
use std::path::Path;

fn skip_whitespace_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn parse_number(bytes: &[u8], pos: usize) -> Result<(usize, usize)> {
    let start = skip_whitespace_and_comments(bytes, pos);
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(Error::format("expected integer in PGM header"));
    }
    let text = std::str::from_utf8(&bytes[start..end]).unwrap();
    let value: usize = text
        .parse()
        .map_err(|_| Error::format("integer overflow in PGM header"))?;
    Ok((value, end))
}

/// Decode a P5 PGM from raw bytes.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Image<T>> {
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(Error::format("not a binary PGM (missing P5 magic)"));
    }
    let (width, pos) = parse_number(bytes, 2)?;
    let (height, pos) = parse_number(bytes, pos)?;
    let (maxval, pos) = parse_number(bytes, pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::format(format!(
            "unsupported PGM maxval {maxval} (only 8-bit supported)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::format("PGM dimensions must be >= 1"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let data_start = pos + 1;
    let expected = height * width;
    if bytes.len() < data_start + expected {
        return Err(Error::format(format!(
            "PGM raster truncated: expected {expected} bytes"
        )));
    }
    let data = bytes[data_start..data_start + expected]
        .iter()
        .map(|&b| num::<T>(b as f64))
        .collect();
    Image::from_vec(height, width, data)
}

/// Encode as P5 PGM with maxval 255, rounding and clamping intensities.
pub fn encode<T: Scalar>(img: &Image<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + img.len());
    out.extend_from_slice(format!("P5\n{} {}\n255\n", img.width(), img.height()).as_bytes());
    for &v in img.data() {
        let x = v.to_f64().unwrap_or(0.0).round().clamp(0.0, 255.0);
        out.push(x as u8);
    }
    out
}

pub fn read<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// Write atomically (temp file + rename) so re-runs can compare bytes.
pub fn write<T: Scalar>(path: impl AsRef<Path>, img: &Image<T>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("pgm.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&encode(img))?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_integer_image() {
        let img = Image::<f64>::from_fn(5, 7, |r, c| ((r * 37 + c * 11) % 256) as f64);
        let decoded: Image<f64> = decode(&encode(&img)).unwrap();
        assert_eq!(decoded, img);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# a comment\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 64, 128, 255]);
        let img: Image<f64> = decode(&bytes).unwrap();
        assert_eq!(img.data(), &[0.0, 64.0, 128.0, 255.0]);
    }

    #[test]
    fn rejects_16_bit() {
        let bytes = b"P5\n1 1\n65535\n\x00\x00".to_vec();
        assert!(decode::<f64>(&bytes).is_err());
    }

    #[test]
    fn clamps_on_encode() {
        let img = Image::<f64>::from_vec(1, 3, vec![-20.0, 300.0, 12.4]).unwrap();
        let bytes = encode(&img);
        let raster = &bytes[bytes.len() - 3..];
        assert_eq!(raster, &[0u8, 255, 12]);
    }
}
