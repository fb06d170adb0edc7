//! 8-bit binary PGM (`P5`) previews and masks. The reader also accepts
//! plain `P2` files and `#` comments in the header.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

/// Writes raw 8-bit samples, row-major, top row first.
pub fn encode_u8(side: usize, samples: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    out.extend_from_slice(samples);
    out
}

/// Linearly maps `[min, max]` of `img` to `0..=255`.
pub fn encode_preview(img: &Image) -> Vec<u8> {
    let (lo, hi) = (img.min(), img.max());
    let span = hi - lo;
    let samples: Vec<u8> = img
        .as_slice()
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect();
    encode_u8(img.side(), &samples)
}

pub fn write_preview(path: &Path, img: &Image) -> Result<()> {
    fs::write(path, encode_preview(img)).map_err(|e| Error::io(path, e))
}

pub fn write_u8(path: &Path, side: usize, samples: &[u8]) -> Result<()> {
    fs::write(path, encode_u8(side, samples)).map_err(|e| Error::io(path, e))
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a str> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| std::str::from_utf8(&bytes[start..*pos]).ok())?
}

/// Decodes a square graymap into raw sample values (not rescaled).
pub fn decode(bytes: &[u8], origin: &Path) -> Result<Image> {
    let bad = |reason: String| Error::Format {
        kind: "PGM",
        path: origin.to_path_buf(),
        reason,
    };
    let mut pos = 0;
    let magic = header_token(bytes, &mut pos);
    let binary = match magic {
        Some("P5") => true,
        Some("P2") => false,
        other => return Err(bad(format!("bad magic {other:?}"))),
    };
    let mut num = |name: &str| -> Result<usize> {
        header_token(bytes, &mut pos)
            .ok_or_else(|| bad(format!("missing {name}")))?
            .parse()
            .map_err(|e| bad(format!("{name}: {e}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if width != height {
        return Err(bad(format!("{width}x{height} map is not square")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(bad(format!("maxval {maxval} out of range")));
    }
    let n = width * height;
    let samples: Vec<f64> = if binary {
        pos += 1;
        let wide = maxval > 255;
        let payload = bytes.get(pos..).unwrap_or_default();
        let need = if wide { 2 * n } else { n };
        if payload.len() < need {
            return Err(bad(format!(
                "expected {need} bytes of samples, found {}",
                payload.len()
            )));
        }
        if wide {
            payload[..need]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
                .collect()
        } else {
            payload[..n].iter().map(|&b| b as f64).collect()
        }
    } else {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(num("sample")? as f64);
        }
        v
    };
    Image::from_vec(width, samples)
}

pub fn read(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
