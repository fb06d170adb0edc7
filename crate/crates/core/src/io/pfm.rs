//! Grayscale portable float maps (`Pf`).
//!
//! Layout: ASCII header `Pf\n<width> <height>\n-1.0\n` followed by
//! `width * height` little-endian IEEE-754 `f32` samples, scanlines ordered
//! bottom-to-top as the format prescribes. A positive scale marks
//! big-endian data, which the reader also accepts.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

pub fn encode(img: &Image) -> Vec<u8> {
    let side = img.side();
    let mut out = format!("Pf\n{side} {side}\n-1.0\n").into_bytes();
    out.reserve(img.len() * 4);
    for p in (0..side).rev() {
        for q in 0..side {
            out.extend_from_slice(&(img.get(p, q) as f32).to_le_bytes());
        }
    }
    out
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| std::str::from_utf8(&bytes[start..*pos]).ok())?
}

pub fn decode(bytes: &[u8], origin: &Path) -> Result<Image> {
    let bad = |reason: String| Error::Format {
        kind: "PFM",
        path: origin.to_path_buf(),
        reason,
    };
    let mut pos = 0;
    match next_token(bytes, &mut pos) {
        Some("Pf") => {}
        Some("PF") => return Err(bad("colour PFM is not supported".into())),
        other => return Err(bad(format!("bad magic {other:?}"))),
    }
    let mut field = |name: &str| -> Result<&str> {
        next_token(bytes, &mut pos).ok_or_else(|| bad(format!("missing {name}")))
    };
    let width: usize = field("width")?
        .parse()
        .map_err(|e| bad(format!("width: {e}")))?;
    let height: usize = field("height")?
        .parse()
        .map_err(|e| bad(format!("height: {e}")))?;
    let scale: f32 = field("scale")?
        .parse()
        .map_err(|e| bad(format!("scale: {e}")))?;
    if width != height {
        return Err(bad(format!("{width}x{height} map is not square")));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad(format!("invalid scale {scale}")));
    }
    // exactly one whitespace byte separates the header from the samples
    pos += 1;
    let payload = bytes.get(pos..).unwrap_or_default();
    let expected = width * height * 4;
    if payload.len() != expected {
        return Err(bad(format!(
            "expected {expected} bytes of samples, found {}",
            payload.len()
        )));
    }
    let little = scale < 0.0;
    let mut img = Image::zeros(width);
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row_from_bottom, q) = (k / width, k % width);
        img.set(height - 1 - row_from_bottom, q, v as f64);
    }
    Ok(img)
}

pub fn write(path: &Path, img: &Image) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode(img)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
