use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

use super::{require_file, write_atomic};

/// Little-endian colour PFM (`PF`, negative scale), rows stored bottom-up.
pub fn write_pfm<T: Scalar>(path: &Path, img: &Image<T>) -> Result<()> {
    let (h, w, c) = img.dims();
    if c != 3 && c != 1 {
        return Err(Error::InvalidInput(format!("PFM holds 1 or 3 channels, got {c}")));
    }
    let tag = if c == 3 { "PF" } else { "Pf" };
    let mut out = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(h * w * c * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            for ch in 0..c {
                out.extend_from_slice(&(img.get(ch, y, x).as_f64() as f32).to_le_bytes());
            }
        }
    }
    write_atomic(path, &out)
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated PFM header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn read_pfm<T: Scalar>(path: &Path) -> Result<Image<T>> {
    require_file(path)?;
    let bytes = std::fs::read(path)?;
    let mut pos = 0;
    let channels = match header_token(&bytes, &mut pos)?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::Format(format!("not a PFM file (magic `{other}`)"))),
    };
    let num = |s: String| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Format(format!("bad PFM header value `{s}`")))
    };
    let w = num(header_token(&bytes, &mut pos)?)? as usize;
    let h = num(header_token(&bytes, &mut pos)?)? as usize;
    let scale = num(header_token(&bytes, &mut pos)?)?;
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let little = scale < 0.0;
    let need = w * h * channels * 4;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Format(format!("PFM raster truncated: need {need} bytes")))?;
    let mut img = Image::zeros(h, w, channels);
    for (i, chunk) in raster.chunks_exact(4).enumerate() {
        let b: [u8; 4] = chunk.try_into().expect("4 bytes");
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let ch = i % channels;
        let x = (i / channels) % w;
        let y = h - 1 - i / (channels * w);
        img.set(ch, y, x, T::lit(v as f64));
    }
    Ok(img)
}
