use std::path::Path;

use image::imageops::FilterType;
use image::{ImageBuffer, Rgb};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

use super::{read_pfm, require_file};

type Rgb32 = ImageBuffer<Rgb<f32>, Vec<f32>>;

fn from_rgb32f<T: Scalar>(buf: &Rgb32) -> Image<T> {
    let (w, h) = buf.dimensions();
    Image::from_fn(h as usize, w as usize, 3, |c, y, x| {
        T::lit(buf.get_pixel(x as u32, y as u32).0[c] as f64)
    })
}

fn to_rgb32f<T: Scalar>(img: &Image<T>) -> Result<Rgb32> {
    let (h, w, c) = img.dims();
    if c != 3 {
        return Err(Error::InvalidInput(format!("expected 3 channels, got {c}")));
    }
    Ok(ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Rgb(std::array::from_fn(|ch| img.get(ch, y as usize, x as usize).as_f64() as f32))
    }))
}

/// 8/16-bit PNG, JPEG, etc. scaled to `[0, 1]`, 3 channels.
pub fn read_ldr<T: Scalar>(path: &Path) -> Result<Image<T>> {
    require_file(path)?;
    let img = image::open(path)?.into_rgb32f();
    Ok(from_rgb32f::<T>(&img).map(|v| v.max(T::zero()).min(T::one())))
}

/// Linear radiance from `.pfm` or Radiance `.hdr`.
pub fn read_hdr<T: Scalar>(path: &Path) -> Result<Image<T>> {
    require_file(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let img = match ext.as_str() {
        "pfm" => read_pfm(path)?,
        "hdr" => from_rgb32f(&image::open(path)?.into_rgb32f()),
        _ => return Err(Error::Format(format!("unsupported HDR format: {}", path.display()))),
    };
    match img.channels() {
        3 => Ok(img),
        1 => Image::concat_channels(&[&img, &img, &img]),
        c => Err(Error::Format(format!("HDR image with {c} channels"))),
    }
}

/// Clamps to `[0, 1]` and writes an 8-bit PNG.
pub fn write_png<T: Scalar>(path: &Path, img: &Image<T>) -> Result<()> {
    let (h, w, c) = img.dims();
    if c != 3 {
        return Err(Error::InvalidInput(format!("PNG writer expects 3 channels, got {c}")));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let buf = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Rgb(std::array::from_fn(|ch| {
            let v = img.get(ch, y as usize, x as usize).as_f64().clamp(0.0, 1.0);
            (v * 255.0).round() as u8
        }))
    });
    buf.save(path)?;
    Ok(())
}

/// Bilinear (triangle filter) resize of a 3-channel image.
pub fn resize<T: Scalar>(img: &Image<T>, height: usize, width: usize) -> Result<Image<T>> {
    if img.height() == height && img.width() == width {
        return Ok(img.clone());
    }
    let buf = to_rgb32f(img)?;
    let out = image::imageops::resize(&buf, width as u32, height as u32, FilterType::Triangle);
    Ok(from_rgb32f(&out))
}
