//! Closed-form radiometric transforms: gamma-mapped HDR from an exposure,
//! μ-law tonemapping, Gaussian blur targets and robust range normalization.

use crate::error::{invalid, Result};
use crate::image::Image;
use crate::scalar::Scalar;

pub const DEFAULT_GAMMA: f64 = 2.2;
pub const DEFAULT_MU: f64 = 5000.0;
pub const DEFAULT_BLUR_SIGMA: f64 = 1.0;
pub const BLUR_KERNEL_SIZE: usize = 5;
pub const NORMALIZE_PERCENTILE: f64 = 0.999;

/// One low-dynamic-range exposure with its exposure time in seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct LdrImage<T> {
    image: Image<T>,
    exposure_time: T,
}

impl<T: Scalar> LdrImage<T> {
    pub fn new(image: Image<T>, exposure_time: T) -> Result<Self> {
        if !exposure_time.is_finite() || exposure_time <= T::zero() {
            return invalid(format!("exposure time must be positive and finite, got {exposure_time}"));
        }
        if let Some(v) = image
            .data()
            .iter()
            .find(|v| !v.is_finite() || **v < T::zero() || **v > T::one())
        {
            return invalid(format!("LDR pixel {v} outside [0, 1]"));
        }
        Ok(LdrImage { image, exposure_time })
    }

    pub fn image(&self) -> &Image<T> {
        &self.image
    }

    pub fn exposure_time(&self) -> T {
        self.exposure_time
    }
}

/// Linear radiance image, non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct HdrImage<T>(pub Image<T>);

impl<T: Scalar> HdrImage<T> {
    pub fn new(image: Image<T>) -> Result<Self> {
        if let Some(v) = image.data().iter().find(|v| !v.is_finite() || **v < T::zero()) {
            return invalid(format!("HDR pixel {v} is negative or non-finite"));
        }
        Ok(HdrImage(image))
    }

    pub fn image(&self) -> &Image<T> {
        &self.0
    }
}

/// Display-referred image in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TonemappedImage<T>(pub Image<T>);

impl<T: Scalar> TonemappedImage<T> {
    pub fn image(&self) -> &Image<T> {
        &self.0
    }
}

/// `x^γ / t` for every pixel.
pub fn gamma_map<T: Scalar>(x: &LdrImage<T>, gamma: T) -> Result<HdrImage<T>> {
    if !(gamma > T::one()) || !gamma.is_finite() {
        return invalid(format!("gamma must be finite and > 1, got {gamma}"));
    }
    let t = x.exposure_time;
    if !t.is_finite() || t <= T::zero() {
        return invalid("exposure time must be positive");
    }
    if x.image.data().iter().any(|v| !v.is_finite()) {
        return invalid("non-finite LDR pixel");
    }
    Ok(HdrImage(x.image.map(|v| v.powf(gamma) / t)))
}

#[inline]
pub fn mu_law<T: Scalar>(h: T, mu: T) -> T {
    (mu * h).ln_1p() / mu.ln_1p()
}

/// `ln(1 + μ·h) / ln(1 + μ)` for every pixel.
pub fn mu_law_tonemap<T: Scalar>(h: &HdrImage<T>, mu: T) -> Result<TonemappedImage<T>> {
    if !(mu > T::zero()) || !mu.is_finite() {
        return invalid(format!("mu must be positive, got {mu}"));
    }
    if let Some(v) = h.0.data().iter().find(|v| !v.is_finite() || **v < T::zero()) {
        return invalid(format!("cannot tonemap pixel {v}"));
    }
    Ok(TonemappedImage(h.0.map(|v| mu_law(v, mu))))
}

/// Normalized 1-D Gaussian taps for a `BLUR_KERNEL_SIZE` window.
pub fn gaussian_taps<T: Scalar>(sigma: T) -> [T; BLUR_KERNEL_SIZE] {
    let r = (BLUR_KERNEL_SIZE / 2) as i32;
    let mut taps = [T::zero(); BLUR_KERNEL_SIZE];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = T::lit((i as i32 - r) as f64);
        *t = (-(d * d) / (T::lit(2.0) * sigma * sigma)).exp();
    }
    let s: T = taps.iter().copied().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Separable 5×5 Gaussian blur with mirror padding.
///
/// Symmetric taps are summed pairwise (`w·(a + b)`), which makes the result
/// exactly equivariant under horizontal and vertical flips.
pub fn make_blur_target<T: Scalar>(y: &HdrImage<T>, sigma: T) -> Result<HdrImage<T>> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return invalid(format!("blur sigma must be positive, got {sigma}"));
    }
    let img = &y.0;
    let (h, w, c) = img.dims();
    if h < BLUR_KERNEL_SIZE || w < BLUR_KERNEL_SIZE {
        return invalid(format!("image {h}x{w} smaller than the 5x5 blur kernel"));
    }
    let k = gaussian_taps(sigma);
    let at = |i: isize, n: usize| crate::autograd::reflect_index(i, n);
    let mut tmp = Image::zeros(h, w, c);
    for ch in 0..c {
        for yy in 0..h {
            for xx in 0..w {
                let p = |d: isize| img.get(ch, yy, at(xx as isize + d, w));
                let v = k[0] * (p(-2) + p(2)) + k[1] * (p(-1) + p(1)) + k[2] * p(0);
                tmp.set(ch, yy, xx, v);
            }
        }
    }
    let mut out = Image::zeros(h, w, c);
    for ch in 0..c {
        for yy in 0..h {
            for xx in 0..w {
                let p = |d: isize| tmp.get(ch, at(yy as isize + d, h), xx);
                let v = k[0] * (p(-2) + p(2)) + k[1] * (p(-1) + p(1)) + k[2] * p(0);
                out.set(ch, yy, xx, v);
            }
        }
    }
    Ok(HdrImage(out))
}

/// HDR image brought into `[0, 1]` with the factor that was applied.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedHdr<T> {
    pub image: HdrImage<T>,
    /// Multiply the raw radiance by this to obtain `image` (before clamping).
    pub scale: T,
}

/// Linear-interpolated quantile `q ∈ [0, 1]` (the "linear" rule: rank `q·(n−1)`).
pub fn percentile<T: Scalar>(values: &[T], q: f64) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = T::lit(pos - lo as f64);
    let cmp = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal);
    let (_, &mut lo_v, upper) = v.select_nth_unstable_by(lo, cmp);
    if frac == T::zero() || upper.is_empty() {
        return Some(lo_v);
    }
    let hi_v = upper.iter().copied().fold(T::infinity(), T::min);
    Some(lo_v + (hi_v - lo_v) * frac)
}

/// Divides by the 99.9th percentile and clamps to `[0, 1]`. An image whose
/// percentile is zero is returned unchanged with scale 1.
pub fn normalize_hdr<T: Scalar>(raw: &Image<T>) -> Result<NormalizedHdr<T>> {
    let raw = HdrImage::new(raw.clone())?;
    let p = percentile(raw.0.data(), NORMALIZE_PERCENTILE).unwrap_or(T::zero());
    if p <= T::zero() {
        return Ok(NormalizedHdr { image: raw, scale: T::one() });
    }
    let scale = T::one() / p;
    let image = raw.0.map(|v| (v * scale).min(T::one()));
    Ok(NormalizedHdr { image: HdrImage(image), scale })
}
