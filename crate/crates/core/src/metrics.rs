//! Full-reference quality metrics on display-referred images in `[0, 1]`.

use crate::error::{invalid, shape_err, Result};
use crate::image::Image;
use crate::scalar::Scalar;

pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

pub fn mse<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<T> {
    if !a.same_shape(b) {
        return shape_err(format!("metric inputs differ: {:?} vs {:?}", a.dims(), b.dims()));
    }
    if a.data().is_empty() {
        return invalid("metric on an empty image");
    }
    let s: T = a.data().iter().zip(b.data()).map(|(&x, &y)| (x - y) * (x - y)).sum();
    Ok(s / T::lit(a.data().len() as f64))
}

/// `10·log10(1 / MSE)` for unit peak, capped at [`PSNR_CAP`].
pub fn psnr<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<T> {
    psnr_capped(a, b, T::lit(PSNR_CAP))
}

pub fn psnr_capped<T: Scalar>(a: &Image<T>, b: &Image<T>, cap: T) -> Result<T> {
    let m = mse(a, b)?;
    if m <= T::zero() {
        return Ok(cap);
    }
    Ok((T::lit(10.0) * (T::one() / m).log10()).min(cap))
}

/// Normalized 1-D taps of the SSIM window.
pub fn ssim_taps<T: Scalar>() -> Vec<T> {
    let r = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| T::lit(v / s)).collect()
}

/// Separable "valid" filtering of one plane.
fn filter_valid<T: Scalar>(plane: &[T], h: usize, w: usize, k: &[T]) -> Vec<T> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut tmp = vec![T::zero(); h * ow];
    for y in 0..h {
        for x in 0..ow {
            let row = &plane[y * w + x..y * w + x + n];
            tmp[y * ow + x] = row.iter().zip(k).map(|(&v, &t)| v * t).sum();
        }
    }
    let mut out = vec![T::zero(); oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| tmp[(y + i) * ow + x] * k[i]).sum();
        }
    }
    out
}

/// Mean SSIM over all full 11×11 windows (no padding), averaged over channels.
pub fn ssim<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<T> {
    if !a.same_shape(b) {
        return shape_err(format!("metric inputs differ: {:?} vs {:?}", a.dims(), b.dims()));
    }
    let (h, w, c) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW || c == 0 {
        return invalid(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"));
    }
    let k = ssim_taps::<T>();
    let c1 = T::lit((SSIM_K1 * 1.0).powi(2));
    let c2 = T::lit((SSIM_K2 * 1.0).powi(2));
    let two = T::lit(2.0);
    let mut total = T::zero();
    for ch in 0..c {
        let (pa, pb) = (a.plane(ch), b.plane(ch));
        let prod = |f: fn(T, T) -> T| -> Vec<T> { pa.iter().zip(pb).map(|(&x, &y)| f(x, y)).collect() };
        let mu_a = filter_valid(pa, h, w, &k);
        let mu_b = filter_valid(pb, h, w, &k);
        let aa = filter_valid(&prod(|x, _| x * x), h, w, &k);
        let bb = filter_valid(&prod(|_, y| y * y), h, w, &k);
        let ab = filter_valid(&prod(|x, y| x * y), h, w, &k);
        let mut sum = T::zero();
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            sum += ((two * ma * mb + c1) * (two * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += sum / T::lit(mu_a.len() as f64);
    }
    Ok(total / T::lit(c as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let z = Image::<f64>::zeros(4, 4, 3);
        let o = Image::<f64>::filled(4, 4, 3, 1.0);
        assert_eq!(psnr(&z, &z).unwrap(), PSNR_CAP);
        assert_eq!(psnr(&z, &o).unwrap(), 0.0);
        let e = Image::<f64>::filled(4, 4, 3, 0.01);
        assert!((psnr(&z, &e).unwrap() - 40.0).abs() < 1e-9);
        assert!(psnr(&z, &Image::zeros(4, 5, 3)).is_err());
    }

    #[test]
    fn ssim_identity_and_errors() {
        let a = Image::<f64>::from_fn(16, 14, 3, |c, y, x| ((c * 7 + y * 3 + x * 5) % 11) as f64 / 10.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let small = Image::<f64>::zeros(10, 20, 3);
        assert!(ssim(&small, &small).is_err());
    }
}
