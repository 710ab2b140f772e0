//! Convolution, transposed convolution, padding and resampling.

use super::{BackwardFn, Var};
use crate::error::{shape_err, Result};
use crate::scalar::{gemm, gemm_strided, Scalar, Strided};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn new(n: usize, c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Result<Self> {
        if stride == 0 || k == 0 {
            return shape_err("kernel size and stride must be positive");
        }
        if h + 2 * pad < k || w + 2 * pad < k {
            return shape_err(format!(
                "input {h}x{w} (padding {pad}) smaller than kernel {k}"
            ));
        }
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        Ok(Geometry { n, c, h, w, k, stride, pad, ho, wo })
    }

    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.n * self.ho * self.wo
    }
}

/// Unfolds `x` (NCHW) into a `[c·k·k, n·ho·wo]` patch matrix; out-of-range taps read zero.
fn im2col<T: Scalar>(x: &[T], g: &Geometry) -> Vec<T> {
    let l = g.ho * g.wo;
    let width = g.cols();
    let mut cols = vec![T::zero(); g.rows() * width];
    let (h, w) = (g.h as isize, g.w as isize);
    for ch in 0..g.c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ch * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * width..(row + 1) * width];
                for b in 0..g.n {
                    let src = &x[(b * g.c + ch) * g.h * g.w..(b * g.c + ch + 1) * g.h * g.w];
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= h {
                            continue;
                        }
                        let srow = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                        let base = b * l + oy * g.wo;
                        if g.stride == 1 && g.pad == 0 {
                            dst[base..base + g.wo].copy_from_slice(&srow[kj..kj + g.wo]);
                        } else {
                            for ox in 0..g.wo {
                                let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                                if ix >= 0 && ix < w {
                                    dst[base + ox] = srow[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters a patch matrix back onto an NCHW image.
fn col2im<T: Scalar>(cols: &[T], g: &Geometry) -> Vec<T> {
    let l = g.ho * g.wo;
    let width = g.cols();
    let mut x = vec![T::zero(); g.n * g.c * g.h * g.w];
    let (h, w) = (g.h as isize, g.w as isize);
    for ch in 0..g.c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ch * g.k + ki) * g.k + kj;
                let src = &cols[row * width..(row + 1) * width];
                for b in 0..g.n {
                    let plane = (b * g.c + ch) * g.h * g.w;
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= h {
                            continue;
                        }
                        let base = b * l + oy * g.wo;
                        let drow = plane + iy as usize * g.w;
                        for ox in 0..g.wo {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < w {
                                x[drow + ix as usize] += src[base + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// Patch-matrix elements per chunk; keeps the working set cache resident.
const CHUNK_ELEMS: usize = 1 << 18;

impl Geometry {
    /// Output rows handled per chunk.
    fn row_block(&self) -> usize {
        (CHUNK_ELEMS / (self.rows() * self.wo).max(1)).clamp(1, self.ho)
    }
}

/// Patch matrix `[c·k·k, (oy1−oy0)·wo]` for output rows `oy0..oy1` of one sample.
fn im2col_rows<T: Scalar>(xs: &[T], g: &Geometry, oy0: usize, oy1: usize, out: &mut [T]) {
    let len = (oy1 - oy0) * g.wo;
    let (h, w) = (g.h as isize, g.w as isize);
    let plain = g.stride == 1 && g.pad == 0;
    for ch in 0..g.c {
        let src = &xs[ch * g.h * g.w..(ch + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ch * g.k + ki) * g.k + kj;
                let dst = &mut out[row * len..(row + 1) * len];
                for (r, oy) in (oy0..oy1).enumerate() {
                    let d = &mut dst[r * g.wo..(r + 1) * g.wo];
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= h {
                        d.fill(T::zero());
                        continue;
                    }
                    let srow = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if plain {
                        d.copy_from_slice(&srow[kj..kj + g.wo]);
                    } else {
                        for (ox, v) in d.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            *v = if ix >= 0 && ix < w { srow[ix as usize] } else { T::zero() };
                        }
                    }
                }
            }
        }
    }
}

/// Transposed patch matrix `[(oy1−oy0)·wo, c·k·k]`: one contiguous patch per output pixel.
fn im2row_rows<T: Scalar>(xs: &[T], g: &Geometry, oy0: usize, oy1: usize, out: &mut [T]) {
    let rows = g.rows();
    let (h, w) = (g.h as isize, g.w as isize);
    let plain = g.stride == 1 && g.pad == 0;
    for (r, oy) in (oy0..oy1).enumerate() {
        for ox in 0..g.wo {
            let patch = &mut out[(r * g.wo + ox) * rows..(r * g.wo + ox + 1) * rows];
            for ch in 0..g.c {
                let src = &xs[ch * g.h * g.w..(ch + 1) * g.h * g.w];
                for ki in 0..g.k {
                    let d = &mut patch[(ch * g.k + ki) * g.k..(ch * g.k + ki + 1) * g.k];
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= h {
                        d.fill(T::zero());
                        continue;
                    }
                    let srow = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if plain {
                        d.copy_from_slice(&srow[ox..ox + g.k]);
                    } else {
                        for (kj, v) in d.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            *v = if ix >= 0 && ix < w { srow[ix as usize] } else { T::zero() };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col_rows`], accumulated into one sample's gradient.
fn col2im_rows<T: Scalar>(cols: &[T], g: &Geometry, oy0: usize, oy1: usize, dxs: &mut [T]) {
    let len = (oy1 - oy0) * g.wo;
    let (h, w) = (g.h as isize, g.w as isize);
    let plain = g.stride == 1 && g.pad == 0;
    for ch in 0..g.c {
        let dst = &mut dxs[ch * g.h * g.w..(ch + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ch * g.k + ki) * g.k + kj;
                let src = &cols[row * len..(row + 1) * len];
                for (r, oy) in (oy0..oy1).enumerate() {
                    let s = &src[r * g.wo..(r + 1) * g.wo];
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let drow = &mut dst[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if plain {
                        for (a, &b) in drow[kj..kj + g.wo].iter_mut().zip(s) {
                            *a += b;
                        }
                    } else {
                        for (ox, &v) in s.iter().enumerate() {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < w {
                                drow[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Calls `f(sample, oy0, oy1)` over every row chunk.
fn for_chunks(g: &Geometry, mut f: impl FnMut(usize, usize, usize)) {
    let rb = g.row_block();
    for b in 0..g.n {
        let mut oy0 = 0;
        while oy0 < g.ho {
            let oy1 = (oy0 + rb).min(g.ho);
            f(b, oy0, oy1);
            oy0 = oy1;
        }
    }
}

/// `[n, c, l]` → `[c, n·l]`.
fn batch_to_channel_major<T: Scalar>(x: &[T], n: usize, c: usize, l: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            out[ch * n * l + b * l..ch * n * l + (b + 1) * l]
                .copy_from_slice(&x[(b * c + ch) * l..(b * c + ch + 1) * l]);
        }
    }
    out
}

/// `[c, n·l]` → `[n, c, l]`.
fn channel_major_to_batch<T: Scalar>(x: &[T], n: usize, c: usize, l: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            out[(b * c + ch) * l..(b * c + ch + 1) * l]
                .copy_from_slice(&x[ch * n * l + b * l..ch * n * l + (b + 1) * l]);
        }
    }
    out
}

fn bias_grad<T: Scalar>(g: &[T], n: usize, c: usize, l: usize) -> Tensor<T> {
    let mut db = vec![T::zero(); c];
    for b in 0..n {
        for (ch, acc) in db.iter_mut().enumerate() {
            *acc += g[(b * c + ch) * l..(b * c + ch + 1) * l].iter().copied().sum::<T>();
        }
    }
    Tensor::from_vec(&[c], db).expect("bias grad")
}

/// `out = w ⋆ x` for NCHW `x` described by `g`; `w` is `[cout, c·k·k]`.
fn conv_forward<T: Scalar>(x: &[T], g: &Geometry, w: &[T], cout: usize, out: &mut [T]) {
    let rows = g.rows();
    let l = g.ho * g.wo;
    let in_plane = g.c * g.h * g.w;
    let mut cols = vec![T::zero(); rows * g.row_block() * g.wo];
    for_chunks(g, |b, oy0, oy1| {
        let len = (oy1 - oy0) * g.wo;
        let cols = &mut cols[..rows * len];
        im2col_rows(&x[b * in_plane..(b + 1) * in_plane], g, oy0, oy1, cols);
        gemm_strided(
            cout,
            len,
            rows,
            Strided { data: w, rs: rows, cs: 1 },
            Strided { data: cols, rs: len, cs: 1 },
            &mut out[b * cout * l + oy0 * g.wo..],
            l,
            1,
            false,
        );
    });
}

/// `[cout, cin, k, k]` → `[cin, cout, k, k]` with both kernel axes reversed.
fn flip_transpose<T: Scalar>(w: &[T], cout: usize, cin: usize, k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); w.len()];
    for o in 0..cout {
        for i in 0..cin {
            for ki in 0..k {
                for kj in 0..k {
                    out[((i * cout + o) * k + (k - 1 - ki)) * k + (k - 1 - kj)] = w[((o * cin + i) * k + ki) * k + kj];
                }
            }
        }
    }
    out
}

impl<'t, T: Scalar> Var<'t, T> {
    /// 2-D cross-correlation with zero padding `pad`.
    ///
    /// `weight` is `[c_out, c_in, k, k]`, `bias` is `[c_out]`.
    pub fn conv2d(
        self,
        weight: Var<'t, T>,
        bias: Option<Var<'t, T>>,
        stride: usize,
        pad: usize,
    ) -> Result<Var<'t, T>> {
        let xv = self.value();
        let wv = weight.value();
        let (n, c, h, w) = xv.dims4()?;
        let (cout, cin, k, k2) = wv.dims4()?;
        if cin != c || k != k2 {
            return shape_err(format!(
                "conv2d: input has {c} channels, weight is {:?}",
                wv.shape()
            ));
        }
        if let Some(b) = &bias {
            if b.shape() != [cout] {
                return shape_err(format!("conv2d: bias shape {:?}", b.shape()));
            }
        }
        let geo = Geometry::new(n, c, h, w, k, stride, pad)?;
        let l = geo.ho * geo.wo;
        let rows = geo.rows();
        let in_plane = c * h * w;
        let mut out = vec![T::zero(); n * cout * l];
        conv_forward(xv.data(), &geo, wv.data(), cout, &mut out);
        if let Some(b) = &bias {
            let bv = b.value();
            for (i, plane) in out.chunks_mut(l).enumerate() {
                let bc = bv.data()[i % cout];
                plane.iter_mut().for_each(|v| *v += bc);
            }
        }
        let out = Tensor::from_vec(&[n, cout, geo.ho, geo.wo], out)?;
        let need = (self.requires_grad(), weight.requires_grad());
        let mut parents = vec![self, weight];
        parents.extend(bias);
        let has_bias = bias.is_some();
        Ok(self.tape().push(out, &parents, move || -> BackwardFn<T> {
            Box::new(move |g: &Tensor<T>| {
                let gd = g.data();
                let full = stride == 1 && pad < k;
                let mut dx = need.0.then(|| {
                    let mut dx = vec![T::zero(); n * in_plane];
                    if full {
                        // full correlation of the gradient with the flipped kernel
                        let gg = Geometry::new(n, cout, geo.ho, geo.wo, k, 1, k - 1 - pad).expect("dx geometry");
                        debug_assert_eq!((gg.ho, gg.wo), (h, w));
                        conv_forward(gd, &gg, &flip_transpose(wv.data(), cout, c, k), c, &mut dx);
                    }
                    dx
                });
                let mut dw = need.1.then(|| vec![T::zero(); cout * rows]);
                let mut buf = vec![T::zero(); rows * geo.row_block() * geo.wo];
                for_chunks(&geo, |b, oy0, oy1| {
                    let len = (oy1 - oy0) * geo.wo;
                    let buf = &mut buf[..rows * len];
                    let gchunk = Strided { data: &gd[b * cout * l + oy0 * geo.wo..], rs: l, cs: 1 };
                    if let Some(dw) = dw.as_mut() {
                        im2row_rows(&xv.data()[b * in_plane..(b + 1) * in_plane], &geo, oy0, oy1, buf);
                        gemm_strided(
                            cout,
                            rows,
                            len,
                            gchunk,
                            Strided { data: buf, rs: rows, cs: 1 },
                            dw,
                            rows,
                            1,
                            true,
                        );
                    }
                    if let Some(dx) = dx.as_mut().filter(|_| !full) {
                        gemm_strided(
                            rows,
                            len,
                            cout,
                            Strided { data: wv.data(), rs: 1, cs: rows },
                            gchunk,
                            buf,
                            len,
                            1,
                            false,
                        );
                        col2im_rows(buf, &geo, oy0, oy1, &mut dx[b * in_plane..(b + 1) * in_plane]);
                    }
                });
                let mut res = vec![
                    dx.map(|d| Tensor::from_vec(&[n, c, h, w], d).expect("conv dx")),
                    dw.map(|d| Tensor::from_vec(&[cout, c, k, k], d).expect("conv dw")),
                ];
                if has_bias {
                    res.push(Some(bias_grad(gd, n, cout, l)));
                }
                res
            })
        }))
    }

    /// Transposed convolution (fractionally strided).
    ///
    /// `weight` is `[c_in, c_out, k, k]`; the output side is
    /// `(in - 1)·stride − 2·pad + k + output_padding`.
    pub fn conv_transpose2d(
        self,
        weight: Var<'t, T>,
        bias: Option<Var<'t, T>>,
        stride: usize,
        pad: usize,
        output_padding: usize,
    ) -> Result<Var<'t, T>> {
        let xv = self.value();
        let wv = weight.value();
        let (n, cin, h, w) = xv.dims4()?;
        let (wcin, cout, k, k2) = wv.dims4()?;
        if wcin != cin || k != k2 {
            return shape_err(format!(
                "conv_transpose2d: input has {cin} channels, weight is {:?}",
                wv.shape()
            ));
        }
        if output_padding >= stride {
            return shape_err("output_padding must be smaller than stride");
        }
        let ho = ((h - 1) * stride + k + output_padding)
            .checked_sub(2 * pad)
            .ok_or_else(|| crate::Error::Shape("transposed conv output is empty".into()))?;
        let wo = ((w - 1) * stride + k + output_padding)
            .checked_sub(2 * pad)
            .ok_or_else(|| crate::Error::Shape("transposed conv output is empty".into()))?;
        let geo = Geometry::new(n, cout, ho, wo, k, stride, pad)?;
        debug_assert_eq!((geo.ho, geo.wo), (h, w));
        let l = h * w;
        let xm = batch_to_channel_major(xv.data(), n, cin, l);
        let mut cols = vec![T::zero(); geo.rows() * geo.cols()];
        gemm(true, false, geo.rows(), geo.cols(), cin, wv.data(), &xm, &mut cols, false);
        let mut out = col2im(&cols, &geo);
        if let Some(b) = &bias {
            let bv = b.value();
            for bi in 0..n {
                for ch in 0..cout {
                    let off = (bi * cout + ch) * ho * wo;
                    let bc = bv.data()[ch];
                    out[off..off + ho * wo].iter_mut().for_each(|v| *v += bc);
                }
            }
        }
        let out = Tensor::from_vec(&[n, cout, ho, wo], out)?;
        let need = (self.requires_grad(), weight.requires_grad());
        let mut parents = vec![self, weight];
        parents.extend(bias);
        let has_bias = bias.is_some();
        Ok(self.tape().push(out, &parents, move || -> BackwardFn<T> {
            Box::new(move |g: &Tensor<T>| {
                let gcols = im2col(g.data(), &geo);
                let dx = need.0.then(|| {
                    let mut dxm = vec![T::zero(); cin * geo.cols()];
                    gemm(false, false, cin, geo.cols(), geo.rows(), wv.data(), &gcols, &mut dxm, false);
                    Tensor::from_vec(&[n, cin, h, w], channel_major_to_batch(&dxm, n, cin, l))
                        .expect("deconv dx")
                });
                let dw = need.1.then(|| {
                    let mut dw = vec![T::zero(); cin * geo.rows()];
                    gemm(false, true, cin, geo.rows(), geo.cols(), &xm, &gcols, &mut dw, false);
                    Tensor::from_vec(&[cin, cout, k, k], dw).expect("deconv dw")
                });
                let mut res = vec![dx, dw];
                if has_bias {
                    res.push(Some(bias_grad(g.data(), n, cout, ho * wo)));
                }
                res
            })
        }))
    }

    /// Mirror padding without edge repetition (`abc` → `cb|abc|ba` for `p = 2`).
    pub fn pad_reflect(self, p: usize) -> Result<Var<'t, T>> {
        if p == 0 {
            return Ok(self);
        }
        let xv = self.value();
        let (n, c, h, w) = xv.dims4()?;
        if p >= h || p >= w {
            return shape_err(format!("reflect padding {p} needs an input larger than {h}x{w}"));
        }
        let (ho, wo) = (h + 2 * p, w + 2 * p);
        let ymap: Vec<usize> = (0..ho).map(|i| reflect_index(i as isize - p as isize, h)).collect();
        let xmap: Vec<usize> = (0..wo).map(|i| reflect_index(i as isize - p as isize, w)).collect();
        let mut out = vec![T::zero(); n * c * ho * wo];
        for plane in 0..n * c {
            let src = &xv.data()[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out[plane * ho * wo..(plane + 1) * ho * wo];
            for (oy, &sy) in ymap.iter().enumerate() {
                for (ox, &sx) in xmap.iter().enumerate() {
                    dst[oy * wo + ox] = src[sy * w + sx];
                }
            }
        }
        let out = Tensor::from_vec(&[n, c, ho, wo], out)?;
        Ok(self.tape().push(out, &[self], move || -> BackwardFn<T> {
            Box::new(move |g: &Tensor<T>| {
                let mut dx = vec![T::zero(); n * c * h * w];
                for plane in 0..n * c {
                    let src = &g.data()[plane * ho * wo..(plane + 1) * ho * wo];
                    let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
                    for (oy, &sy) in ymap.iter().enumerate() {
                        for (ox, &sx) in xmap.iter().enumerate() {
                            dst[sy * w + sx] += src[oy * wo + ox];
                        }
                    }
                }
                vec![Some(Tensor::from_vec(&[n, c, h, w], dx).expect("pad grad"))]
            })
        }))
    }

    /// Nearest-neighbour ×2 upsampling.
    pub fn upsample_nearest2(self) -> Result<Var<'t, T>> {
        let xv = self.value();
        let (n, c, h, w) = xv.dims4()?;
        let (ho, wo) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); n * c * ho * wo];
        for plane in 0..n * c {
            let src = &xv.data()[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out[plane * ho * wo..(plane + 1) * ho * wo];
            for oy in 0..ho {
                for ox in 0..wo {
                    dst[oy * wo + ox] = src[(oy / 2) * w + ox / 2];
                }
            }
        }
        let out = Tensor::from_vec(&[n, c, ho, wo], out)?;
        Ok(self.tape().push(out, &[self], move || -> BackwardFn<T> {
            Box::new(move |g: &Tensor<T>| {
                let mut dx = vec![T::zero(); n * c * h * w];
                for plane in 0..n * c {
                    let src = &g.data()[plane * ho * wo..(plane + 1) * ho * wo];
                    let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
                    for oy in 0..ho {
                        for ox in 0..wo {
                            dst[(oy / 2) * w + ox / 2] += src[oy * wo + ox];
                        }
                    }
                }
                vec![Some(Tensor::from_vec(&[n, c, h, w], dx).expect("upsample grad"))]
            })
        }))
    }
}

/// Index into `0..len` under mirror reflection (no edge repeat).
pub fn reflect_index(i: isize, len: usize) -> usize {
    let len = len as isize;
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let mut j = i.rem_euclid(period);
    if j >= len {
        j = period - j;
    }
    j as usize
}
