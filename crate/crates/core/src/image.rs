//! Planar (channel-major) images.

use crate::autograd::reflect_index;
use crate::error::{invalid, shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `channels × height × width` image stored plane by plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width * channels {
            return shape_err(format!(
                "{channels}x{height}x{width} image needs {} values, got {}",
                height * width * channels,
                data.len()
            ));
        }
        Ok(Image { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, T::zero())
    }

    pub fn filled(height: usize, width: usize, channels: usize, v: T) -> Self {
        Image {
            height,
            width,
            channels,
            data: vec![v; height * width * channels],
        }
    }

    /// Builds from `f(channel, y, x)`.
    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Image { height, width, channels, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn same_shape(&self, other: &Image<T>) -> bool {
        self.dims() == other.dims()
    }

    /// `[1, C, H, W]` tensor with the same element order.
    pub fn to_tensor<U: Scalar>(&self) -> Tensor<U> {
        Tensor::from_vec(
            &[1, self.channels, self.height, self.width],
            self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        )
        .expect("image to tensor")
    }

    /// Batch element `n` of an NCHW tensor.
    pub fn from_tensor<U: Scalar>(t: &Tensor<U>, n: usize) -> Result<Self> {
        let s = t.sample(n)?;
        let (_, c, h, w) = s.dims4()?;
        Image::new(h, w, c, s.data().iter().map(|v| T::lit(v.as_f64())).collect())
    }

    /// Channel-concatenation of equally sized images.
    pub fn concat_channels(parts: &[&Image<T>]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return invalid("concat of zero images");
        };
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if (p.height, p.width) != (first.height, first.width) {
                return shape_err("concat_channels: spatial size mismatch");
            }
            data.extend_from_slice(&p.data);
            channels += p.channels;
        }
        Image::new(first.height, first.width, channels, data)
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return shape_err(format!(
                "crop {height}x{width}+{top}+{left} outside {}x{} image",
                self.height, self.width
            ));
        }
        Ok(Image::from_fn(height, width, self.channels, |c, y, x| {
            self.get(c, top + y, left + x)
        }))
    }

    pub fn flip_horizontal(&self) -> Self {
        Image::from_fn(self.height, self.width, self.channels, |c, y, x| {
            self.get(c, y, self.width - 1 - x)
        })
    }

    /// Quarter turn counter-clockwise.
    pub fn rotate90(&self) -> Self {
        Image::from_fn(self.width, self.height, self.channels, |c, y, x| {
            self.get(c, x, self.width - 1 - y)
        })
    }

    /// Mirror-pads bottom/right so both sides become multiples of `m`.
    pub fn pad_reflect_to_multiple(&self, m: usize) -> Result<Self> {
        let h = self.height.div_ceil(m) * m;
        let w = self.width.div_ceil(m) * m;
        if h - self.height >= self.height.max(2) || w - self.width >= self.width.max(2) {
            return shape_err("image too small to reflect-pad");
        }
        Ok(Image::from_fn(h, w, self.channels, |c, y, x| {
            self.get(
                c,
                reflect_index(y as isize, self.height),
                reflect_index(x as isize, self.width),
            )
        }))
    }
}
