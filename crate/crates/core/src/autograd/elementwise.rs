use std::rc::Rc;

use super::{BackwardFn, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn unary<'t, T: Scalar>(
    x: Var<'t, T>,
    f: impl Fn(T) -> T,
    df: impl Fn(T, T) -> T + 'static,
) -> Var<'t, T> {
    let xv = x.value();
    let out = xv.map(f);
    let tape = x.tape();
    let outv = Rc::new(out.clone());
    tape.push(out, &[x], move || -> BackwardFn<T> {
        // df receives (input, output)
        Box::new(move |g: &Tensor<T>| {
            let d = Tensor::from_fn(g.shape(), |i| {
                g.data()[i] * df(xv.data()[i], outv.data()[i])
            });
            vec![Some(d)]
        })
    })
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn add(self, other: Var<'t, T>) -> Var<'t, T> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.shape(), b.shape(), "add: shape mismatch");
        let out = a.zip_map(&b, |x, y| x + y);
        self.tape().push(out, &[self, other], || {
            Box::new(|g: &Tensor<T>| vec![Some(g.clone()), Some(g.clone())])
        })
    }

    pub fn sub(self, other: Var<'t, T>) -> Var<'t, T> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.shape(), b.shape(), "sub: shape mismatch");
        let out = a.zip_map(&b, |x, y| x - y);
        self.tape().push(out, &[self, other], || {
            Box::new(|g: &Tensor<T>| vec![Some(g.clone()), Some(g.map(|v| -v))])
        })
    }

    pub fn mul(self, other: Var<'t, T>) -> Var<'t, T> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.shape(), b.shape(), "mul: shape mismatch");
        let out = a.zip_map(&b, |x, y| x * y);
        self.tape().push(out, &[self, other], move || {
            Box::new(move |g: &Tensor<T>| {
                vec![
                    Some(g.zip_map(&b, |gv, bv| gv * bv)),
                    Some(g.zip_map(&a, |gv, av| gv * av)),
                ]
            })
        })
    }

    pub fn scale(self, s: T) -> Var<'t, T> {
        let out = self.value().map(|v| v * s);
        self.tape().push(out, &[self], move || {
            Box::new(move |g: &Tensor<T>| vec![Some(g.map(|v| v * s))])
        })
    }

    pub fn relu(self) -> Var<'t, T> {
        unary(
            self,
            |v| if v > T::zero() { v } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(self, slope: T) -> Var<'t, T> {
        unary(
            self,
            move |v| if v > T::zero() { v } else { v * slope },
            move |x, _| if x > T::zero() { T::one() } else { slope },
        )
    }

    pub fn sigmoid(self) -> Var<'t, T> {
        unary(self, sigmoid, |_, y| y * (T::one() - y))
    }

    /// `ln(1 + mu·x) / ln(1 + mu)`, elementwise.
    pub fn mu_law(self, mu: T) -> Var<'t, T> {
        let denom = mu.ln_1p();
        unary(
            self,
            move |v| (mu * v).ln_1p() / denom,
            move |x, _| mu / ((T::one() + mu * x) * denom),
        )
    }

    pub fn sum(self) -> Var<'t, T> {
        let v = self.value();
        let shape = v.shape().to_vec();
        let out = Tensor::scalar(v.sum());
        self.tape().push(out, &[self], move || {
            Box::new(move |g: &Tensor<T>| vec![Some(Tensor::full(&shape, g.item()))])
        })
    }

    pub fn mean(self) -> Var<'t, T> {
        let n = T::lit(self.value().len() as f64);
        self.sum().scale(T::one() / n)
    }

    /// `x[:, c] * scale[c] + shift[c]` with constant per-channel coefficients.
    pub fn channel_affine(self, scale: &[T], shift: &[T]) -> Var<'t, T> {
        let v = self.value();
        let (n, c, h, w) = v.dims4().expect("channel_affine needs NCHW");
        assert_eq!(scale.len(), c);
        assert_eq!(shift.len(), c);
        let hw = h * w;
        let mut out = (*v).clone();
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * hw;
                for x in &mut out.data_mut()[off..off + hw] {
                    *x = *x * scale[ch] + shift[ch];
                }
            }
        }
        let scale = scale.to_vec();
        self.tape().push(out, &[self], move || {
            Box::new(move |g: &Tensor<T>| {
                let mut d = g.clone();
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * hw;
                        for x in &mut d.data_mut()[off..off + hw] {
                            *x *= scale[ch];
                        }
                    }
                }
                vec![Some(d)]
            })
        })
    }

    /// Concatenates NCHW tensors along the channel axis.
    pub fn concat_channels(parts: &[Var<'t, T>]) -> Var<'t, T> {
        assert!(!parts.is_empty(), "concat of nothing");
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let (n, _, h, w) = values[0].dims4().expect("concat needs NCHW");
        let chans: Vec<usize> = values
            .iter()
            .map(|v| {
                let (pn, pc, ph, pw) = v.dims4().expect("concat needs NCHW");
                assert_eq!((pn, ph, pw), (n, h, w), "concat: spatial/batch mismatch");
                pc
            })
            .collect();
        let total: usize = chans.iter().sum();
        let hw = h * w;
        let mut out = Tensor::zeros(&[n, total, h, w]);
        for b in 0..n {
            let mut c0 = 0;
            for (v, &pc) in values.iter().zip(&chans) {
                let src = &v.data()[b * pc * hw..(b + 1) * pc * hw];
                let dst = (b * total + c0) * hw;
                out.data_mut()[dst..dst + pc * hw].copy_from_slice(src);
                c0 += pc;
            }
        }
        parts[0].tape().push(out, parts, move || {
            Box::new(move |g: &Tensor<T>| {
                let mut c0 = 0;
                chans
                    .iter()
                    .map(|&pc| {
                        let mut d = Vec::with_capacity(n * pc * hw);
                        for b in 0..n {
                            let s = (b * total + c0) * hw;
                            d.extend_from_slice(&g.data()[s..s + pc * hw]);
                        }
                        c0 += pc;
                        Some(Tensor::from_vec(&[n, pc, h, w], d).expect("concat grad"))
                    })
                    .collect()
            })
        })
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}
