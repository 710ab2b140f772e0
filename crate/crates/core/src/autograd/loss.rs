use super::elementwise::sigmoid;
use super::{BackwardFn, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `ln(1 + e^v)` without overflow.
#[inline]
pub(crate) fn softplus<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    /// Mean binary cross-entropy of raw logits against a constant label.
    ///
    /// Per element: `-(t·ln σ(z) + (1 − t)·ln(1 − σ(z)))`, evaluated as
    /// `t·softplus(−z) + (1 − t)·softplus(z)`.
    pub fn bce_with_logits(self, target: T) -> Var<'t, T> {
        let z = self.value();
        let n = T::lit(z.len() as f64);
        let one = T::one();
        let loss: T = z
            .data()
            .iter()
            .map(|&v| target * softplus(-v) + (one - target) * softplus(v))
            .sum::<T>()
            / n;
        self.tape().push(Tensor::scalar(loss), &[self], move || -> BackwardFn<T> {
            Box::new(move |g: &Tensor<T>| {
                let s = g.item() / n;
                vec![Some(z.map(|v| (sigmoid(v) - target) * s))]
            })
        })
    }

    /// Mean absolute difference.
    pub fn l1_mean(self, other: Var<'t, T>) -> Var<'t, T> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.shape(), b.shape(), "l1: shape mismatch");
        let n = T::lit(a.len() as f64);
        let loss = a.data().iter().zip(b.data()).map(|(&x, &y)| (x - y).abs()).sum::<T>() / n;
        self.tape().push(Tensor::scalar(loss), &[self, other], move || -> BackwardFn<T> {
            Box::new(move |g: &Tensor<T>| {
                let s = g.item() / n;
                let d = a.zip_map(&b, |x, y| {
                    if x > y {
                        s
                    } else if x < y {
                        -s
                    } else {
                        T::zero()
                    }
                });
                let nd = d.map(|v| -v);
                vec![Some(d), Some(nd)]
            })
        })
    }

    /// Mean squared difference.
    pub fn mse_mean(self, other: Var<'t, T>) -> Var<'t, T> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.shape(), b.shape(), "mse: shape mismatch");
        let n = T::lit(a.len() as f64);
        let loss = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum::<T>()
            / n;
        self.tape().push(Tensor::scalar(loss), &[self, other], move || -> BackwardFn<T> {
            Box::new(move |g: &Tensor<T>| {
                let s = T::lit(2.0) * g.item() / n;
                let d = a.zip_map(&b, |x, y| (x - y) * s);
                let nd = d.map(|v| -v);
                vec![Some(d), Some(nd)]
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;

    #[test]
    fn bce_at_zero_logit_is_ln2() {
        let tape = Tape::<f64>::new();
        let z = tape.constant(Tensor::zeros(&[1, 1, 3, 3]));
        assert!((z.bce_with_logits(1.0).value().item() - 2f64.ln()).abs() < 1e-15);
        assert!((z.bce_with_logits(0.0).value().item() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(1000.0f64) - 1000.0).abs() < 1e-12);
        assert!(softplus(-1000.0f64) >= 0.0);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
    }
}
