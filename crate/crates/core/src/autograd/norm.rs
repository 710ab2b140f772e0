use serde::{Deserialize, Serialize};

use super::{BackwardFn, Var};
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Which statistics batch normalization uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMode {
    /// Per-batch statistics.
    Train,
    /// Stored running statistics.
    Eval,
}

/// Batch statistics produced in [`NormMode::Train`]; `var` is unbiased.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

impl<'t, T: Scalar> Var<'t, T> {
    /// Per-channel batch normalization of an NCHW tensor.
    ///
    /// In eval mode `running` must hold `(mean, var)`. Returns the batch
    /// statistics in train mode so the caller can fold them into its running
    /// estimates.
    pub fn batch_norm(
        self,
        gamma: Var<'t, T>,
        beta: Var<'t, T>,
        mode: NormMode,
        running: Option<(&Tensor<T>, &Tensor<T>)>,
        eps: T,
    ) -> Result<(Var<'t, T>, Option<BatchStats<T>>)> {
        let xv = self.value();
        let (n, c, h, w) = xv.dims4()?;
        let (gv, bv) = (gamma.value(), beta.value());
        if gv.shape() != [c] || bv.shape() != [c] {
            return shape_err(format!(
                "batch_norm: {c} channels but gamma {:?} / beta {:?}",
                gv.shape(),
                bv.shape()
            ));
        }
        let hw = h * w;
        let m = n * hw;
        let mf = T::lit(m as f64);
        let (mean, var_biased, stats) = match mode {
            NormMode::Train => {
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for ch in 0..c {
                    let mut s = T::zero();
                    for b in 0..n {
                        let off = (b * c + ch) * hw;
                        s += xv.data()[off..off + hw].iter().copied().sum::<T>();
                    }
                    let mu = s / mf;
                    let mut q = T::zero();
                    for b in 0..n {
                        let off = (b * c + ch) * hw;
                        q += xv.data()[off..off + hw]
                            .iter()
                            .map(|&v| (v - mu) * (v - mu))
                            .sum::<T>();
                    }
                    mean[ch] = mu;
                    var[ch] = q / mf;
                }
                let correction = if m > 1 { mf / T::lit((m - 1) as f64) } else { T::one() };
                let stats = BatchStats {
                    mean: Tensor::from_vec(&[c], mean.clone())?,
                    var: Tensor::from_vec(&[c], var.iter().map(|&v| v * correction).collect())?,
                };
                (mean, var, Some(stats))
            }
            NormMode::Eval => {
                let Some((rm, rv)) = running else {
                    return shape_err("batch_norm eval mode needs running statistics");
                };
                if rm.shape() != [c] || rv.shape() != [c] {
                    return shape_err("batch_norm: running statistics shape");
                }
                (rm.data().to_vec(), rv.data().to_vec(), None)
            }
        };
        let inv_std: Vec<T> = var_biased.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * hw;
                let (mu, is, g, be) = (mean[ch], inv_std[ch], gv.data()[ch], bv.data()[ch]);
                for i in off..off + hw {
                    let xh = (xv.data()[i] - mu) * is;
                    xhat[i] = xh;
                    out[i] = g * xh + be;
                }
            }
        }
        let out = Tensor::from_vec(&[n, c, h, w], out)?;
        let need_x = self.requires_grad();
        let var = self.tape().push(out, &[self, gamma, beta], move || -> BackwardFn<T> {
            Box::new(move |g: &Tensor<T>| {
                let gd = g.data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * hw;
                        for i in off..off + hw {
                            dbeta[ch] += gd[i];
                            dgamma[ch] += gd[i] * xhat[i];
                        }
                    }
                }
                let dx = need_x.then(|| {
                    let mut dx = vec![T::zero(); gd.len()];
                    for ch in 0..c {
                        let gam = gv.data()[ch];
                        let is = inv_std[ch];
                        match mode {
                            NormMode::Train => {
                                // dxhat = g·gamma; dx = is/M · (M·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
                                let sum_dxhat = dbeta[ch] * gam;
                                let sum_dxhat_xhat = dgamma[ch] * gam;
                                for b in 0..n {
                                    let off = (b * c + ch) * hw;
                                    for i in off..off + hw {
                                        let dxhat = gd[i] * gam;
                                        dx[i] = is / mf
                                            * (mf * dxhat - sum_dxhat - xhat[i] * sum_dxhat_xhat);
                                    }
                                }
                            }
                            NormMode::Eval => {
                                for b in 0..n {
                                    let off = (b * c + ch) * hw;
                                    for i in off..off + hw {
                                        dx[i] = gd[i] * gam * is;
                                    }
                                }
                            }
                        }
                    }
                    Tensor::from_vec(&[n, c, h, w], dx).expect("bn dx")
                });
                vec![
                    dx,
                    Some(Tensor::from_vec(&[c], dgamma).expect("bn dgamma")),
                    Some(Tensor::from_vec(&[c], dbeta).expect("bn dbeta")),
                ]
            })
        });
        Ok((var, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;

    #[test]
    fn train_mode_normalizes_each_channel() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_fn(&[2, 2, 3, 3], |i| (i as f64 * 1.7).sin() * 4.0 + 1.0));
        let (y, stats) = x
            .batch_norm(
                tape.constant(Tensor::ones(&[2])),
                tape.constant(Tensor::zeros(&[2])),
                NormMode::Train,
                None,
                0.0,
            )
            .unwrap();
        let yv = y.value();
        for ch in 0..2 {
            let vals: Vec<f64> = (0..2)
                .flat_map(|b| yv.data()[(b * 2 + ch) * 9..(b * 2 + ch + 1) * 9].to_vec())
                .collect();
            let mean: f64 = vals.iter().sum::<f64>() / 18.0;
            let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 18.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-10);
        }
        assert_eq!(stats.unwrap().mean.shape(), &[2]);
    }

    #[test]
    fn eval_mode_requires_running_stats() {
        let tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::ones(&[1, 1, 2, 2]));
        let g = tape.constant(Tensor::ones(&[1]));
        let b = tape.constant(Tensor::zeros(&[1]));
        assert!(x.batch_norm(g, b, NormMode::Eval, None, 1e-5).is_err());
        let rm = Tensor::full(&[1], 1.0);
        let rv = Tensor::full(&[1], 4.0);
        let (y, s) = x.batch_norm(g, b, NormMode::Eval, Some((&rm, &rv)), 0.0).unwrap();
        assert!(s.is_none());
        assert!(y.value().data().iter().all(|&v| v == 0.0));
    }
}
