use super::{BackwardFn, Var};
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Non-overlapping window reduction keeping the index of the selected cell.
fn window_select<T: Scalar>(
    x: &Tensor<T>,
    window: usize,
    floor: bool,
    better: impl Fn(T, T) -> bool,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = x.dims4()?;
    if window == 0 {
        return shape_err("pooling window must be positive");
    }
    if !floor && (h % window != 0 || w % window != 0) {
        return shape_err(format!("map {h}x{w} is not divisible by pooling window {window}"));
    }
    let (ho, wo) = (h / window, w / window);
    if ho == 0 || wo == 0 {
        return shape_err(format!("map {h}x{w} smaller than pooling window {window}"));
    }
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut idx = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                // Row-major scan; strict comparison keeps the first cell on ties.
                let mut best_i = base + oy * window * w + ox * window;
                let mut best = x.data()[best_i];
                for dy in 0..window {
                    for dx in 0..window {
                        let i = base + (oy * window + dy) * w + ox * window + dx;
                        let v = x.data()[i];
                        if better(v, best) {
                            best = v;
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                idx.push(best_i);
            }
        }
    }
    Ok((Tensor::from_vec(&[n, c, ho, wo], out)?, idx))
}

fn scatter_op<'t, T: Scalar>(x: Var<'t, T>, out: Tensor<T>, idx: Vec<usize>) -> Var<'t, T> {
    let in_shape = x.shape();
    x.tape().push(out, &[x], move || -> BackwardFn<T> {
        Box::new(move |g: &Tensor<T>| {
            let mut dx = Tensor::zeros(&in_shape);
            for (&i, &gv) in idx.iter().zip(g.data()) {
                dx.data_mut()[i] += gv;
            }
            vec![Some(dx)]
        })
    })
}

impl<'t, T: Scalar> Var<'t, T> {
    /// Window-wise minimum over non-overlapping `window × window` blocks.
    /// The gradient reaches exactly one cell per window (first minimum in
    /// row-major order).
    pub fn min_pool(self, window: usize) -> Result<Var<'t, T>> {
        let (out, idx) = window_select(&self.value(), window, false, |v, best| v < best)?;
        Ok(scatter_op(self, out, idx))
    }

    /// 2×2 stride-2 max pooling; odd trailing rows/columns are dropped.
    pub fn max_pool2(self) -> Result<Var<'t, T>> {
        let (out, idx) = window_select(&self.value(), 2, true, |v, best| v > best)?;
        Ok(scatter_op(self, out, idx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;

    #[test]
    fn min_pool_single_outlier() {
        let mut m = Tensor::<f64>::ones(&[1, 1, 8, 8]);
        m.data_mut()[5 * 8 + 2] = -5.0;
        let tape = Tape::new();
        let p = tape.constant(m).min_pool(4).unwrap();
        assert_eq!(p.value().data(), &[1.0, 1.0, -5.0, 1.0]);
    }

    #[test]
    fn min_pool_rejects_indivisible_maps() {
        let tape = Tape::<f32>::new();
        assert!(tape.constant(Tensor::ones(&[1, 1, 6, 6])).min_pool(4).is_err());
    }

    #[test]
    fn tie_gradient_goes_to_first_cell() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::ones(&[1, 1, 2, 2]));
        let loss = x.min_pool(2).unwrap().sum();
        let g = tape.backward(loss);
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn max_pool_floors_odd_sizes() {
        let tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::from_fn(&[1, 1, 5, 5], |i| i as f32));
        let p = x.max_pool2().unwrap();
        assert_eq!(p.shape(), vec![1, 1, 2, 2]);
        assert_eq!(p.value().data(), &[6.0, 8.0, 16.0, 18.0]);
    }
}
