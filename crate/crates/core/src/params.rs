//! Named parameter and buffer storage.

use std::collections::{BTreeMap, HashMap};

use crate::autograd::{BatchStats, Grads, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Trainable parameters plus non-trainable buffers (running statistics),
/// both keyed by dotted layer names such as `G.E1.conv.weight`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Tensor<T>>,
    buffers: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: BTreeMap::new(),
            buffers: BTreeMap::new(),
        }
    }

    pub fn insert_param(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.params.insert(name.into(), value);
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.buffers.insert(name.into(), value);
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.get_mut(name)
    }

    pub fn buffer(&self, name: &str) -> Option<&Tensor<T>> {
        self.buffers.get(name)
    }

    pub fn params(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.params.iter()
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.buffers.iter()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.params.iter_mut()
    }

    /// Total number of trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    /// Places every parameter on `tape`, as a differentiable leaf when
    /// `trainable`, otherwise as a constant.
    pub fn bind<'s, 't>(&'s self, tape: &'t Tape<T>, trainable: bool) -> Bound<'s, 't, T> {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| {
                let var = if trainable {
                    tape.leaf(v.clone())
                } else {
                    tape.constant(v.clone())
                };
                (k.clone(), var)
            })
            .collect();
        Bound { store: self, vars }
    }

    /// Exponential moving update of `<layer>.running_mean/var`.
    pub fn update_running(&mut self, layer: &str, stats: &BatchStats<T>, momentum: T) -> Result<()> {
        for (suffix, batch) in [("running_mean", &stats.mean), ("running_var", &stats.var)] {
            let key = format!("{layer}.{suffix}");
            let buf = self
                .buffers
                .get_mut(&key)
                .ok_or_else(|| Error::Config(format!("missing buffer `{key}`")))?;
            for (r, &b) in buf.data_mut().iter_mut().zip(batch.data()) {
                *r = (T::one() - momentum) * *r + momentum * b;
            }
        }
        Ok(())
    }

    /// Checks that `other` has exactly the same names and shapes.
    pub fn check_compatible(&self, other: &ParamStore<T>) -> Result<()> {
        for (kind, a, b) in [
            ("parameter", &self.params, &other.params),
            ("buffer", &self.buffers, &other.buffers),
        ] {
            for (k, v) in a {
                match b.get(k) {
                    None => return Err(Error::Config(format!("{kind} `{k}` missing"))),
                    Some(o) if o.shape() != v.shape() => {
                        return Err(Error::Config(format!(
                            "{kind} `{k}` has shape {:?}, expected {:?}",
                            o.shape(),
                            v.shape()
                        )))
                    }
                    _ => {}
                }
            }
            if let Some(extra) = b.keys().find(|k| !a.contains_key(*k)) {
                return Err(Error::Config(format!("unexpected {kind} `{extra}`")));
            }
        }
        Ok(())
    }
}

/// Parameters of one store placed on a tape.
pub struct Bound<'s, 't, T: Scalar> {
    store: &'s ParamStore<T>,
    vars: HashMap<String, Var<'t, T>>,
}

impl<'s, 't, T: Scalar> Bound<'s, 't, T> {
    pub fn get(&self, name: &str) -> Result<Var<'t, T>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn buffer(&self, name: &str) -> Result<&'s Tensor<T>> {
        self.store
            .buffer(name)
            .ok_or_else(|| Error::Config(format!("missing buffer `{name}`")))
    }

    /// Pulls the gradient of every bound parameter out of `grads`.
    pub fn collect_grads(&self, grads: &mut Grads<T>) -> BTreeMap<String, Tensor<T>> {
        self.vars
            .iter()
            .filter_map(|(k, v)| grads.take(*v).map(|g| (k.clone(), g)))
            .collect()
    }
}
