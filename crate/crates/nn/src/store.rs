use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Named parameters with same-shaped gradient slots.
///
/// Weights are drawn from `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))` in
/// creation order from a generator seeded with `seed`.
#[derive(Debug, Clone)]
pub struct ParameterStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    lookup: BTreeMap<String, ParamId>,
    seed: u64,
    rng: ChaCha8Rng,
}

impl ParameterStore {
    pub fn new(seed: u64) -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            lookup: BTreeMap::new(),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId, NnError> {
        if self.lookup.contains_key(name) {
            return Err(NnError::DuplicateParameter(name.to_string()));
        }
        let id = ParamId(self.values.len());
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), id);
        Ok(id)
    }

    /// Parameter initialized uniformly in `±1/sqrt(fan_in)`.
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<ParamId, NnError> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-bound..bound)).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn add_constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId, NnError> {
        self.insert(name, Tensor::filled(shape, value))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    /// `(name, value)` pairs in creation order.
    pub fn named_values(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Overwrite values from `(name, tensor)` pairs; every parameter must
    /// be present with the same shape.
    pub fn load<'a>(
        &mut self,
        tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>,
    ) -> Result<(), NnError> {
        let mut seen = vec![false; self.values.len()];
        for (name, t) in tensors {
            let id = self
                .id(name)
                .ok_or_else(|| NnError::UnknownParameter(name.to_string()))?;
            if self.values[id.0].shape() != t.shape() {
                return Err(NnError::ShapeMismatch {
                    op: "load",
                    detail: format!(
                        "`{name}` is {:?} in the model, {:?} in the checkpoint",
                        self.values[id.0].shape(),
                        t.shape()
                    ),
                });
            }
            self.values[id.0] = t.clone();
            seen[id.0] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(NnError::UnknownParameter(format!(
                "`{}` missing from checkpoint",
                self.names[missing]
            )));
        }
        Ok(())
    }

    /// Copy of all parameter values, for restoring a best checkpoint.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.values.clone()
    }

    pub fn restore(&mut self, snapshot: Vec<Tensor>) {
        assert_eq!(snapshot.len(), self.values.len(), "snapshot size");
        self.values = snapshot;
    }
}
