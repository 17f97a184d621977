use std::ops::Index;

use super::{Gradients, Tape, Tensor, TensorError, Var};

/// Index of a tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named learnable tensors of one model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

/// Tape handles for every tensor of a [`ParamSet`], in registration order.
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self(vars)
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor.param());
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn bind(&self, tape: &mut Tape) -> Result<Bound, TensorError> {
        Self::bind_tensors(&self.tensors, tape)
    }

    pub fn bind_tensors(tensors: &[Tensor], tape: &mut Tape) -> Result<Bound, TensorError> {
        tensors.iter().map(|t| tape.leaf(t)).collect::<Result<Vec<_>, _>>().map(Bound)
    }

    /// Copies gradients for `bound` into each tensor's `grad`; tensors the loss
    /// did not reach get a zero gradient.
    pub fn set_grads(&mut self, grads: &Gradients, bound: &Bound) {
        for (t, v) in self.tensors.iter_mut().zip(&bound.0) {
            let g = grads.get(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]);
            t.grad = Some(g);
        }
    }

    /// Replaces values from `(name, tensor)` records; names and shapes must match exactly.
    pub fn load(&mut self, records: &[(String, Tensor)]) -> Result<(), TensorError> {
        if records.len() != self.tensors.len() {
            return Err(TensorError::ShapeMismatch {
                op: "ParamSet::load",
                left: vec![self.tensors.len()],
                right: vec![records.len()],
            });
        }
        for ((name, t), (rname, r)) in self.names.iter().zip(self.tensors.iter_mut()).zip(records) {
            if name != rname || t.shape() != r.shape() {
                return Err(TensorError::ShapeMismatch { op: "ParamSet::load", left: t.shape().to_vec(), right: r.shape().to_vec() });
            }
            t.values_mut().copy_from_slice(r.values());
        }
        Ok(())
    }

    pub fn records(&self) -> Vec<(String, Tensor)> {
        self.names.iter().cloned().zip(self.tensors.iter().cloned()).collect()
    }
}
