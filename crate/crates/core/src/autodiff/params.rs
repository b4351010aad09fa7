use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Glorot-uniform initialized `rows × cols` tensor, bound U[-a, a] with
    /// `a = √(6 / (fan_in + fan_out))`.
    pub fn add_glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let t = Tensor::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound));
        self.add(name, t)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, Tensor::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn fill(&mut self, value: f64) {
        for t in &mut self.values {
            t.data_mut().iter_mut().for_each(|v| *v = value);
        }
    }

    /// Records every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Bound {
        Bound {
            vars: self
                .values
                .iter()
                .map(|v| tape.leaf(v.clone(), requires_grad))
                .collect(),
        }
    }

    pub fn to_named(&self) -> BTreeMap<String, Tensor> {
        self.iter().map(|(n, t)| (n.to_string(), t.clone())).collect()
    }

    /// Overwrites every parameter from `named`, which must carry each name with
    /// a matching shape.
    pub fn load_named(&mut self, named: &BTreeMap<String, Tensor>) -> Result<()> {
        if named.len() != self.len() {
            return Err(Error::Validation(format!(
                "expected {} parameter tensors, found {}",
                self.len(),
                named.len()
            )));
        }
        for (name, slot) in self.names.iter().zip(self.values.iter_mut()) {
            let t = named
                .get(name)
                .ok_or_else(|| Error::Validation(format!("missing parameter {name}")))?;
            if t.shape() != slot.shape() {
                return Err(Error::Validation(format!(
                    "parameter {name}: stored shape {:?}, model expects {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.clone();
        }
        Ok(())
    }
}

/// Tape handles for a [`ParamStore`], in store order.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    #[inline]
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Adjoints for every parameter after [`Tape::backward`].
    pub fn grads(&self, tape: &Tape) -> Vec<Tensor> {
        self.vars.iter().map(|v| tape.grad(*v)).collect()
    }
}
