use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::Matrix;
use crate::{Error, Result};

/// A named trainable matrix and its most recent gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Option<Matrix>,
}

/// Ordered collection of uniquely named parameters.
///
/// Insertion order is stable and is the order used by optimiser state and
/// checkpoints. Shapes are fixed once inserted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Matrix) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::DuplicateParameter(name.to_string()));
        }
        let id = self.params.len();
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad: None,
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        Ok(&self.params[self.id(name)?])
    }

    pub fn value(&self, name: &str) -> Result<&Matrix> {
        Ok(&self.get(name)?.value)
    }

    pub fn grad(&self, name: &str) -> Result<Option<&Matrix>> {
        Ok(self.get(name)?.grad.as_ref())
    }

    /// Replaces a parameter's value; the shape must not change.
    pub fn set_value(&mut self, name: &str, value: Matrix) -> Result<()> {
        let id = self.id(name)?;
        let p = &mut self.params[id];
        if p.value.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_value",
                lhs: p.value.shape(),
                rhs: value.shape(),
            });
        }
        p.value = value;
        Ok(())
    }

    pub fn by_id(&self, id: usize) -> &Param {
        &self.params[id]
    }

    pub(crate) fn by_id_mut(&mut self, id: usize) -> &mut Param {
        &mut self.params[id]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    /// Sets every gradient to a zero matrix of the parameter's shape.
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = Some(Matrix::zeros(p.value.rows(), p.value.cols()));
        }
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}
