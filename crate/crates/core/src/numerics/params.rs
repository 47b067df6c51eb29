use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A named, shaped array of learnable values.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered parameter collection with lookup by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> Result<ParamId> {
        let size: usize = shape.iter().product();
        if data.len() != size {
            return Err(Error::shape("ParamStore::insert", "payload length", size, data.len()));
        }
        if self.index.contains_key(name) {
            return Err(Error::Duplicate { kind: "parameter", id: name.to_string() });
        }
        let id = self.params.len();
        self.params.push(Param { name: name.to_string(), shape: shape.to_vec(), data });
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn data(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].data
    }

    pub fn data_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].data
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar values.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Replaces payloads from another store with identical names and shapes.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::shape("ParamStore::load_from", "parameter count", self.len(), other.len()));
        }
        for p in &mut self.params {
            let src = other
                .by_name(&p.name)
                .ok_or_else(|| Error::UnknownParameter(p.name.clone()))?;
            if src.shape != p.shape {
                return Err(Error::InvalidArgument(alloc::format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    p.name, src.shape, p.shape
                )));
            }
            p.data.copy_from_slice(&src.data);
        }
        Ok(())
    }
}

/// Gradients aligned with a [`ParamStore`], addressable by name or id.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients {
            names: store.iter().map(|p| p.name.clone()).collect(),
            values: store.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i].as_slice())
    }

    pub fn by_id(&self, id: ParamId) -> &[f64] {
        &self.values[id.0]
    }

    pub fn by_id_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.values[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names.iter().map(String::as_str).zip(self.values.iter().map(Vec::as_slice))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if other.values.len() != self.values.len() {
            return Err(Error::shape("Gradients::add_assign", "parameter count", self.values.len(), other.values.len()));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            if a.len() != b.len() {
                return Err(Error::shape("Gradients::add_assign", "parameter size", a.len(), b.len()));
            }
            super::kernels::axpy(a, 1.0, b);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values.iter_mut().flatten() {
            *v *= factor;
        }
    }
}
