//! Named parameter storage shared between model construction, the tape,
//! the optimizer and checkpointing. Iteration order is creation order,
//! which keeps optimizer updates and serialized layouts deterministic.

use std::sync::Arc;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::shape::numel;

#[derive(Debug, Clone)]
pub struct Param<S> {
    pub shape: Vec<usize>,
    pub data: Arc<Vec<S>>,
}

impl<S: Scalar> Param<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Self {
        assert_eq!(numel(&shape), data.len(), "param buffer does not match its shape");
        Param { shape, data: Arc::new(data) }
    }
}

#[derive(Debug, Default)]
pub struct ParamStore<S> {
    entries: IndexMap<String, Param<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore { entries: IndexMap::new() }
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<S>) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::DuplicateParam(name.to_string()));
        }
        self.entries.insert(name.to_string(), Param::new(shape, data));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Param<S>> {
        self.entries.get(name).ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    /// Mutable view of a parameter buffer; clones only if the tape still
    /// holds the previous step's values.
    pub fn values_mut(&mut self, name: &str) -> Result<&mut Vec<S>> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        Ok(Arc::make_mut(&mut p.data))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<S>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.entries.values().map(|p| p.data.len()).sum()
    }
}
