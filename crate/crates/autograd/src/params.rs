use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Mat;

#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    #[error("parameter `{0}` is already registered")]
    Duplicate(String),
    #[error("tensor `{name}` declares {rows}x{cols} but carries {len} values")]
    BadRecord {
        name: String,
        rows: usize,
        cols: usize,
        len: usize,
    },
}

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named collection of trainable matrices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
    index: HashMap<String, ParamId>,
}

/// Flat serialized form of one named matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> Result<ParamId, StoreError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(StoreError::Duplicate(name));
        }
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Total number of scalars across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Ids whose name starts with `prefix`.
    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.names
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.starts_with(prefix))
            .map(|(i, _)| ParamId(i))
    }

    pub fn to_records(&self) -> Vec<TensorRecord> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(name, v)| TensorRecord {
                name: name.clone(),
                rows: v.nrows(),
                cols: v.ncols(),
                data: v.iter().copied().collect(),
            })
            .collect()
    }

    pub fn from_records(records: Vec<TensorRecord>) -> Result<Self, StoreError> {
        let mut store = ParamStore::new();
        for r in records {
            if r.rows * r.cols != r.data.len() {
                return Err(StoreError::BadRecord {
                    name: r.name,
                    rows: r.rows,
                    cols: r.cols,
                    len: r.data.len(),
                });
            }
            let m = Array2::from_shape_vec((r.rows, r.cols), r.data).expect("checked shape");
            store.add(r.name, m)?;
        }
        Ok(store)
    }
}

/// Gradients keyed by parameter.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: HashMap<ParamId, Mat>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.grads.get(&id)
    }

    pub fn insert(&mut self, id: ParamId, g: Mat) {
        self.grads.insert(id, g);
    }

    pub fn add(&mut self, id: ParamId, g: &Mat) {
        match self.grads.get_mut(&id) {
            Some(acc) => *acc += g,
            None => {
                self.grads.insert(id, g.clone());
            }
        }
    }

    /// Adds every gradient of `other` into `self`.
    pub fn merge(&mut self, other: &Gradients) {
        let mut ids: Vec<_> = other.grads.keys().copied().collect();
        ids.sort();
        for id in ids {
            self.add(id, &other.grads[&id]);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.values_mut() {
            g.mapv_inplace(|x| x * factor);
        }
    }

    pub fn remove(&mut self, id: ParamId) -> Option<Mat> {
        self.grads.remove(&id)
    }

    /// Parameter ids in ascending order.
    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<_> = self.grads.keys().copied().collect();
        ids.sort();
        ids
    }

    pub fn global_norm(&self) -> f64 {
        self.ids()
            .into_iter()
            .map(|id| self.grads[&id].iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`. Returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}
