//! Named flat parameter arrays with explicit shapes.

use std::collections::BTreeMap;

use crate::error::{AutodiffError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Entry {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(AutodiffError::LengthMismatch {
                shape,
                expected,
                actual: values.len(),
            });
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// 2-D view used on the tape: rank 0 → 1×1, rank 1 → 1×n (a row),
    /// rank 2 → as-is, higher ranks fold trailing dims into columns.
    pub fn matrix_shape(&self) -> (usize, usize) {
        match self.shape.len() {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            _ => (self.shape[0], self.shape[1..].iter().product()),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        let (r, c) = self.matrix_shape();
        Tensor::new(r, c, self.values.clone()).expect("entry length checked at construction")
    }
}

/// Parameter arrays keyed by unique name. Iteration order is lexicographic
/// by name, which fixes checkpoint byte layout and optimizer update order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    entries: BTreeMap<String, Entry>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a new entry; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(AutodiffError::DuplicateParameter(name));
        }
        let entry = Entry::new(shape, values)?;
        self.entries.insert(name, entry);
        Ok(())
    }

    /// Replaces the values of an existing entry, or inserts it.
    pub fn set(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<()> {
        let entry = Entry::new(shape, values)?;
        self.entries.insert(name.into(), entry);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Entry> {
        self.entries.get_mut(name)
    }

    pub fn values(&self, name: &str) -> Result<&[f64]> {
        self.entries
            .get(name)
            .map(Entry::values)
            .ok_or_else(|| AutodiffError::UnresolvedParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Entry> {
        self.entries.remove(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Entry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Entry)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Total number of scalar values across all entries.
    pub fn total_len(&self) -> usize {
        self.entries.values().map(|e| e.values.len()).sum()
    }

    /// Same names and shapes, all values zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, e)| {
                    (
                        k.clone(),
                        Entry {
                            shape: e.shape.clone(),
                            values: vec![0.0; e.values.len()],
                        },
                    )
                })
                .collect(),
        }
    }

    /// Whether both stores hold identical names and shapes.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((ka, ea), (kb, eb))| ka == kb && ea.shape == eb.shape)
    }

    /// Entries whose names start with `prefix`, copied into a new store.
    pub fn subset(&self, prefix: &str) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, e)| (k.clone(), e.clone()))
                .collect(),
        }
    }

    /// Moves every entry of `other` into `self`; fails on name collision.
    pub fn merge(&mut self, other: ParameterStore) -> Result<()> {
        for (name, entry) in other.entries {
            if self.entries.contains_key(&name) {
                return Err(AutodiffError::DuplicateParameter(name));
            }
            self.entries.insert(name, entry);
        }
        Ok(())
    }

    /// Euclidean norm over every value in the store.
    pub fn global_norm(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|e| e.values.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(|e| e.values.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_names() {
        let mut store = ParameterStore::new();
        store.insert("w", vec![2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            store.insert("w", vec![1], vec![0.0]),
            Err(AutodiffError::DuplicateParameter(_))
        ));
    }

    #[test]
    fn rejects_shape_length_mismatch() {
        let mut store = ParameterStore::new();
        assert!(matches!(
            store.insert("w", vec![2, 3], vec![0.0; 5]),
            Err(AutodiffError::LengthMismatch {
                expected: 6,
                actual: 5,
                ..
            })
        ));
    }

    #[test]
    fn matrix_views_by_rank() {
        let e0 = Entry::new(vec![], vec![1.0]).unwrap();
        let e1 = Entry::new(vec![4], vec![0.0; 4]).unwrap();
        let e3 = Entry::new(vec![2, 3, 4], vec![0.0; 24]).unwrap();
        assert_eq!(e0.matrix_shape(), (1, 1));
        assert_eq!(e1.matrix_shape(), (1, 4));
        assert_eq!(e3.matrix_shape(), (2, 12));
    }
}
