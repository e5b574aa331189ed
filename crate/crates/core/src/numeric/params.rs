use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::error::{contract, Result};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// Named trainable tensors, kept in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T = f32> {
    entries: Vec<ParamEntry<T>>,
    index: BTreeMap<String, ParamId>,
    seed: u64,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            entries: Vec::new(),
            index: BTreeMap::new(),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<T>) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(contract!("duplicate parameter name `{name}`"));
        }
        if !tensor.is_finite() {
            return Err(contract!("parameter `{name}` has non-finite values"));
        }
        let id = ParamId(self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            tensor,
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        self.insert(name, Tensor::zeros(rows, cols))
    }

    pub fn filled(&mut self, name: &str, rows: usize, cols: usize, value: f64) -> Result<ParamId> {
        self.insert(
            name,
            Tensor::from_vec(rows, cols, vec![T::of(value); rows * cols]),
        )
    }

    /// Glorot-uniform initialisation over `fan_in + fan_out = rows + cols`.
    pub fn xavier(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<ParamId> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| T::of(rng.random_range(-limit..limit)))
            .collect();
        self.insert(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn normal(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<ParamId> {
        let dist = Normal::new(0.0, std).map_err(|e| contract!("bad std {std}: {e}"))?;
        let data = (0..rows * cols).map(|_| T::of(dist.sample(rng))).collect();
        self.insert(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| contract!("unknown parameter `{name}`"))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].tensor
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|id| self.get(*id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    tensor: e.tensor.cast(),
                })
                .collect(),
            index: self.index.clone(),
            seed: self.seed,
        }
    }

    /// Overwrites every tensor whose name exists in `source` with the same
    /// shape. Returns how many tensors were copied.
    pub fn copy_matching(&mut self, source: &ParamStore<T>) -> Result<usize> {
        let mut copied = 0;
        for entry in &mut self.entries {
            if let Some(src) = source.by_name(&entry.name) {
                if src.shape() != entry.tensor.shape() {
                    return Err(contract!(
                        "shape mismatch for `{}`: {:?} vs {:?}",
                        entry.name,
                        src.shape(),
                        entry.tensor.shape()
                    ));
                }
                entry.tensor = src.clone();
                copied += 1;
            }
        }
        Ok(copied)
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.tensor.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn names_are_unique() {
        let mut store = ParamStore::<f32>::new(0);
        store.zeros("w", 1, 2).unwrap();
        assert!(store.zeros("w", 1, 2).is_err());
        assert!(store.id("missing").is_err());
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut store = ParamStore::<f32>::new(5);
            store.xavier("a", 4, 3, &mut rng).unwrap();
            store.normal("b", 2, 2, 0.02, &mut rng).unwrap();
            store
        };
        assert_eq!(build(), build());
    }
}
