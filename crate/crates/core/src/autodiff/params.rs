use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Matrix, NodeId, Scalar};
use crate::error::{Error, Result};

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learnable arrays in creation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Matrix<T>>,
    index: HashMap<String, usize>,
    seed: u64,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.id(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    pub fn get(&self, id: ParamId) -> &Matrix<T> {
        &self.values[id.0]
    }

    /// Mutable access to the values. The shape cannot change.
    pub fn values_mut(&mut self, id: ParamId) -> &mut [T] {
        self.values[id.0].as_mut_slice()
    }

    pub fn by_name(&self, name: &str) -> Option<&Matrix<T>> {
        self.id(name).map(|id| self.get(id))
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

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total number of scalar entries.
    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(|m| m.as_slice().len()).sum()
    }

    pub fn zeros_like(&self) -> Vec<Matrix<T>> {
        self.values
            .iter()
            .map(|m| Matrix::zeros(m.rows(), m.cols()))
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Matrix::cast).collect(),
            index: self.index.clone(),
            seed: self.seed,
        }
    }

    /// Checks that `other` has the same names and shapes in the same order.
    pub fn same_layout<U: Scalar>(&self, other: &ParamStore<U>) -> bool {
        self.names == other.names
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.shape() == b.shape())
    }
}

/// Gradients produced by [`super::Tape::backward`], aligned with the store.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub params: Vec<Matrix<T>>,
    pub(crate) nodes: HashMap<usize, Matrix<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: ParamId) -> &Matrix<T> {
        &self.params[id.0]
    }

    /// Gradient of a variable created with [`super::Tape::variable`].
    pub fn node(&self, id: NodeId) -> Option<&Matrix<T>> {
        self.nodes.get(&id.0)
    }

    pub fn global_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|m| m.as_slice())
            .map(|v| v.f64() * v.f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: T) {
        for m in &mut self.params {
            for v in m.as_mut_slice() {
                *v *= factor;
            }
        }
    }
}

/// Normal(0, std) samples truncated to two standard deviations by resampling.
pub fn init_truncated_normal<T: Scalar, R: Rng>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    std: f64,
) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            break T::of(z * std);
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_are_unique() {
        let mut s = ParamStore::<f32>::new(0);
        s.add("a", Matrix::zeros(1, 1)).unwrap();
        assert!(s.add("a", Matrix::zeros(2, 1)).is_err());
        assert_eq!(s.require("a").unwrap().index(), 0);
        assert!(s.require("b").is_err());
    }

    #[test]
    fn truncated_normal_is_bounded_and_seeded() {
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        let a: Matrix<f64> = init_truncated_normal(&mut r1, 40, 40, 0.5);
        let b: Matrix<f64> = init_truncated_normal(&mut r2, 40, 40, 0.5);
        assert_eq!(a, b);
        assert!(a.as_slice().iter().all(|v| v.abs() <= 1.0));
        let var = a.as_slice().iter().map(|v| v * v).sum::<f64>() / 1600.0;
        // variance of a 2-sigma truncated normal is ~0.774 sigma^2
        assert!((var / 0.25 - 0.774).abs() < 0.08, "{var}");
    }
}
