//! Probability vectors over bins and bin tuples.
//!
//! A distribution over `D` features stores one probability per flat index.
//! Feature `r` owns `register_bits[r]` consecutive bits of that index, with
//! feature 0 in the least-significant position. For a Born machine this is the
//! same as the basis-state index when feature `r` is measured on register `r`.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
    register_bits: Vec<usize>,
    condition: Option<f64>,
}

impl DiscreteDistribution {
    /// Wraps a probability vector. Its length must be `2^(sum of register_bits)`.
    pub fn new(probs: Vec<f64>, register_bits: Vec<usize>) -> Result<Self> {
        if register_bits.is_empty() {
            return Err(Error::Empty("register layout"));
        }
        let total: usize = register_bits.iter().sum();
        let expected = 1usize << total;
        if probs.len() != expected {
            return Err(Error::DimensionMismatch { left: probs.len(), right: expected });
        }
        Ok(Self { probs, register_bits, condition: None })
    }

    /// Single-feature distribution over `probs.len()` bins (a power of two).
    pub fn one_dim(probs: Vec<f64>) -> Result<Self> {
        let n = probs.len();
        if !n.is_power_of_two() {
            return Err(Error::Config(alloc::format!("{n} bins is not a power of two")));
        }
        Self::new(probs, vec![n.trailing_zeros() as usize])
    }

    pub fn point_mass(index: usize, register_bits: Vec<usize>) -> Result<Self> {
        let total: usize = register_bits.iter().sum();
        let mut probs = vec![0.0; 1 << total];
        let len = probs.len();
        *probs.get_mut(index).ok_or(Error::IndexOutOfRange { index, len })? = 1.0;
        Self::new(probs, register_bits)
    }

    pub fn uniform(register_bits: Vec<usize>) -> Result<Self> {
        let total: usize = register_bits.iter().sum();
        let n = 1usize << total;
        Self::new(vec![1.0 / n as f64; n], register_bits)
    }

    pub fn with_condition(mut self, condition: Option<f64>) -> Self {
        self.condition = condition;
        self
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn register_bits(&self) -> &[usize] {
        &self.register_bits
    }

    pub fn condition(&self) -> Option<f64> {
        self.condition
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.register_bits.len()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Splits a flat index into per-feature bin indices.
    pub fn bin_tuple(&self, index: usize) -> Vec<usize> {
        split_index(index, &self.register_bits)
    }

    /// Same bin set as `other`: identical register layout.
    pub fn same_bins(&self, other: &Self) -> bool {
        self.register_bits == other.register_bits
    }

    pub fn check_same_bins(&self, other: &Self) -> Result<()> {
        if self.same_bins(other) {
            Ok(())
        } else {
            Err(Error::BinSetMismatch)
        }
    }

    /// Rescales to unit mass. A zero vector is left untouched.
    pub fn normalize(&mut self) {
        let total = self.total();
        if total > 0.0 {
            self.probs.iter_mut().for_each(|p| *p /= total);
        }
    }

    /// Normalized histogram of flat bin indices.
    pub fn from_counts(indices: &[usize], register_bits: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("samples"));
        }
        let total: usize = register_bits.iter().sum();
        let mut probs = vec![0.0; 1 << total];
        let len = probs.len();
        for &i in indices {
            *probs.get_mut(i).ok_or(Error::IndexOutOfRange { index: i, len })? += 1.0;
        }
        let n = indices.len() as f64;
        probs.iter_mut().for_each(|p| *p /= n);
        Self::new(probs, register_bits)
    }

    /// Probability of a single feature, summing out all the others.
    pub fn marginal(&self, feature: usize) -> Result<Self> {
        let bits = *self
            .register_bits
            .get(feature)
            .ok_or_else(|| Error::UnknownFeature(alloc::format!("{feature}")))?;
        let offset: usize = self.register_bits[..feature].iter().sum();
        let mask = (1usize << bits) - 1;
        let mut out = vec![0.0; 1 << bits];
        for (i, p) in self.probs.iter().enumerate() {
            out[(i >> offset) & mask] += p;
        }
        Ok(Self { probs: out, register_bits: vec![bits], condition: self.condition })
    }
}

pub fn split_index(index: usize, register_bits: &[usize]) -> Vec<usize> {
    let mut offset = 0;
    register_bits
        .iter()
        .map(|&bits| {
            let bin = (index >> offset) & ((1usize << bits) - 1);
            offset += bits;
            bin
        })
        .collect()
}

/// Inverse of [`DiscreteDistribution::bin_tuple`].
pub fn join_index(bins: &[usize], register_bits: &[usize]) -> usize {
    let mut offset = 0;
    let mut index = 0;
    for (&bin, &bits) in bins.iter().zip(register_bits) {
        index |= bin << offset;
        offset += bits;
    }
    index
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuple_round_trip() {
        let bits = [3, 2, 1];
        for i in 0..64 {
            assert_eq!(join_index(&split_index(i, &bits), &bits), i);
        }
        assert_eq!(split_index(0b1_10_101, &bits), vec![5, 2, 1]);
    }

    #[test]
    fn marginal_of_point_mass() {
        let d = DiscreteDistribution::point_mass(0, vec![2, 2]).unwrap();
        let m = d.marginal(1).unwrap();
        assert_eq!(m.probs(), &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(d.marginal(2), Err(Error::UnknownFeature(_))));
    }

    #[test]
    fn marginals_of_product() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let q = [0.7, 0.3];
        let mut joint = vec![0.0; 8];
        for (a, pa) in p.iter().enumerate() {
            for (b, qb) in q.iter().enumerate() {
                joint[join_index(&[a, b], &[2, 1])] = pa * qb;
            }
        }
        let d = DiscreteDistribution::new(joint, vec![2, 1]).unwrap();
        for (x, y) in d.marginal(0).unwrap().probs().iter().zip(p) {
            assert!((x - y).abs() < 1e-15);
        }
        for (x, y) in d.marginal(1).unwrap().probs().iter().zip(q) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(DiscreteDistribution::new(vec![0.5; 3], vec![2]).is_err());
        assert!(DiscreteDistribution::one_dim(vec![0.2; 5]).is_err());
    }
}
