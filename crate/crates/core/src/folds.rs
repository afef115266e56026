//! Seeded K-fold assignment, stratified by slice.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SisirError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    pub fold_of: Vec<usize>,
    pub k: usize,
}

impl Folds {
    /// Shuffles each slice's members and deals the concatenation out
    /// round-robin, so every fold sees every slice whenever the slice has at
    /// least `k` members.
    pub fn stratified(slice_of: &[usize], h: usize, k: usize, seed: u64) -> Result<Self> {
        let n = slice_of.len();
        if k < 2 || k > n {
            return Err(SisirError::InvalidArgument(format!("need 2 <= folds <= n, got {k} folds for n={n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order = Vec::with_capacity(n);
        for slice in 0..h {
            let mut members: Vec<usize> = (0..n).filter(|&i| slice_of[i] == slice).collect();
            members.shuffle(&mut rng);
            order.extend(members);
        }
        let mut fold_of = vec![0; n];
        for (t, &i) in order.iter().enumerate() {
            fold_of[i] = t % k;
        }
        Ok(Folds { fold_of, k })
    }

    /// Explicit assignment, mostly for tests.
    pub fn from_assignment(fold_of: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 || fold_of.iter().any(|&f| f >= k) {
            return Err(SisirError::InvalidArgument(format!("fold labels must lie in 0..{k}")));
        }
        Ok(Folds { fold_of, k })
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}
