//! Seeded k-fold subject splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One train/test partition of subject indices. Indices are sorted
/// ascending within each side; the randomness is only in the assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold_id: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl FoldSplit {
    /// Degenerate split that trains on everything and holds nothing out.
    pub fn full(n_subjects: usize) -> Self {
        FoldSplit {
            fold_id: 0,
            train_indices: (0..n_subjects).collect(),
            test_indices: Vec::new(),
        }
    }
}

/// Shuffles subjects with the given seed and deals them into `k` folds.
/// Fold sizes differ by at most one; together the test sides cover every
/// subject exactly once. Identical inputs give identical splits.
pub fn kfold_split(n_subjects: usize, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "k-fold needs k >= 2, got {k}"
        )));
    }
    if k > n_subjects {
        return Err(Error::InvalidConfig(format!(
            "cannot split {n_subjects} subjects into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n_subjects).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let base = n_subjects / k;
    let remainder = n_subjects % k;
    let mut folds = Vec::with_capacity(k);
    let mut cursor = 0;
    for fold_id in 0..k {
        let size = base + usize::from(fold_id < remainder);
        let mut test_indices: Vec<usize> = order[cursor..cursor + size].to_vec();
        let mut train_indices: Vec<usize> = order[..cursor]
            .iter()
            .chain(&order[cursor + size..])
            .copied()
            .collect();
        test_indices.sort_unstable();
        train_indices.sort_unstable();
        folds.push(FoldSplit {
            fold_id,
            train_indices,
            test_indices,
        });
        cursor += size;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn split_is_deterministic_per_seed() {
        let a = kfold_split(23, 5, 7).unwrap();
        let b = kfold_split(23, 5, 7).unwrap();
        assert_eq!(a, b);
        let c = kfold_split(23, 5, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_k() {
        assert!(kfold_split(10, 1, 0).is_err());
        assert!(kfold_split(3, 4, 0).is_err());
        assert!(kfold_split(4, 4, 0).is_ok());
    }

    #[test]
    fn full_split_has_empty_test_side() {
        let f = FoldSplit::full(5);
        assert_eq!(f.train_indices, vec![0, 1, 2, 3, 4]);
        assert!(f.test_indices.is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn folds_partition_subjects(n in 2usize..60, k in 2usize..8, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let folds = kfold_split(n, k, seed).unwrap();
            prop_assert_eq!(folds.len(), k);

            let mut covered = vec![0usize; n];
            for (i, f) in folds.iter().enumerate() {
                prop_assert_eq!(f.fold_id, i);
                // Train and test are disjoint and jointly exhaustive.
                prop_assert_eq!(f.train_indices.len() + f.test_indices.len(), n);
                let mut both = f.train_indices.clone();
                both.extend(&f.test_indices);
                both.sort_unstable();
                prop_assert_eq!(both, (0..n).collect::<Vec<_>>());
                for &t in &f.test_indices {
                    covered[t] += 1;
                }
            }
            // Every subject is held out exactly once.
            prop_assert!(covered.iter().all(|&c| c == 1));
            // Sizes differ by at most one.
            let sizes: Vec<usize> = folds.iter().map(|f| f.test_indices.len()).collect();
            let min = sizes.iter().min().unwrap();
            let max = sizes.iter().max().unwrap();
            prop_assert!(max - min <= 1);
        }
    }
}
