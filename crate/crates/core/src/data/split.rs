use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fold index per sample. Folds are disjoint, exhaustive, and differ in
/// size by at most one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    /// `(train, test)` indices for `fold`, each ascending.
    pub fn fold(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..self.assignments.len()).partition(|&i| self.assignments[i] == fold);
        (train, test)
    }
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

/// Seeded shuffle, then round-robin assignment.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 || k > n {
        return Err(Error::Input(format!("cannot split {n} samples into {k} folds")));
    }
    let mut assignments = vec![0; n];
    for (slot, i) in shuffled(n, seed).into_iter().enumerate() {
        assignments[i] = slot % k;
    }
    Ok(FoldPlan { k, assignments, seed })
}

/// Seeded split with `round(0.6·n)` training rows; both halves ascending.
pub fn split_60_40(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    // 6n/10 is never exactly a half, so integer rounding is exact.
    let n_train = (6 * n + 5) / 10;
    if n_train == 0 || n_train == n {
        return Err(Error::Input(format!("60/40 split of {n} samples leaves a side empty")));
    }
    let perm = shuffled(n, seed);
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fold_size_examples() {
        assert_eq!(kfold(10, 5, 0).unwrap().sizes(), vec![2; 5]);
        let mut sizes = kfold(11, 5, 0).unwrap().sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
        assert!(kfold(3, 4, 0).is_err());
        assert!(kfold(3, 0, 0).is_err());
    }

    #[test]
    fn split_examples() {
        let (tr, te) = split_60_40(10, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (6, 4));
        let (tr, te) = split_60_40(5500, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (3300, 2200));
        let (tr, te) = split_60_40(5, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (3, 2));
        assert!(split_60_40(1, 0).is_err());
    }

    #[test]
    fn seeds_change_the_plan() {
        assert_eq!(kfold(50, 5, 3).unwrap(), kfold(50, 5, 3).unwrap());
        assert_ne!(kfold(50, 5, 3).unwrap(), kfold(50, 5, 4).unwrap());
    }

    proptest! {
        #[test]
        fn folds_partition_indices(n in 1usize..200, k in 1usize..12, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let plan = kfold(n, k, seed).unwrap();
            let sizes = plan.sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut seen = vec![0u32; n];
            for f in 0..k {
                let (train, test) = plan.fold(f);
                prop_assert_eq!(train.len() + test.len(), n);
                for &i in &test {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }

        #[test]
        fn split_is_disjoint_and_exhaustive(n in 2usize..2000, seed in any::<u64>()) {
            let (train, test) = split_60_40(n, seed).unwrap();
            prop_assert_eq!(train.len(), (0.6 * n as f64).round() as usize);
            let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
