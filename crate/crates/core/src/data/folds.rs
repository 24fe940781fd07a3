use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::{Error, Result};

/// One cross-validation fold; both index lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `0..labels.len()` into `k` folds.
///
/// Stratified mode deals each class round-robin over the folds after a
/// seeded shuffle, continuing the deal position across classes, so every
/// fold holds `floor` or `ceil` of `n_class / k` examples of each class and
/// fold sizes differ by at most one.
pub fn kfold_indices(labels: &[u8], k: usize, seed: u64, stratified: bool) -> Result<Vec<Fold>> {
    let n = labels.len();
    if k < 2 {
        return Err(Error::Validation(format!("k = {k}, need at least 2 folds")));
    }
    if k > n {
        return Err(Error::Validation(format!("k = {k} exceeds {n} examples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; n];
    if stratified {
        let mut classes: Vec<u8> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let mut position = 0;
        for class in classes {
            let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
            members.shuffle(&mut rng);
            for i in members {
                assignment[i] = position % k;
                position += 1;
            }
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for (pos, i) in order.into_iter().enumerate() {
            assignment[i] = pos % k;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == f);
            Fold { train, test }
        })
        .collect())
}

pub fn kfold_split(dataset: &Dataset, k: usize, seed: u64, stratified: bool) -> Result<Vec<Fold>> {
    kfold_indices(&dataset.labels(), k, seed, stratified)
}
