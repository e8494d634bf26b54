use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{IngestError, MentionInstance, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSet {
    pub train: Vec<MentionInstance>,
    pub validation: Vec<MentionInstance>,
    pub test: Vec<MentionInstance>,
    pub seed: u64,
}

impl SplitSet {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Seeded 70/15/15 split: `⌊0.7n⌋` train, `⌊0.15n⌋` validation, the rest test.
pub fn split_dataset(instances: Vec<MentionInstance>, seed: u64) -> SplitSet {
    let n = instances.len();
    let n_train = n * 70 / 100;
    let n_val = n * 15 / 100;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut slots: Vec<Option<MentionInstance>> = instances.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| -> Vec<MentionInstance> {
        idx.iter().map(|&i| slots[i].take().expect("each index used once")).collect()
    };
    let train = take(&order[..n_train]);
    let validation = take(&order[n_train..n_train + n_val]);
    let test = take(&order[n_train + n_val..]);
    SplitSet {
        train,
        validation,
        test,
        seed,
    }
}

/// Round-robin interleave: first item of each list, then the second of each, and so on.
fn interleave<'a>(lists: impl IntoIterator<Item = &'a [MentionInstance]>) -> Result<Vec<MentionInstance>> {
    let lists: Vec<&[MentionInstance]> = lists.into_iter().collect();
    let longest = lists.iter().map(|l| l.len()).max().unwrap_or(0);
    if longest == 0 {
        return Err(IngestError::EmptyPool);
    }
    let mut out = Vec::with_capacity(lists.iter().map(|l| l.len()).sum());
    for i in 0..longest {
        for l in &lists {
            if let Some(inst) = l.get(i) {
                out.push(inst.clone());
            }
        }
    }
    Ok(out)
}

/// Pools the training splits of all datasets, round-robin by dataset.
pub fn pool_train<'a>(splits: impl IntoIterator<Item = &'a SplitSet>) -> Result<Vec<MentionInstance>> {
    interleave(splits.into_iter().map(|s| s.train.as_slice()))
}

/// Pools validation splits the same way (model selection on the combined split).
pub fn pool_validation<'a>(splits: impl IntoIterator<Item = &'a SplitSet>) -> Result<Vec<MentionInstance>> {
    interleave(splits.into_iter().map(|s| s.validation.as_slice()))
}

/// Concatenates all test splits in registration order; every instance keeps its dataset tag.
pub fn merge_tests<'a>(splits: impl IntoIterator<Item = &'a SplitSet>) -> Result<Vec<MentionInstance>> {
    let out: Vec<MentionInstance> = splits.into_iter().flat_map(|s| s.test.iter().cloned()).collect();
    if out.is_empty() {
        return Err(IngestError::EmptyPool);
    }
    Ok(out)
}
