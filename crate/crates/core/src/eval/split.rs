use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::sha256_hex;
use crate::error::{Error, Result};
use crate::schema::{LabeledRecord, Task, TargetSpec};

pub const MIN_SPLIT_ROWS: usize = 10;

/// Row indices of the two halves of a split, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn train_hash(&self) -> String {
        hash_indices(&self.train)
    }

    pub fn test_hash(&self) -> String {
        hash_indices(&self.test)
    }
}

pub fn hash_indices(idx: &[usize]) -> String {
    let text: Vec<String> = idx.iter().map(usize::to_string).collect();
    sha256_hex(text.join(",").as_bytes())
}

/// Deterministic shuffled split with `round(n * train_fraction)` training rows.
/// Classification targets are stratified: each class contributes its
/// proportional share (largest-remainder rounding) to the training half.
pub fn split_dataset(
    records: &[LabeledRecord],
    target: &TargetSpec,
    train_fraction: f64,
    seed: u64,
) -> Result<Split> {
    let n = records.len();
    if n < MIN_SPLIT_ROWS {
        return Err(Error::Dataset(format!(
            "need at least {MIN_SPLIT_ROWS} rows to split, got {n}"
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let n_train = (n as f64 * train_fraction).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut split = match &target.task {
        Task::Regression { .. } => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let test = idx.split_off(n_train);
            Split { train: idx, test }
        }
        Task::Classification { classes } => {
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
            for (i, r) in records.iter().enumerate() {
                by_class[target.class_index(&r.label.render()).map_err(|e| e.at_row(i))?].push(i);
            }
            let ideal: Vec<f64> = by_class
                .iter()
                .map(|c| c.len() as f64 * n_train as f64 / n as f64)
                .collect();
            let mut quota: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
            let mut order: Vec<usize> = (0..classes.len()).collect();
            order.sort_by(|&a, &b| {
                let fa = ideal[a] - ideal[a].floor();
                let fb = ideal[b] - ideal[b].floor();
                fb.total_cmp(&fa).then(a.cmp(&b))
            });
            let mut remaining = n_train - quota.iter().sum::<usize>();
            for &c in &order {
                if remaining == 0 {
                    break;
                }
                if quota[c] < by_class[c].len() {
                    quota[c] += 1;
                    remaining -= 1;
                }
            }
            let mut train = Vec::with_capacity(n_train);
            let mut test = Vec::with_capacity(n - n_train);
            for (c, members) in by_class.iter_mut().enumerate() {
                if members.is_empty() {
                    continue;
                }
                if quota[c] == 0 {
                    return Err(Error::Dataset(format!(
                        "class `{}` has no training rows after stratification",
                        classes[c]
                    )));
                }
                members.shuffle(&mut rng);
                train.extend_from_slice(&members[..quota[c]]);
                test.extend_from_slice(&members[quota[c]..]);
            }
            Split { train, test }
        }
    };
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}
