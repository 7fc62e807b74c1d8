use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for SplitTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        })
    }
}

impl std::str::FromStr for SplitTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitTag::Train),
            "val" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            other => Err(Error::Parameter(format!(
                "unknown split {other:?} (expected train, val or test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle, then contiguous train / val / test slices sized by
/// rounding `fraction × len`; test takes the remainder.
pub fn split_dataset<T>(items: Vec<T>, fractions: (f64, f64, f64), seed: u64) -> Result<Split<T>> {
    let (ft, fv, fs) = fractions;
    let valid = [ft, fv, fs].iter().all(|f| f.is_finite() && *f >= 0.0);
    if !valid || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "split fractions must be non-negative and sum to 1, got ({ft}, {fv}, {fs})"
        )));
    }
    let n = items.len();
    let n_train = ((ft * n as f64).round() as usize).min(n);
    let n_val = ((fv * n as f64).round() as usize).min(n - n_train);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    let mut take = |range: std::ops::Range<usize>| -> Vec<T> {
        order[range].iter().map(|&i| slots[i].take().unwrap()).collect()
    };
    let train = take(0..n_train);
    let val = take(n_train..n_train + n_val);
    let test = take(n_train + n_val..n);
    Ok(Split { train, val, test })
}

/// Uses a published assignment instead of shuffling; input order is kept.
pub fn split_explicit<T>(items: Vec<T>, tags: &[SplitTag]) -> Result<Split<T>> {
    if items.len() != tags.len() {
        return Err(Error::Parameter(format!(
            "{} items but {} split tags",
            items.len(),
            tags.len()
        )));
    }
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (item, tag) in items.into_iter().zip(tags) {
        match tag {
            SplitTag::Train => split.train.push(item),
            SplitTag::Val => split.val.push(item),
            SplitTag::Test => split.test.push(item),
        }
    }
    Ok(split)
}
