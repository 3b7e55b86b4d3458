use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ChipRecord, Label};
use crate::error::{Error, Result};

/// Fractions of each class that go to training. Positives are mostly
/// trained on; negatives mostly held out, which balances the training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub positive_train_fraction: f64,
    pub negative_train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { positive_train_fraction: 0.8, negative_train_fraction: 0.2, seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for f in [self.positive_train_fraction, self.negative_train_fraction] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Parameter(format!("split fraction {f} outside (0, 1)")));
            }
        }
        Ok(())
    }

    /// Number of training records for a class of `n` records: `floor(fraction · n)`.
    pub fn train_count(fraction: f64, n: usize) -> usize {
        // The epsilon keeps exact products such as 0.2 · 7980 from landing just below an integer.
        ((fraction * n as f64) + 1e-9).floor() as usize
    }
}

/// Per class: seeded shuffle, then the first `floor(fraction · n)` go to
/// training. Both outputs keep the input's relative order.
pub fn stratified_split(records: Vec<ChipRecord>, plan: &SplitSpec) -> Result<(Vec<ChipRecord>, Vec<ChipRecord>)> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut to_train = vec![false; records.len()];
    for (label, fraction) in [
        (Label::Ship, plan.positive_train_fraction),
        (Label::NoShip, plan.negative_train_fraction),
    ] {
        let mut idx: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        for &i in &idx[..SplitSpec::train_count(fraction, idx.len())] {
            to_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (rec, t) in records.into_iter().zip(to_train) {
        if t {
            train.push(rec);
        } else {
            test.push(rec);
        }
    }
    Ok((train, test))
}
