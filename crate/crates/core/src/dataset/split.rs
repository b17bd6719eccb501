//! Network-level k-fold splits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::PortableRng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub fold_count: usize,
    pub folds: Vec<Fold>,
}

/// Shuffles `network_ids` and deals them into `fold_count` near-equal test groups.
pub fn make_splits(network_ids: &[usize], fold_count: usize, rng_seed: u64) -> Result<SplitPlan> {
    if fold_count < 2 {
        return Err(Error::InvalidParameter(format!(
            "fold count must be >= 2, got {fold_count}"
        )));
    }
    if network_ids.len() < fold_count {
        return Err(Error::InvalidParameter(format!(
            "{} networks cannot fill {fold_count} folds",
            network_ids.len()
        )));
    }
    let mut sorted = network_ids.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter("duplicate network id".into()));
    }
    let mut order = sorted;
    PortableRng::new(rng_seed).shuffle(&mut order);

    let n = order.len();
    let mut folds = Vec::with_capacity(fold_count);
    let mut start = 0;
    for k in 0..fold_count {
        let size = n / fold_count + usize::from(k < n % fold_count);
        let mut test = order[start..start + size].to_vec();
        let mut train: Vec<usize> = order[..start]
            .iter()
            .chain(&order[start + size..])
            .copied()
            .collect();
        test.sort_unstable();
        train.sort_unstable();
        folds.push(Fold { train, test });
        start += size;
    }
    Ok(SplitPlan { fold_count, folds })
}

impl SplitPlan {
    /// Checks that no fold leaks a network and that every network is tested once.
    pub fn validate(&self) -> Result<()> {
        if self.folds.len() != self.fold_count {
            return Err(Error::Format("fold count mismatch".into()));
        }
        let mut tested: Vec<usize> = Vec::new();
        for (k, fold) in self.folds.iter().enumerate() {
            if fold.test.iter().any(|id| fold.train.contains(id)) {
                return Err(Error::Format(format!(
                    "fold {k} shares a network between train and test"
                )));
            }
            tested.extend(&fold.test);
        }
        let n = tested.len();
        tested.sort_unstable();
        tested.dedup();
        if tested.len() != n {
            return Err(Error::Format(
                "a network is tested in more than one fold".into(),
            ));
        }
        Ok(())
    }
}
