use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CausalDataset, DataError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Self {
        Self { train, val, test, seed }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let fr = [self.train, self.val, self.test];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(DataError::Config(format!("split fractions {fr:?} must lie in [0, 1]")));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::Config(format!("split fractions {fr:?} must sum to 1")));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes: val and test take `⌊fraction·n⌋`, train
    /// takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let take = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let val = take(self.val);
        let test = take(self.test);
        (n - val - test, val, test)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n` cut into contiguous train/val/test blocks.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<SplitIndices, DataError> {
    spec.validate()?;
    let (ntr, nva, nte) = spec.sizes(n);
    if ntr == 0 || nva == 0 || nte == 0 {
        return Err(DataError::Config(format!(
            "split of {n} units gives empty part ({ntr}, {nva}, {nte})"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    Ok(SplitIndices {
        train: idx[..ntr].to_vec(),
        val: idx[ntr..ntr + nva].to_vec(),
        test: idx[ntr + nva..].to_vec(),
    })
}

pub fn split(
    data: &CausalDataset,
    spec: &SplitSpec,
) -> Result<(CausalDataset, CausalDataset, CausalDataset), DataError> {
    let s = split_indices(data.n(), spec)?;
    Ok((data.subset(&s.train), data.subset(&s.val), data.subset(&s.test)))
}
