//! One noisy-group run: split, corrupt the training and validation groups,
//! train, and score the selected iterate on the clean test groups.

use serde::{Deserialize, Serialize};

use crate::dataset::{inject_group_noise, split, Dataset};
use crate::error::Result;
use crate::metrics::GroupAucReport;
use crate::trainer::{evaluate, train, TrainConfig, TrainOutput};

/// Seeds for the three random steps of a run, derived from one run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub split: u64,
    pub train_noise: u64,
    pub val_noise: u64,
}

impl RunSeeds {
    pub fn from_seed(seed: u64) -> Self {
        RunSeeds {
            split: seed,
            train_noise: seed.wrapping_mul(2).wrapping_add(1_000_003),
            val_noise: seed.wrapping_mul(2).wrapping_add(2_000_003),
        }
    }
}

pub struct NoisySplits {
    pub train: Dataset,
    pub val: Dataset,
    /// Test rows keep their clean groups.
    pub test: Dataset,
}

pub fn noisy_splits(ds: &Dataset, ratios: (f64, f64, f64), noise: f64, seeds: RunSeeds) -> Result<NoisySplits> {
    let (train, val, test) = split(ds, ratios, seeds.split)?;
    Ok(NoisySplits {
        train: inject_group_noise(&train, noise, seeds.train_noise)?,
        val: inject_group_noise(&val, noise, seeds.val_noise)?,
        test,
    })
}

pub struct RunResult {
    pub output: TrainOutput,
    pub test_report: GroupAucReport,
}

/// Trains with `cfg` (its `seed` drives initialization and batches) and
/// reports the selected iterate on the clean test split.
pub fn run_noisy(ds: &Dataset, ratios: (f64, f64, f64), noise: f64, seeds: RunSeeds, cfg: &TrainConfig) -> Result<RunResult> {
    let splits = noisy_splits(ds, ratios, noise, seeds)?;
    let output = train(&splits.train, &splits.val, cfg)?;
    let (test_report, _) = evaluate(&output.best, &splits.test, splits.test.evaluation_groups())?;
    Ok(RunResult { output, test_report })
}
