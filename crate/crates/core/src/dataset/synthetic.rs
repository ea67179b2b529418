//! Two-group Gaussian-mixture generator with a controllable group-AUC gap.
//!
//! Every row draws a group `z`, a label `y` with a group-dependent positive
//! rate, and `dim` standard normal features. Feature 0 carries the class
//! signal: it is shifted by `y * separation[z] / 2 + group_shift * z`.
//! Feature 1 is a weak secondary signal and the last feature is a group
//! proxy.
//!
//! Two mechanisms create group-AUC gaps. Unequal separations give unequal
//! intra-group AUCs (`Phi(separation[z] / sqrt 2)` for a scorer on feature
//! 0), which no scorer can equalize without degrading one group. Unequal
//! positive rates make the proxy predictive of the label, so an
//! unconstrained scorer adds a group offset and opens inter-group gaps that
//! a fair scorer can close.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub dim: usize,
    /// Probability of group 0.
    pub group0_fraction: f64,
    /// Positive rate per group.
    pub positive_rate: [f64; 2],
    /// Class-mean distance on the signal feature, per group.
    pub separation: [f64; 2],
    /// Offset of group 1 on the signal feature (both classes).
    pub group_shift: f64,
    /// Offset of group 1 on the proxy feature.
    pub group_proxy: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// The dataset used by the test suite and the CLI smoke configs.
    pub fn bundled(n: usize, seed: u64) -> Self {
        SyntheticConfig {
            n,
            dim: 5,
            group0_fraction: 0.4,
            positive_rate: [0.2, 0.45],
            separation: [1.5, 1.5],
            group_shift: 0.0,
            group_proxy: 2.0,
            seed,
        }
    }

    /// Mimics the credit-default table: 1.52:1 group ratio, 3.52:1
    /// negative:positive ratio, overall AUC in the high 0.7s.
    pub fn default_style(n: usize, seed: u64) -> Self {
        SyntheticConfig {
            n,
            dim: 10,
            group0_fraction: 1.52 / 2.52,
            positive_rate: [0.18, 0.28],
            separation: [1.1, 1.1],
            group_shift: 0.0,
            group_proxy: 1.5,
            seed,
        }
    }
}

pub fn gaussian_mixture(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.dim < 3 {
        return Err(Error::Parameter("synthetic data needs dim >= 3".into()));
    }
    let unit = |x: f64| (0.0..=1.0).contains(&x);
    if !unit(cfg.group0_fraction) || !cfg.positive_rate.iter().all(|&r| unit(r)) {
        return Err(Error::Parameter("fractions must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut features = Array2::<f64>::zeros((cfg.n, cfg.dim));
    let mut labels = Vec::with_capacity(cfg.n);
    let mut groups = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let z = usize::from(rng.random::<f64>() >= cfg.group0_fraction);
        let y: i8 = if rng.random::<f64>() < cfg.positive_rate[z] { 1 } else { -1 };
        for j in 0..cfg.dim {
            features[[i, j]] = rng.sample(StandardNormal);
        }
        let yf = f64::from(y);
        features[[i, 0]] += yf * cfg.separation[z] / 2.0 + cfg.group_shift * z as f64;
        features[[i, 1]] += yf * 0.25;
        features[[i, cfg.dim - 1]] += cfg.group_proxy * z as f64;
        labels.push(y);
        groups.push(z);
    }
    Dataset::new(features, labels, groups, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportions_roughly_match() {
        let ds = gaussian_mixture(&SyntheticConfig::default_style(20_000, 3)).unwrap();
        let pos = ds.count_positive() as f64 / ds.len() as f64;
        let g0 = ds.noisy_groups.iter().filter(|&&g| g == 0).count() as f64 / ds.len() as f64;
        assert!((pos - 0.2197).abs() < 0.01, "{pos}");
        assert!((g0 - 0.6032).abs() < 0.01, "{g0}");
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let cfg = SyntheticConfig::bundled(200, 11);
        assert_eq!(gaussian_mixture(&cfg).unwrap(), gaussian_mixture(&cfg).unwrap());
    }
}
