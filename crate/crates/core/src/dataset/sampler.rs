use rand::seq::index;
use rand::Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// A stratified mini-batch.
///
/// `strata[z][0]` holds the sampled positives of group `z`, `strata[z][1]`
/// the negatives. Indices inside a stratum are sorted. `positives` and
/// `negatives` concatenate the strata in group order; these orderings
/// define the rows and columns of every pair matrix built for the batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub strata: Vec<[Vec<usize>; 2]>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    pub pos_groups: Vec<usize>,
    pub neg_groups: Vec<usize>,
    pub warnings: Vec<String>,
}

impl Batch {
    fn from_strata(strata: Vec<[Vec<usize>; 2]>, warnings: Vec<String>) -> Batch {
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        let mut pos_groups = Vec::new();
        let mut neg_groups = Vec::new();
        for (z, [pos, neg]) in strata.iter().enumerate() {
            positives.extend_from_slice(pos);
            pos_groups.extend(std::iter::repeat_n(z, pos.len()));
            negatives.extend_from_slice(neg);
            neg_groups.extend(std::iter::repeat_n(z, neg.len()));
        }
        Batch {
            strata,
            positives,
            negatives,
            pos_groups,
            neg_groups,
            warnings,
        }
    }

    /// The whole dataset as one batch.
    pub fn full(ds: &Dataset) -> Batch {
        let strata = strata_of(ds);
        let warnings = empty_stratum_warnings(&strata);
        Batch::from_strata(strata, warnings)
    }

    pub fn num_groups(&self) -> usize {
        self.strata.len()
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pos_count(&self, z: usize) -> usize {
        self.strata[z][0].len()
    }

    pub fn neg_count(&self, z: usize) -> usize {
        self.strata[z][1].len()
    }

    /// Row indices in pair-matrix order: positives first, then negatives.
    pub fn rows(&self) -> Vec<usize> {
        let mut rows = self.positives.clone();
        rows.extend_from_slice(&self.negatives);
        rows
    }

    /// Group pairs `(z, z')` with at least one positive in `z` and one
    /// negative in `z'`.
    pub fn active_pairs(&self) -> Vec<(usize, usize)> {
        let m = self.num_groups();
        let mut out = Vec::new();
        for z in 0..m {
            for zp in 0..m {
                if self.pos_count(z) > 0 && self.neg_count(zp) > 0 {
                    out.push((z, zp));
                }
            }
        }
        out
    }
}

fn strata_of(ds: &Dataset) -> Vec<[Vec<usize>; 2]> {
    let mut strata = vec![[Vec::new(), Vec::new()]; ds.num_groups];
    for (i, (&y, &z)) in ds.labels.iter().zip(&ds.noisy_groups).enumerate() {
        strata[z][usize::from(y < 0)].push(i);
    }
    strata
}

fn empty_stratum_warnings(strata: &[[Vec<usize>; 2]]) -> Vec<String> {
    let mut warnings = Vec::new();
    for (z, s) in strata.iter().enumerate() {
        for (k, name) in ["positive", "negative"].iter().enumerate() {
            if s[k].is_empty() {
                warnings.push(format!("group {z} has no {name} samples"));
            }
        }
    }
    warnings
}

/// Draws `ceil(b * |S_zy| / n)` rows without replacement from every
/// (group, label) stratum. The resulting batch may be larger than `b`.
pub fn stratified_sample<R: Rng + ?Sized>(ds: &Dataset, b: usize, rng: &mut R) -> Result<Batch> {
    let n = ds.len();
    let strata = strata_of(ds);
    let nonempty = strata.iter().flatten().filter(|s| !s.is_empty()).count();
    if n == 0 {
        return Err(Error::Size("cannot sample from an empty dataset".into()));
    }
    if b < nonempty {
        return Err(Error::Size(format!(
            "batch size {b} smaller than the {nonempty} nonempty strata"
        )));
    }
    let warnings = empty_stratum_warnings(&strata);
    let sampled = strata
        .into_iter()
        .map(|pair| {
            pair.map(|members| {
                let size = (b * members.len()).div_ceil(n).min(members.len());
                let mut picked: Vec<usize> = index::sample(rng, members.len(), size)
                    .into_iter()
                    .map(|k| members[k])
                    .collect();
                picked.sort_unstable();
                picked
            })
        })
        .collect();
    Ok(Batch::from_strata(sampled, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// 10 rows with strata sizes 4 (g0,+), 3 (g0,-), 2 (g1,+), 1 (g1,-).
    fn ten_rows() -> Dataset {
        let labels = vec![1, 1, 1, 1, -1, -1, -1, 1, 1, -1];
        let groups = vec![0, 0, 0, 0, 0, 0, 0, 1, 1, 1];
        Dataset::new(Array2::zeros((10, 1)), labels, groups, 2).unwrap()
    }

    #[test]
    fn ceil_sizes() {
        let ds = ten_rows();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = stratified_sample(&ds, 5, &mut rng).unwrap();
        assert_eq!(batch.pos_count(0), 2);
        assert_eq!(batch.neg_count(0), 2);
        assert_eq!(batch.pos_count(1), 1);
        assert_eq!(batch.neg_count(1), 1);
        assert_eq!(batch.len(), 6);
    }

    #[test]
    fn full_size_batch_is_whole_dataset() {
        let ds = ten_rows();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = stratified_sample(&ds, 10, &mut rng).unwrap();
        assert_eq!(batch, Batch::full(&ds));
        let mut rows = batch.rows();
        rows.sort_unstable();
        assert_eq!(rows, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn same_rng_state_same_batch() {
        let ds = ten_rows();
        let a = stratified_sample(&ds, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = stratified_sample(&ds, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_stratum_is_a_warning() {
        let labels = vec![1, -1, 1];
        let groups = vec![0, 0, 1];
        let ds = Dataset::new(Array2::zeros((3, 1)), labels, groups, 2).unwrap();
        let batch = stratified_sample(&ds, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(batch.warnings, vec!["group 1 has no negative samples"]);
        assert_eq!(batch.active_pairs(), vec![(0, 0), (1, 0)]);
    }

    #[test]
    fn too_small_batch_is_rejected() {
        let ds = ten_rows();
        let err = stratified_sample(&ds, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::Size(_)));
    }
}
