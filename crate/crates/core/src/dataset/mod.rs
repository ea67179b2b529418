//! Tabular data: loading, standardization, splitting, group-label noise and
//! the stratified mini-batch sampler.
//!
//! Group ids are zero-based in memory (`0..num_groups`). Labels are `+1` /
//! `-1`.

mod sampler;
pub mod synthetic;

pub use sampler::{stratified_sample, Batch};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column descriptor for a delimited text file with a header row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub label_column: String,
    /// Token in the label column that marks the positive class.
    pub positive_label: String,
    pub group_column: String,
    /// Explicit group order; when empty the sorted distinct values are used.
    #[serde(default)]
    pub group_values: Vec<String>,
    #[serde(default)]
    pub numeric_columns: Vec<String>,
    #[serde(default)]
    pub categorical_columns: Vec<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

impl Schema {
    /// Column layout of the UCI Adult census file (header row required).
    /// Sex is the protected group; `education` is dropped because
    /// `education_num` encodes it.
    pub fn adult() -> Schema {
        let cols = |names: &[&str]| names.iter().map(|s| s.to_string()).collect();
        Schema {
            label_column: "income".into(),
            positive_label: ">50K".into(),
            group_column: "sex".into(),
            group_values: vec!["Female".into(), "Male".into()],
            numeric_columns: cols(&["age", "fnlwgt", "education_num", "capital_gain", "capital_loss", "hours_per_week"]),
            categorical_columns: cols(&["workclass", "marital_status", "occupation", "relationship", "race", "native_country"]),
            delimiter: ',',
        }
    }
}

fn default_delimiter() -> char {
    ','
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `n x d` feature matrix. The first `numeric_features` columns are
    /// numeric, the rest are one-hot indicators.
    pub features: Array2<f64>,
    pub labels: Vec<i8>,
    /// Group labels seen by the learner (possibly corrupted).
    pub noisy_groups: Vec<usize>,
    /// Uncorrupted group labels, kept for evaluation only.
    pub clean_groups: Option<Vec<usize>>,
    pub num_groups: usize,
    pub feature_names: Vec<String>,
    pub numeric_features: usize,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<i8>,
        groups: Vec<usize>,
        num_groups: usize,
    ) -> Result<Self> {
        let d = features.ncols();
        let ds = Dataset {
            features,
            labels,
            clean_groups: Some(groups.clone()),
            noisy_groups: groups,
            num_groups,
            feature_names: (0..d).map(|k| format!("x{k}")).collect(),
            numeric_features: d,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.features.nrows() != n || self.noisy_groups.len() != n {
            return Err(Error::Shape(format!(
                "features has {} rows, labels {}, groups {}",
                self.features.nrows(),
                n,
                self.noisy_groups.len()
            )));
        }
        if let Some(clean) = &self.clean_groups {
            if clean.len() != n {
                return Err(Error::Shape(format!(
                    "clean groups has {} entries, expected {n}",
                    clean.len()
                )));
            }
            if clean.iter().any(|&g| g >= self.num_groups) {
                return Err(Error::Input("clean group id out of range".into()));
            }
        }
        if self.noisy_groups.iter().any(|&g| g >= self.num_groups) {
            return Err(Error::Input("group id out of range".into()));
        }
        if self.labels.iter().any(|&y| y != 1 && y != -1) {
            return Err(Error::Input("labels must be +1 or -1".into()));
        }
        Ok(())
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            noisy_groups: indices.iter().map(|&i| self.noisy_groups[i]).collect(),
            clean_groups: self
                .clean_groups
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
            num_groups: self.num_groups,
            feature_names: self.feature_names.clone(),
            numeric_features: self.numeric_features,
        }
    }

    /// Groups to use for evaluation: clean when available, else noisy.
    pub fn evaluation_groups(&self) -> &[usize] {
        self.clean_groups.as_deref().unwrap_or(&self.noisy_groups)
    }

    pub fn count_positive(&self) -> usize {
        self.labels.iter().filter(|&&y| y > 0).count()
    }
}

/// Reads a delimited file and encodes it, then standardizes the numeric
/// columns with statistics of the whole file.
pub fn load_tabular(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let mut ds = load_tabular_unscaled(path, schema)?;
    let scaler = Standardizer::fit(&ds);
    scaler.transform(&mut ds);
    Ok(ds)
}

/// Reads and one-hot encodes a delimited file without standardizing.
pub fn load_tabular_unscaled(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let label_idx = column(&schema.label_column)?;
    let group_idx = column(&schema.group_column)?;
    let numeric_idx = schema
        .numeric_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    let categorical_idx = schema
        .categorical_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;

    let records = reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if records.is_empty() {
        return Err(Error::Size("file has no data rows".into()));
    }

    // Category vocabularies, sorted so the encoding does not depend on row order.
    let vocab: Vec<Vec<String>> = categorical_idx
        .iter()
        .map(|&c| {
            records
                .iter()
                .map(|r| r[c].to_string())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        })
        .collect();
    let group_values: Vec<String> = if schema.group_values.is_empty() {
        records
            .iter()
            .map(|r| r[group_idx].to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    } else {
        schema.group_values.clone()
    };
    let group_lookup: BTreeMap<&str, usize> = group_values
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();

    let width = numeric_idx.len() + vocab.iter().map(Vec::len).sum::<usize>();
    let n = records.len();
    let mut features = Array2::<f64>::zeros((n, width));
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for (row, rec) in records.iter().enumerate() {
        // header is line 1
        let line = row + 2;
        for (k, &c) in numeric_idx.iter().enumerate() {
            let value: f64 = rec[c].parse().map_err(|_| Error::Parse {
                line,
                msg: format!(
                    "non-numeric value `{}` in column `{}`",
                    &rec[c], schema.numeric_columns[k]
                ),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("non-finite value in column `{}`", schema.numeric_columns[k]),
                });
            }
            features[[row, k]] = value;
        }
        let mut offset = numeric_idx.len();
        for (k, &c) in categorical_idx.iter().enumerate() {
            let pos = vocab[k].binary_search_by(|v| v.as_str().cmp(&rec[c])).unwrap();
            features[[row, offset + pos]] = 1.0;
            offset += vocab[k].len();
        }
        labels.push(if rec[label_idx] == schema.positive_label { 1 } else { -1 });
        let g = *group_lookup.get(&rec[group_idx]).ok_or_else(|| Error::Parse {
            line,
            msg: format!("unknown group value `{}`", &rec[group_idx]),
        })?;
        groups.push(g);
    }

    let mut feature_names: Vec<String> = schema.numeric_columns.clone();
    for (k, name) in schema.categorical_columns.iter().enumerate() {
        feature_names.extend(vocab[k].iter().map(|v| format!("{name}={v}")));
    }
    Ok(Dataset {
        features,
        labels,
        clean_groups: Some(groups.clone()),
        noisy_groups: groups,
        num_groups: group_values.len(),
        feature_names,
        numeric_features: numeric_idx.len(),
    })
}

/// Per-column mean and standard deviation of the numeric features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(ds: &Dataset) -> Self {
        let n = ds.len().max(1) as f64;
        let k = ds.numeric_features;
        let mut means = vec![0.0; k];
        let mut stds = vec![0.0; k];
        for j in 0..k {
            let col = ds.features.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            means[j] = mean;
            // constant columns are only centered
            stds[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Standardizer { means, stds }
    }

    pub fn transform(&self, ds: &mut Dataset) {
        for (j, (m, s)) in self.means.iter().zip(&self.stds).enumerate() {
            ds.features.column_mut(j).mapv_inplace(|x| (x - m) / s);
        }
    }
}

/// Shuffled, row-disjoint partition into train / validation / test.
///
/// Validation and test get `floor(ratio * n)` rows; the remainder goes to
/// train.
pub fn split(ds: &Dataset, ratios: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let (tr, va, te) = ratios;
    if !(tr > 0.0 && va > 0.0 && te > 0.0) || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "split ratios must be positive and sum to 1, got ({tr}, {va}, {te})"
        )));
    }
    if ds.is_empty() {
        return Err(Error::Size("cannot split an empty dataset".into()));
    }
    let (n_train, n_val, _) = split_sizes(ds.len(), ratios);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perm = index::sample(&mut rng, ds.len(), ds.len()).into_vec();
    let train = ds.subset(&perm[..n_train]);
    let val = ds.subset(&perm[n_train..n_train + n_val]);
    let test = ds.subset(&perm[n_train + n_val..]);
    Ok((train, val, test))
}

pub(crate) fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> (usize, usize, usize) {
    let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
    let n_val = floor(ratios.1);
    let n_test = floor(ratios.2);
    (n - n_val - n_test, n_val, n_test)
}

/// Flips exactly `floor(rho * n)` uniformly chosen rows to a uniformly
/// chosen different group. Noise is applied relative to the clean groups.
pub fn inject_group_noise(ds: &Dataset, rho: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Parameter(format!("noise level {rho} outside [0, 1]")));
    }
    let m = ds.num_groups;
    let n = ds.len();
    let flips = ((rho * n as f64) + 1e-9).floor() as usize;
    if flips > 0 && m < 2 {
        return Err(Error::CannotFlip(format!("{m} group(s); need at least 2")));
    }
    let clean = ds
        .clean_groups
        .clone()
        .unwrap_or_else(|| ds.noisy_groups.clone());
    let mut noisy = clean.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in index::sample(&mut rng, n, flips) {
        let other = rng.random_range(0..m - 1);
        noisy[i] = if other >= clean[i] { other + 1 } else { other };
    }
    let mut out = ds.clone();
    out.clean_groups = Some(clean);
    out.noisy_groups = noisy;
    Ok(out)
}
