//! Experiment configuration file (TOML).
//!
//! ```toml
//! schema_version = 1
//! output_dir = "runs/adult"
//! noise_levels = [0.1]
//! repetitions = 3
//! modes = ["robust", "auc_max"]
//!
//! [data]
//! kind = "tabular"
//! path = "data/adult_subsample_8000.csv"
//! preset = "adult"
//!
//! [split]
//! ratios = [0.6, 0.2, 0.2]
//! seed = 1
//!
//! [train]
//! eta_theta = 0.1
//! eta_lambda = 0.1
//! eta_p = 0.01
//! nu = 0.001
//! batch_size = 512
//! epochs = 30
//! gamma = 0.1          # or a matrix, or "noise_level"
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use fairauc::dataset::synthetic::{gaussian_mixture, SyntheticConfig};
use fairauc::dataset::{load_tabular, Dataset, Schema};
use fairauc::dro::{GammaMatrix, ProjectionMethod};
use fairauc::trainer::{Mode, TrainConfig};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// A configuration problem tied to one field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub msg: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "field `{}`: {}", self.field, self.msg)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError { field: field.into(), msg: msg.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub output_dir: PathBuf,
    #[serde(default = "default_noise_levels")]
    pub noise_levels: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    pub data: DataSource,
    #[serde(default)]
    pub split: SplitConfig,
    pub train: TrainSection,
}

fn default_noise_levels() -> Vec<f64> {
    vec![0.0]
}

fn default_repetitions() -> usize {
    1
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::Robust]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A delimited file; give either a `preset` or an explicit `schema`.
    Tabular {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preset: Option<TabularPreset>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schema: Option<Schema>,
    },
    /// The built-in two-group Gaussian mixture.
    Synthetic {
        preset: SyntheticPreset,
        n: usize,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TabularPreset {
    Adult,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticPreset {
    Bundled,
    DefaultStyle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    /// Base seed; repetition `r` uses `seed + r` for splitting, noise and
    /// training.
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { ratios: [0.6, 0.2, 0.2], seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Uniform(f64),
    Matrix(Vec<Vec<f64>>),
    Keyword(GammaKeyword),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaKeyword {
    /// Use the injected flip rate of the run.
    NoiseLevel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub eta_theta: f64,
    pub eta_lambda: f64,
    pub eta_p: f64,
    #[serde(default)]
    pub nu: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub gamma: GammaSpec,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_hidden")]
    pub hidden: [usize; 2],
    #[serde(default)]
    pub projection: ProjectionMethod,
}

fn default_tolerance() -> f64 {
    0.01
}

fn default_hidden() -> [usize; 2] {
    [64, 32]
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| locate(text, s.start)).unwrap_or_else(|| "<file>".into());
            bad(&field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("<file>", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let DataSource::Tabular { path, .. } = &mut self.data {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.noise_levels.is_empty() {
            return Err(bad("noise_levels", "at least one level required"));
        }
        if let Some(x) = self.noise_levels.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(bad("noise_levels", format!("{x} outside [0, 1]")));
        }
        if self.repetitions == 0 {
            return Err(bad("repetitions", "must be at least 1"));
        }
        if self.modes.is_empty() {
            return Err(bad("modes", "at least one mode required"));
        }
        let [a, b, c] = self.split.ratios;
        if !(a > 0.0 && b > 0.0 && c > 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(bad("split.ratios", "must be positive and sum to 1"));
        }
        match &self.data {
            DataSource::Tabular { preset: None, schema: None, .. } => {
                return Err(bad("data", "tabular data needs a `preset` or a `schema`"));
            }
            DataSource::Tabular { preset: Some(_), schema: Some(_), .. } => {
                return Err(bad("data", "give either `preset` or `schema`, not both"));
            }
            DataSource::Synthetic { n, .. } if *n < 10 => {
                return Err(bad("data.n", "synthetic data needs at least 10 rows"));
            }
            _ => {}
        }
        let t = &self.train;
        for (name, v) in [("train.eta_theta", t.eta_theta), ("train.eta_lambda", t.eta_lambda), ("train.eta_p", t.eta_p)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(bad(name, format!("must be positive, got {v}")));
            }
        }
        if !(t.nu >= 0.0) {
            return Err(bad("train.nu", format!("must be >= 0, got {}", t.nu)));
        }
        if t.batch_size == 0 {
            return Err(bad("train.batch_size", "must be positive"));
        }
        if !(t.tolerance >= 0.0) {
            return Err(bad("train.tolerance", "must be >= 0"));
        }
        if t.hidden.contains(&0) {
            return Err(bad("train.hidden", "widths must be positive"));
        }
        match &t.gamma {
            GammaSpec::Uniform(g) if !(0.0..=1.0).contains(g) => {
                return Err(bad("train.gamma", format!("{g} outside [0, 1]")));
            }
            GammaSpec::Matrix(rows) => {
                let m = rows.len();
                if m == 0 || rows.iter().any(|r| r.len() != m) {
                    return Err(bad("train.gamma", "matrix must be square and nonempty"));
                }
                if rows.iter().flatten().any(|g| !(0.0..=1.0).contains(g)) {
                    return Err(bad("train.gamma", "entries must lie in [0, 1]"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> fairauc::Result<Dataset> {
        match &self.data {
            DataSource::Tabular { path, preset, schema } => {
                let schema = match (preset, schema) {
                    (Some(TabularPreset::Adult), _) => Schema::adult(),
                    (None, Some(s)) => s.clone(),
                    (None, None) => unreachable!("validated"),
                };
                load_tabular(path, &schema)
            }
            DataSource::Synthetic { preset, n, seed } => {
                let cfg = match preset {
                    SyntheticPreset::Bundled => SyntheticConfig::bundled(*n, *seed),
                    SyntheticPreset::DefaultStyle => SyntheticConfig::default_style(*n, *seed),
                };
                gaussian_mixture(&cfg)
            }
        }
    }

    /// Training settings for one run.
    pub fn train_config(&self, mode: Mode, noise: f64, seed: u64, groups: usize) -> Result<TrainConfig, ConfigError> {
        let t = &self.train;
        let gamma = match &t.gamma {
            GammaSpec::Uniform(g) => GammaMatrix::uniform(groups, *g),
            GammaSpec::Keyword(GammaKeyword::NoiseLevel) => GammaMatrix::uniform(groups, noise),
            GammaSpec::Matrix(rows) => {
                if rows.len() != groups {
                    return Err(bad("train.gamma", format!("{0}x{0} matrix for {groups} groups", rows.len())));
                }
                Ok(GammaMatrix { entries: rows.iter().map(|r| r.iter().map(|&g| Some(g)).collect()).collect() })
            }
        }
        .map_err(|e| bad("train.gamma", e.to_string()))?;
        Ok(TrainConfig {
            eta_theta: t.eta_theta,
            eta_lambda: t.eta_lambda,
            eta_p: t.eta_p,
            nu: t.nu,
            batch_size: t.batch_size,
            epochs: t.epochs,
            gamma,
            mode,
            seed,
            tolerance: t.tolerance,
            hidden: t.hidden,
            projection: t.projection,
        })
    }

    pub fn ratios(&self) -> (f64, f64, f64) {
        let [a, b, c] = self.split.ratios;
        (a, b, c)
    }
}

/// Dotted key path of the table entry that contains byte `offset`.
fn locate(text: &str, offset: usize) -> String {
    let mut table = String::new();
    let mut key = String::new();
    let mut pos = 0;
    for line in text.lines() {
        let start = pos;
        pos += line.len() + 1;
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            table = trimmed.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            key.clear();
        } else if let Some((k, _)) = trimmed.split_once('=') {
            key = k.trim().to_string();
        }
        if offset < pos.max(start + 1) {
            break;
        }
    }
    match (table.is_empty(), key.is_empty()) {
        (true, true) => "<file>".into(),
        (true, false) => key,
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
output_dir = "out"

[data]
kind = "synthetic"
preset = "bundled"
n = 200

[train]
eta_theta = 0.1
eta_lambda = 0.1
eta_p = 0.01
batch_size = 64
epochs = 2
gamma = 0.1
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.noise_levels, vec![0.0]);
        assert_eq!(cfg.modes, vec![Mode::Robust]);
        assert_eq!(cfg.split.ratios, [0.6, 0.2, 0.2]);
        assert_eq!(cfg.train.hidden, [64, 32]);
    }

    #[test]
    fn round_trip_is_field_identical() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn gamma_forms() {
        let text = MINIMAL.replace("gamma = 0.1", "gamma = \"noise_level\"");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let t = cfg.train_config(Mode::Robust, 0.3, 0, 2).unwrap();
        assert_eq!(t.gamma.get(1, 0), Some(0.3));
        let text = MINIMAL.replace("gamma = 0.1", "gamma = [[0.1, 0.2], [0.3, 0.4]]");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let t = cfg.train_config(Mode::Robust, 0.0, 0, 2).unwrap();
        assert_eq!(t.gamma.get(0, 1), Some(0.2));
        assert!(cfg.train_config(Mode::Robust, 0.0, 0, 3).is_err());
    }

    #[test]
    fn field_level_errors() {
        let err = ExperimentConfig::from_toml(&MINIMAL.replace("eta_theta = 0.1", "eta_theta = -1.0")).unwrap_err();
        assert_eq!(err.field, "train.eta_theta");
        let err = ExperimentConfig::from_toml(&MINIMAL.replace("schema_version = 1", "schema_version = 7")).unwrap_err();
        assert_eq!(err.field, "schema_version");
        let err = ExperimentConfig::from_toml(&MINIMAL.replace("epochs = 2", "epochs = \"two\"")).unwrap_err();
        assert_eq!(err.field, "train.epochs");
        let err = ExperimentConfig::from_toml(&format!("{MINIMAL}\nnoise_levels = [1.5]")).unwrap_err();
        assert!(err.field == "train.noise_levels" || err.field == "noise_levels", "{err}");
    }
}
