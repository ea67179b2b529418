use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a similarity file: how strongly an encoder associates the
/// sample with the positive and the negative group prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaRecord {
    pub id: String,
    pub label: i8,
    /// 0-based noisy group.
    pub group: usize,
    pub sim_pos: f64,
    pub sim_neg: f64,
}

impl GammaRecord {
    /// Ties count as noisy.
    pub fn is_clean(&self) -> bool {
        self.sim_pos > self.sim_neg
    }
}

/// Per group pair TV radii; `None` where the radius could not be estimated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GammaMatrix {
    pub entries: Vec<Vec<Option<f64>>>,
}

impl GammaMatrix {
    pub fn uniform(m: usize, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Parameter(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        Ok(GammaMatrix { entries: vec![vec![Some(gamma); m]; m] })
    }

    pub fn num_groups(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, z: usize, zp: usize) -> Option<f64> {
        self.entries.get(z).and_then(|row| row.get(zp)).copied().flatten()
    }

    /// Radius used in training: the entry, or the largest defined entry
    /// when this one is undefined.
    pub fn radius(&self, z: usize, zp: usize) -> f64 {
        self.get(z, zp).unwrap_or_else(|| {
            self.entries.iter().flatten().flatten().copied().fold(0.0, f64::max)
        })
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.entries.len();
        for row in &self.entries {
            if row.len() != m {
                return Err(Error::Shape("gamma matrix is not square".into()));
            }
            for g in row.iter().flatten() {
                if !(0.0..=1.0).contains(g) {
                    return Err(Error::Parameter(format!("gamma entry {g} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Fraction of (positive in `z`, negative in `z'`) pairs in which at least
/// one member is flagged noisy.
pub fn estimate_gamma(records: &[GammaRecord], m: usize) -> Result<GammaMatrix> {
    if records.is_empty() {
        return Err(Error::Input("no similarity records".into()));
    }
    // [group][0 = positive, 1 = negative] -> (total, clean)
    let mut counts = vec![[(0u64, 0u64); 2]; m];
    for r in records {
        if r.group >= m {
            return Err(Error::Input(format!("record {} has group {} but m = {m}", r.id, r.group + 1)));
        }
        let c = &mut counts[r.group][usize::from(r.label < 0)];
        c.0 += 1;
        c.1 += u64::from(r.is_clean());
    }
    let entries = (0..m)
        .map(|z| {
            (0..m)
                .map(|zp| {
                    let (np, cp) = counts[z][0];
                    let (nn, cn) = counts[zp][1];
                    let total = np * nn;
                    (total > 0).then(|| (total - cp * cn) as f64 / total as f64)
                })
                .collect()
        })
        .collect();
    Ok(GammaMatrix { entries })
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    label: String,
    group: String,
    sim_pos: String,
    sim_neg: String,
}

fn parse_record(raw: RawRecord) -> std::result::Result<GammaRecord, String> {
    let label = match raw.label.trim() {
        "1" | "+1" => 1,
        "-1" => -1,
        other => return Err(format!("label must be 1 or -1, got {other:?}")),
    };
    let group: usize = raw
        .group
        .trim()
        .parse()
        .map_err(|_| format!("group must be a positive integer, got {:?}", raw.group))?;
    if group == 0 {
        return Err("groups are numbered from 1".into());
    }
    let sim = |s: &str, name: &str| -> std::result::Result<f64, String> {
        let v: f64 = s.trim().parse().map_err(|_| format!("{name} is not a number: {s:?}"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{name} is not finite"))
        }
    };
    Ok(GammaRecord {
        id: raw.id,
        label,
        group: group - 1,
        sim_pos: sim(&raw.sim_pos, "sim_pos")?,
        sim_neg: sim(&raw.sim_neg, "sim_neg")?,
    })
}

/// Reads `id,label,group,sim_pos,sim_neg` rows (groups 1-based in the file).
/// Every malformed row is reported by line number.
pub fn read_similarity_file(path: impl AsRef<Path>) -> Result<Vec<GammaRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut records = Vec::new();
    let mut bad: Vec<(usize, String)> = Vec::new();
    for (k, row) in reader.deserialize::<RawRecord>().enumerate() {
        let line = k + 2;
        match row.map_err(|e| e.to_string()).and_then(parse_record) {
            Ok(r) => records.push(r),
            Err(msg) => bad.push((line, msg)),
        }
    }
    if let Some((first, _)) = bad.first() {
        let msg = bad.iter().map(|(l, m)| format!("line {l}: {m}")).collect::<Vec<_>>().join("; ");
        return Err(Error::Parse { line: *first, msg });
    }
    Ok(records)
}
