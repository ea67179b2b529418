//! Sweep summaries and frontier plot data.
//!
//! `summary.csv` holds one row per run followed by one aggregate row per
//! (noise, mode) whose `rep` is `mean±std` and whose metric cells read
//! `0.040000±0.010000` (sample standard deviation).

use std::path::Path;

use fairauc::trainer::Mode;

use crate::{CliError, Result};

pub const AGGREGATE_REP: &str = "mean±std";

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub noise: f64,
    pub mode: Mode,
    pub rep: usize,
    pub auc: f64,
    pub violation: Option<f64>,
    pub min_max: Option<f64>,
}

/// Mean and sample standard deviation; `None` for an empty slice, NaN
/// deviation for a single value.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn agg_cell(xs: &[f64]) -> String {
    mean_std(xs).map(|(m, s)| format!("{m:.6}±{s:.6}")).unwrap_or_default()
}

/// Keys in order of first appearance.
fn keys(rows: &[RunRow]) -> Vec<(f64, Mode)> {
    let mut out: Vec<(f64, Mode)> = Vec::new();
    for r in rows {
        if !out.contains(&(r.noise, r.mode)) {
            out.push((r.noise, r.mode));
        }
    }
    out
}

pub fn summary_csv(rows: &[RunRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["noise", "mode", "rep", "auc", "violation", "min_max"])?;
    for r in rows {
        w.write_record([
            r.noise.to_string(),
            r.mode.to_string(),
            r.rep.to_string(),
            r.auc.to_string(),
            cell(r.violation),
            cell(r.min_max),
        ])?;
    }
    for (noise, mode) in keys(rows) {
        let group: Vec<&RunRow> = rows.iter().filter(|r| r.noise == noise && r.mode == mode).collect();
        let auc: Vec<f64> = group.iter().map(|r| r.auc).collect();
        let viol: Vec<f64> = group.iter().filter_map(|r| r.violation).collect();
        let mm: Vec<f64> = group.iter().filter_map(|r| r.min_max).collect();
        w.write_record([
            noise.to_string(),
            mode.to_string(),
            AGGREGATE_REP.to_string(),
            agg_cell(&auc),
            agg_cell(&viol),
            agg_cell(&mm),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| CliError::Io(e.into_error()))?).expect("csv is utf-8"))
}

fn parse_opt(s: &str, line: usize, what: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| CliError::Core(fairauc::Error::Parse { line, msg: format!("bad {what} {s:?}") }))
}

/// Per-run rows of a summary file; aggregate rows are skipped.
pub fn read_summary(path: &Path) -> Result<Vec<RunRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 6 {
            return Err(CliError::Core(fairauc::Error::Parse { line, msg: format!("expected 6 fields, got {}", rec.len()) }));
        }
        if &rec[2] == AGGREGATE_REP {
            continue;
        }
        let bad = |what: &str| CliError::Core(fairauc::Error::Parse { line, msg: format!("bad {what} {:?}", rec.as_slice()) });
        rows.push(RunRow {
            noise: rec[0].parse().map_err(|_| bad("noise"))?,
            mode: rec[1].parse().map_err(|_| bad("mode"))?,
            rep: rec[2].parse().map_err(|_| bad("rep"))?,
            auc: rec[3].parse().map_err(|_| bad("auc"))?,
            violation: parse_opt(&rec[4], line, "violation")?,
            min_max: parse_opt(&rec[5], line, "min_max")?,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrontierPoint {
    pub mode: Mode,
    pub noise: f64,
    pub mean_auc: f64,
    pub mean_violation: Option<f64>,
    pub mean_min_max: Option<f64>,
    /// Number of files contributing to the point.
    pub sources: usize,
}

fn mean(xs: &[f64]) -> Option<f64> {
    mean_std(xs).map(|(m, _)| m)
}

/// Each file is averaged per (mode, noise) first; the point is the plain
/// mean of those per-file means, so every dataset counts equally.
pub fn frontier(files: &[Vec<RunRow>]) -> Vec<FrontierPoint> {
    let all: Vec<RunRow> = files.iter().flatten().cloned().collect();
    let mut points = Vec::new();
    for (noise, mode) in keys(&all) {
        let (mut auc, mut viol, mut mm) = (Vec::new(), Vec::new(), Vec::new());
        for f in files {
            let g: Vec<&RunRow> = f.iter().filter(|r| r.noise == noise && r.mode == mode).collect();
            if g.is_empty() {
                continue;
            }
            auc.extend(mean(&g.iter().map(|r| r.auc).collect::<Vec<_>>()));
            viol.extend(mean(&g.iter().filter_map(|r| r.violation).collect::<Vec<_>>()));
            mm.extend(mean(&g.iter().filter_map(|r| r.min_max).collect::<Vec<_>>()));
        }
        points.push(FrontierPoint {
            mode,
            noise,
            mean_auc: mean(&auc).expect("key came from some file"),
            mean_violation: mean(&viol),
            mean_min_max: mean(&mm),
            sources: auc.len(),
        });
    }
    points
}

pub fn frontier_csv(points: &[FrontierPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["mode", "noise", "mean_auc", "mean_violation", "mean_min_max", "sources"])?;
    for p in points {
        w.write_record([
            p.mode.to_string(),
            p.noise.to_string(),
            p.mean_auc.to_string(),
            cell(p.mean_violation),
            cell(p.mean_min_max),
            p.sources.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| CliError::Io(e.into_error()))?).expect("csv is utf-8"))
}
