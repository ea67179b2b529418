//! Exact and surrogate AUC quantities and the two fairness metrics.
//!
//! Exact AUC counts `s+ > s-` strictly, so tied pairs contribute nothing
//! unless [`TieRule::Half`] is requested.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Ties count 0.
    #[default]
    Strict,
    /// Ties count 1/2 (Mann-Whitney convention).
    Half,
}

pub fn exact_auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    exact_auc_with(pos, neg, TieRule::Strict)
}

/// Rank-based AUC: sorts the negatives once and binary-searches each
/// positive, `O((n+ + n-) log n-)`.
pub fn exact_auc_with(pos: &[f64], neg: &[f64], ties: TieRule) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::UndefinedAuc(format!(
            "{} positive and {} negative scores",
            pos.len(),
            neg.len()
        )));
    }
    if pos.iter().chain(neg).any(|s| s.is_nan()) {
        return Err(Error::Input("NaN score".into()));
    }
    let mut sorted = neg.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut below: u64 = 0;
    let mut tied: u64 = 0;
    for &p in pos {
        let lt = sorted.partition_point(|&x| x < p);
        let le = sorted.partition_point(|&x| x <= p);
        below += lt as u64;
        tied += (le - lt) as u64;
    }
    let pairs = pos.len() as f64 * neg.len() as f64;
    Ok(match ties {
        TieRule::Strict => below as f64 / pairs,
        TieRule::Half => (2 * below + tied) as f64 / (2.0 * pairs),
    })
}

/// Overall, group-level and gap view of one score vector.
///
/// Matrix entry `[z][z']` pairs positives of group `z` with negatives of
/// group `z'`. Entries with an empty side are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupAucReport {
    pub overall_auc: f64,
    pub group_auc: Vec<Vec<Option<f64>>>,
    pub gap: Vec<Vec<Option<f64>>>,
    pub pair_weight: Vec<Vec<f64>>,
    pub violation: Option<f64>,
    pub min_max: Option<f64>,
}

impl GroupAucReport {
    pub fn num_groups(&self) -> usize {
        self.group_auc.len()
    }

    pub fn defined_gaps(&self) -> impl Iterator<Item = f64> + '_ {
        self.gap.iter().flatten().filter_map(|g| *g)
    }

    fn defined_aucs(&self) -> impl Iterator<Item = f64> + '_ {
        self.group_auc.iter().flatten().filter_map(|g| *g)
    }

    /// Largest signed gap over defined group pairs.
    pub fn max_gap(&self) -> Option<f64> {
        self.defined_gaps().reduce(f64::max)
    }
}

pub fn group_auc_report(scores: &[f64], labels: &[i8], groups: &[usize], num_groups: usize) -> Result<GroupAucReport> {
    group_auc_report_with(scores, labels, groups, num_groups, TieRule::Strict)
}

pub fn group_auc_report_with(
    scores: &[f64],
    labels: &[i8],
    groups: &[usize],
    num_groups: usize,
    ties: TieRule,
) -> Result<GroupAucReport> {
    if scores.len() != labels.len() || scores.len() != groups.len() {
        return Err(Error::Shape(format!(
            "{} scores, {} labels, {} groups",
            scores.len(),
            labels.len(),
            groups.len()
        )));
    }
    if let Some(g) = groups.iter().find(|&&g| g >= num_groups) {
        return Err(Error::Input(format!("group id {g} >= {num_groups}")));
    }
    let m = num_groups;
    let mut pos_by_group = vec![Vec::new(); m];
    let mut neg_by_group = vec![Vec::new(); m];
    for ((&s, &y), &z) in scores.iter().zip(labels).zip(groups) {
        if y > 0 {
            pos_by_group[z].push(s);
        } else {
            neg_by_group[z].push(s);
        }
    }
    let pos: Vec<f64> = pos_by_group.concat();
    let neg: Vec<f64> = neg_by_group.concat();
    let overall_auc = exact_auc_with(&pos, &neg, ties)?;
    let total_pairs = pos.len() as f64 * neg.len() as f64;

    let mut group_auc = vec![vec![None; m]; m];
    let mut gap = vec![vec![None; m]; m];
    let mut pair_weight = vec![vec![0.0; m]; m];
    for z in 0..m {
        for zp in 0..m {
            let (p, n) = (&pos_by_group[z], &neg_by_group[zp]);
            pair_weight[z][zp] = p.len() as f64 * n.len() as f64 / total_pairs;
            if !p.is_empty() && !n.is_empty() {
                let auc = exact_auc_with(p, n, ties)?;
                group_auc[z][zp] = Some(auc);
                gap[z][zp] = Some(auc - overall_auc);
            }
        }
    }
    let mut report = GroupAucReport {
        overall_auc,
        group_auc,
        gap,
        pair_weight,
        violation: None,
        min_max: None,
    };
    report.violation = fairness_violation(&report).ok();
    report.min_max = minmax_ratio(&report).ok().map(|r| r.value);
    Ok(report)
}

/// `max |AUC_{z,z'} - AUC|` over defined group pairs.
pub fn fairness_violation(report: &GroupAucReport) -> Result<f64> {
    report
        .defined_gaps()
        .map(f64::abs)
        .reduce(f64::max)
        .ok_or_else(|| Error::Metric("no defined group pair".into()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinMaxRatio {
    pub value: f64,
    /// Set when the largest group AUC is zero and the ratio was forced to 0.
    pub zero_max: bool,
}

/// Smallest over largest group-level AUC.
pub fn minmax_ratio(report: &GroupAucReport) -> Result<MinMaxRatio> {
    let lo = report.defined_aucs().reduce(f64::min);
    let hi = report.defined_aucs().reduce(f64::max);
    match (lo, hi) {
        (Some(_), Some(hi)) if hi == 0.0 => Ok(MinMaxRatio { value: 0.0, zero_max: true }),
        (Some(lo), Some(hi)) => Ok(MinMaxRatio { value: lo / hi, zero_max: false }),
        _ => Err(Error::Metric("no defined group pair".into())),
    }
}

/// `log(1 + exp(-a))` without overflow.
#[inline]
pub fn logistic_loss(a: f64) -> f64 {
    (-a.abs()).exp().ln_1p() + (-a).max(0.0)
}

#[inline]
pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss over all positive-negative pairs.
pub fn surrogate_auc_risk(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::UndefinedAuc("surrogate risk needs both classes".into()));
    }
    let total: f64 = pos
        .iter()
        .map(|&p| neg.iter().map(|&n| logistic_loss(p - n)).sum::<f64>())
        .sum();
    Ok(total / (pos.len() as f64 * neg.len() as f64))
}

/// `M[i][j] = sigmoid(pos[i] - neg[j])`, the smooth stand-in for the
/// strict ranking indicator.
pub fn surrogate_pair_matrix(pos: &[f64], neg: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((pos.len(), neg.len()), |(i, j)| sigmoid(pos[i] - neg[j]))
}

/// `sum(p~ * M) - mean(M)`.
pub fn surrogate_group_gap(pair_matrix: ArrayView2<f64>, p_tilde: ArrayView2<f64>) -> Result<f64> {
    if pair_matrix.dim() != p_tilde.dim() {
        return Err(Error::Shape(format!(
            "pair matrix {:?} vs distribution {:?}",
            pair_matrix.dim(),
            p_tilde.dim()
        )));
    }
    if pair_matrix.is_empty() {
        return Err(Error::Shape("empty pair matrix".into()));
    }
    let mut weighted = 0.0;
    Zip::from(pair_matrix).and(p_tilde).for_each(|&m, &p| weighted += p * m);
    Ok(weighted - pair_matrix.sum() / pair_matrix.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exact_auc_examples() {
        assert_eq!(exact_auc(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(exact_auc(&[0.0], &[0.0]).unwrap(), 0.0);
        assert_eq!(exact_auc(&[2.0, 0.0], &[1.0]).unwrap(), 0.5);
        assert_eq!(exact_auc_with(&[0.0], &[0.0], TieRule::Half).unwrap(), 0.5);
        assert!(matches!(exact_auc(&[], &[1.0]), Err(Error::UndefinedAuc(_))));
    }

    #[test]
    fn single_group_report() {
        let scores = [0.3, 0.9, 0.1, 0.5];
        let report = group_auc_report(&scores, &[1, 1, -1, -1], &[0, 0, 0, 0], 1).unwrap();
        assert_eq!(report.group_auc[0][0], Some(report.overall_auc));
        assert_eq!(report.gap[0][0], Some(0.0));
        assert_eq!(fairness_violation(&report).unwrap(), 0.0);
        assert_eq!(report.pair_weight, vec![vec![1.0]]);
    }

    #[test]
    fn two_group_report_by_hand() {
        // positives: g0 {0.9, 0.2}, g1 {0.6}; negatives: g0 {0.5}, g1 {0.1, 0.7}
        let scores = [0.9, 0.2, 0.6, 0.5, 0.1, 0.7];
        let labels = [1, 1, 1, -1, -1, -1];
        let groups = [0, 0, 1, 0, 1, 1];
        let r = group_auc_report(&scores, &labels, &groups, 2).unwrap();
        // overall: 0.9 beats 3, 0.2 beats 1, 0.6 beats 2 -> 6/9
        assert!((r.overall_auc - 6.0 / 9.0).abs() < 1e-15);
        assert_eq!(r.group_auc[0][0], Some(0.5)); // (0.9>0.5), (0.2<0.5)
        assert_eq!(r.group_auc[0][1], Some(0.75)); // 0.9 beats both, 0.2 beats 0.1
        assert_eq!(r.group_auc[1][0], Some(1.0)); // 0.6 > 0.5
        assert_eq!(r.group_auc[1][1], Some(0.5)); // 0.6 > 0.1, 0.6 < 0.7
        let weighted: f64 = (0..2)
            .flat_map(|z| (0..2).map(move |zp| (z, zp)))
            .map(|(z, zp)| r.pair_weight[z][zp] * r.group_auc[z][zp].unwrap())
            .sum();
        assert!((weighted - r.overall_auc).abs() < 1e-12);
    }

    #[test]
    fn undefined_entries_are_skipped() {
        // group 1 has no negatives
        let r = group_auc_report(&[0.9, 0.1, 0.5], &[1, -1, 1], &[0, 0, 1], 2).unwrap();
        assert_eq!(r.group_auc[0][1], None);
        assert_eq!(r.group_auc[1][1], None);
        assert_eq!(r.group_auc[1][0], Some(1.0));
        assert_eq!(fairness_violation(&r).unwrap(), 0.0);
        assert!(group_auc_report(&[0.9], &[1], &[0], 1).is_err());
    }

    fn report_with(gaps: &[f64], aucs: &[f64]) -> GroupAucReport {
        GroupAucReport {
            overall_auc: 0.9,
            group_auc: vec![aucs.iter().map(|a| Some(*a)).collect()],
            gap: vec![gaps.iter().map(|g| Some(*g)).collect()],
            pair_weight: vec![vec![0.0; gaps.len()]],
            violation: None,
            min_max: None,
        }
    }

    #[test]
    fn violation_and_minmax() {
        let r = report_with(&[0.03, -0.05, 0.01, 0.0], &[0.9, 0.9, 0.9, 0.9]);
        assert_eq!(fairness_violation(&r).unwrap(), 0.05);
        assert_eq!(minmax_ratio(&r).unwrap().value, 1.0);
        let r = report_with(&[0.0, 0.0], &[0.90, 0.95]);
        assert!((minmax_ratio(&r).unwrap().value - 0.9473684210526316).abs() < 1e-15);
        let r = report_with(&[0.0], &[0.0]);
        assert_eq!(minmax_ratio(&r).unwrap(), MinMaxRatio { value: 0.0, zero_max: true });
    }

    #[test]
    fn surrogate_examples() {
        let r = surrogate_auc_risk(&[0.4, 0.4], &[0.4]).unwrap();
        assert!((r - std::f64::consts::LN_2).abs() < 1e-15);
        let r = surrogate_auc_risk(&[1.0], &[0.0, -1.0]).unwrap();
        let expected = ((1.0 + (-1.0f64).exp()).ln() + (1.0 + (-2.0f64).exp()).ln()) / 2.0;
        assert!((r - expected).abs() < 1e-15);
        assert!((r - 0.2201).abs() < 1e-4);
        assert!(surrogate_auc_risk(&[800.0], &[0.0]).unwrap() < 1e-300);
        assert!(surrogate_auc_risk(&[-800.0], &[0.0]).unwrap().is_finite());

        let m = surrogate_pair_matrix(&[1.0], &[0.0]);
        assert!((m[[0, 0]] - 0.7310585786300049).abs() < 1e-15);
        assert_eq!(surrogate_pair_matrix(&[0.0, 0.0], &[0.0])[[1, 0]], 0.5);
        assert_eq!(sigmoid(1e6), 1.0);
        assert_eq!(sigmoid(-1e6), 0.0);
    }

    #[test]
    fn group_gap_examples() {
        let m = array![[0.2, 0.9], [0.5, 0.4]];
        let uniform = Array2::from_elem((2, 2), 0.25);
        assert!(surrogate_group_gap(m.view(), uniform.view()).unwrap().abs() < 1e-15);
        let point = array![[0.0, 1.0], [0.0, 0.0]];
        let g = surrogate_group_gap(m.view(), point.view()).unwrap();
        assert!((g - (0.9 - 0.5)).abs() < 1e-15);
        let c = Array2::from_elem((2, 2), 0.3);
        assert!(surrogate_group_gap(c.view(), point.view()).unwrap().abs() < 1e-15);
        let bad = Array2::<f64>::zeros((3, 2));
        assert!(matches!(surrogate_group_gap(m.view(), bad.view()), Err(Error::Shape(_))));
    }
}
