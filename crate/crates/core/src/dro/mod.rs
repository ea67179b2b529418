//! Pair distributions, the TV ball around the empirical pair distribution,
//! and the noise-radius estimator.

mod gamma;
mod projection;

pub use gamma::{estimate_gamma, read_similarity_file, GammaMatrix, GammaRecord};
pub use projection::{project_l1_ball, project_simplex, project_tv_ball_slice, ProjectionMethod};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::Batch;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistKind {
    /// Uniform over the qualifying pairs of the batch.
    Empirical,
    /// The adversarial distribution kept near the empirical one.
    Adversarial,
}

/// A distribution over the (positive, negative) pairs of one batch.
///
/// Rows follow `Batch::positives`, columns `Batch::negatives`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDistribution {
    pub weights: Array2<f64>,
    pub group_pair: (usize, usize),
    pub kind: DistKind,
}

impl PairDistribution {
    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    /// The same weights tagged as adversarial.
    pub fn to_adversarial(&self) -> PairDistribution {
        PairDistribution { kind: DistKind::Adversarial, ..self.clone() }
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.sum()
    }
}

pub fn empirical_pair_dist(batch: &Batch, z: usize, zp: usize) -> Result<PairDistribution> {
    if z >= batch.num_groups() || zp >= batch.num_groups() {
        return Err(Error::Input(format!("group pair ({z}, {zp}) out of range")));
    }
    let n_pos = batch.pos_count(z);
    let n_neg = batch.neg_count(zp);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegeneratePair(z, zp));
    }
    let w = 1.0 / (n_pos as f64 * n_neg as f64);
    let weights = Array2::from_shape_fn((batch.positives.len(), batch.negatives.len()), |(i, j)| {
        if batch.pos_groups[i] == z && batch.neg_groups[j] == zp {
            w
        } else {
            0.0
        }
    });
    Ok(PairDistribution { weights, group_pair: (z, zp), kind: DistKind::Empirical })
}

pub fn project_tv_ball(p_tilde: &PairDistribution, p_hat: &PairDistribution, gamma: f64) -> Result<PairDistribution> {
    project_tv_ball_with(p_tilde, p_hat, gamma, ProjectionMethod::Exact)
}

pub fn project_tv_ball_with(
    p_tilde: &PairDistribution,
    p_hat: &PairDistribution,
    gamma: f64,
    method: ProjectionMethod,
) -> Result<PairDistribution> {
    if p_tilde.weights.dim() != p_hat.weights.dim() {
        return Err(Error::Shape(format!(
            "{:?} vs reference {:?}",
            p_tilde.weights.dim(),
            p_hat.weights.dim()
        )));
    }
    let v: Vec<f64> = p_tilde.weights.iter().copied().collect();
    let r: Vec<f64> = p_hat.weights.iter().copied().collect();
    let q = project_tv_ball_slice(&v, &r, gamma, method)?;
    let weights = Array2::from_shape_vec(p_hat.weights.dim(), q).expect("shape preserved");
    Ok(PairDistribution { weights, group_pair: p_hat.group_pair, kind: DistKind::Adversarial })
}

/// Gradient of the surrogate gap with respect to the pair distribution,
/// scaled by the multiplier. The gap is linear in the distribution, so this
/// is just `lambda * M`.
pub fn ascent_grad_pair_dist(pair_matrix: ArrayView2<f64>, lambda: f64) -> Array2<f64> {
    pair_matrix.mapv(|m| lambda * m)
}

/// Exact maximizer of `<q, values>` over the TV ball of radius `gamma`
/// around `p_hat`. Mass is taken from the lowest-value support entries and
/// placed on the highest-value entry (lowest index among ties).
pub fn greedy_tv_max(p_hat: &[f64], values: &[f64], gamma: f64) -> Result<(f64, Vec<f64>)> {
    if p_hat.len() != values.len() || p_hat.is_empty() {
        return Err(Error::Shape(format!("{} weights vs {} values", p_hat.len(), values.len())));
    }
    if !(gamma >= 0.0) {
        return Err(Error::Parameter(format!("radius must be >= 0, got {gamma}")));
    }
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v > values[b] { i } else { b });
    let mut order: Vec<usize> = (0..p_hat.len()).filter(|&i| p_hat[i] > 0.0 && i != best).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let mut q = p_hat.to_vec();
    let mut budget = gamma;
    for i in order {
        if budget <= 0.0 || values[i] >= values[best] {
            break;
        }
        let moved = q[i].min(budget);
        q[i] -= moved;
        q[best] += moved;
        budget -= moved;
    }
    let value = q.iter().zip(values).map(|(a, b)| a * b).sum();
    Ok((value, q))
}

/// Half the L1 distance between two distributions on the same support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Input(format!("support sizes differ: {} vs {}", p.len(), q.len())));
    }
    for (name, d) in [("first", p), ("second", q)] {
        let total: f64 = d.iter().sum();
        if (total - 1.0).abs() > 1e-6 || d.iter().any(|&x| x < 0.0) {
            return Err(Error::Input(format!("{name} argument is not a distribution (mass {total})")));
        }
    }
    Ok(0.5 * projection::l1_distance(p, q))
}
