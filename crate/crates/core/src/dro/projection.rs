//! Euclidean projection onto `{q >= 0, sum q = 1, ||q - p_hat||_1 <= 2 gamma}`.
//!
//! The default solver works on the KKT conditions directly. For multipliers
//! `tau` (sum constraint) and `mu >= 0` (L1 constraint) the minimizer is
//!
//! ```text
//! q_i = max(0, p_hat_i + soft(v_i - p_hat_i - tau, mu))
//! ```
//!
//! For fixed `mu`, `sum q` is nonincreasing in `tau`, and the L1 distance of
//! the resulting point is nonincreasing in `mu`, so both multipliers are
//! found by nested one-dimensional searches. Coordinates are bucketed by
//! their `p_hat` value and sorted, which makes each evaluation
//! `O(buckets * log n)`; empirical references have only two distinct values.
//!
//! The Dykstra alternation between the simplex and the L1 ball is kept as a
//! second, independent route.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used to accept an input as already feasible.
const FEASIBLE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMethod {
    #[default]
    Exact,
    Dykstra,
}

pub(crate) fn validate(v: &[f64], p_hat: &[f64], gamma: f64) -> Result<()> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::Parameter(format!("radius must be finite and >= 0, got {gamma}")));
    }
    if v.len() != p_hat.len() || v.is_empty() {
        return Err(Error::Shape(format!(
            "point has {} entries, reference {}",
            v.len(),
            p_hat.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("point has non-finite entries".into()));
    }
    if p_hat.iter().any(|&x| !(x >= 0.0)) || (p_hat.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Input("reference is not a probability vector".into()));
    }
    Ok(())
}

pub(crate) fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn is_feasible(q: &[f64], p_hat: &[f64], gamma: f64, tol: f64) -> bool {
    q.iter().all(|&x| x >= 0.0)
        && (q.iter().sum::<f64>() - 1.0).abs() <= tol
        && l1_distance(q, p_hat) <= 2.0 * gamma + tol
}

pub fn project_tv_ball_slice(v: &[f64], p_hat: &[f64], gamma: f64, method: ProjectionMethod) -> Result<Vec<f64>> {
    validate(v, p_hat, gamma)?;
    if gamma == 0.0 {
        return Ok(p_hat.to_vec());
    }
    if is_feasible(v, p_hat, gamma, FEASIBLE_TOL) {
        return Ok(v.to_vec());
    }
    let q = match method {
        ProjectionMethod::Exact => exact(v, p_hat, gamma),
        ProjectionMethod::Dykstra => dykstra(v, p_hat, gamma, 500, 1e-8),
    };
    Ok(safeguard(q, p_hat, gamma))
}

/// Final feasibility repair: simplex projection if the sum drifted, then a
/// shrink toward `p_hat` along the segment until the L1 budget holds.
fn safeguard(mut q: Vec<f64>, p_hat: &[f64], gamma: f64) -> Vec<f64> {
    for x in q.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    if (q.iter().sum::<f64>() - 1.0).abs() > FEASIBLE_TOL {
        q = project_simplex(&q);
    }
    let budget = 2.0 * gamma;
    let dist = l1_distance(&q, p_hat);
    if dist > budget {
        let t = budget / dist;
        for (x, &p) in q.iter_mut().zip(p_hat) {
            *x = (p + t * (*x - p)).max(0.0);
        }
    }
    q
}

/// Sort-based Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Euclidean projection onto `{x : ||x - center||_1 <= radius}`.
pub fn project_l1_ball(v: &[f64], center: &[f64], radius: f64) -> Vec<f64> {
    let w: Vec<f64> = v.iter().zip(center).map(|(a, c)| a - c).collect();
    if w.iter().map(|x| x.abs()).sum::<f64>() <= radius {
        return v.to_vec();
    }
    if radius <= 0.0 {
        return center.to_vec();
    }
    let mut u: Vec<f64> = w.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - radius) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    w.iter()
        .zip(center)
        .map(|(&x, &c)| c + x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}

fn dykstra(v: &[f64], p_hat: &[f64], gamma: f64, max_iter: usize, tol: f64) -> Vec<f64> {
    let n = v.len();
    let mut x = v.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for _ in 0..max_iter {
        let shifted: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
        let y = project_simplex(&shifted);
        for i in 0..n {
            p[i] = shifted[i] - y[i];
        }
        let shifted: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
        let next = project_l1_ball(&shifted, p_hat, 2.0 * gamma);
        for i in 0..n {
            q[i] = shifted[i] - next[i];
        }
        let change = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let gap = y.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if change < tol && gap < tol {
            break;
        }
    }
    x
}

/// Coordinates sharing one reference value, sorted by `d = v - p_hat`.
struct Bucket {
    p: f64,
    d: Vec<f64>,
    /// `prefix[k] = d[0] + ... + d[k-1]`
    prefix: Vec<f64>,
}

impl Bucket {
    fn range_sum(&self, lo: usize, hi: usize) -> f64 {
        self.prefix[hi] - self.prefix[lo]
    }

    /// Split points `(lower_zero_end, middle_start, upper_start)`.
    fn cuts(&self, tau: f64, mu: f64) -> (usize, usize, usize) {
        let upper = self.d.partition_point(|&d| d <= tau + mu);
        let middle = self.d.partition_point(|&d| d < tau - mu);
        let zero = self.d.partition_point(|&d| d <= tau - mu - self.p).min(middle);
        (zero, middle, upper)
    }
}

/// Running totals over all buckets at one `(tau, mu)`.
#[derive(Default)]
struct Totals {
    /// `sum q` expressed as `constant - slope * tau`.
    constant: f64,
    slope: f64,
    l1: f64,
}

struct ExactSolver {
    buckets: Vec<Bucket>,
    d_min: f64,
    d_max: f64,
}

impl ExactSolver {
    fn new(v: &[f64], p_hat: &[f64]) -> Self {
        let mut entries: Vec<(f64, f64)> = p_hat.iter().zip(v).map(|(&p, &x)| (p, x - p)).collect();
        entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut buckets: Vec<Bucket> = Vec::new();
        for (p, d) in entries {
            match buckets.last_mut() {
                Some(b) if b.p == p => b.d.push(d),
                _ => buckets.push(Bucket { p, d: vec![d], prefix: Vec::new() }),
            }
        }
        let mut d_min = f64::INFINITY;
        let mut d_max = f64::NEG_INFINITY;
        for b in &mut buckets {
            b.prefix = std::iter::once(0.0)
                .chain(b.d.iter().scan(0.0, |acc, &d| {
                    *acc += d;
                    Some(*acc)
                }))
                .collect();
            d_min = d_min.min(b.d[0]);
            d_max = d_max.max(*b.d.last().unwrap());
        }
        ExactSolver { buckets, d_min, d_max }
    }

    fn totals(&self, tau: f64, mu: f64) -> Totals {
        let mut t = Totals::default();
        for b in &self.buckets {
            let n = b.d.len();
            let (zero, middle, upper) = b.cuts(tau, mu);
            let n_upper = (n - upper) as f64;
            let n_partial = (middle - zero) as f64;
            let n_middle = (upper - middle) as f64;
            let s_upper = b.range_sum(upper, n);
            let s_partial = b.range_sum(zero, middle);
            // upper: q = p + d - tau - mu; partial: q = p + d - tau + mu; middle: q = p
            t.constant += n_upper * (b.p - mu) + s_upper + n_middle * b.p + n_partial * (b.p + mu) + s_partial;
            t.slope += n_upper + n_partial;
            t.l1 += s_upper - n_upper * (tau + mu) + n_partial * (tau - mu) - s_partial + zero as f64 * b.p;
        }
        t
    }

    /// `tau` with `sum q(tau, mu) = 1`.
    fn solve_tau(&self, mu: f64) -> f64 {
        let mut lo = self.d_min - mu - 1.0;
        let mut hi = self.d_max + mu;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let t = self.totals(mid, mu);
            if t.constant - t.slope * mid >= 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // sum q is affine on the final bracket; solve it exactly
        let mid = 0.5 * (lo + hi);
        let t = self.totals(mid, mu);
        if t.slope > 0.0 {
            ((t.constant - 1.0) / t.slope).clamp(lo, hi)
        } else {
            mid
        }
    }

    fn l1_at(&self, mu: f64) -> (f64, f64) {
        let tau = self.solve_tau(mu);
        (tau, self.totals(tau, mu).l1)
    }

    fn solve(&self, gamma: f64) -> (f64, f64) {
        let budget = 2.0 * gamma;
        let (tau0, l1_0) = self.l1_at(0.0);
        if l1_0 <= budget {
            return (tau0, 0.0);
        }
        let mut lo = 0.0;
        let mut hi = (self.d_max - self.d_min) + 1.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.l1_at(mid).1 > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (self.solve_tau(hi), hi)
    }
}

fn soft(x: f64, mu: f64) -> f64 {
    if x > mu {
        x - mu
    } else if x < -mu {
        x + mu
    } else {
        0.0
    }
}

fn exact(v: &[f64], p_hat: &[f64], gamma: f64) -> Vec<f64> {
    let solver = ExactSolver::new(v, p_hat);
    let (tau, mu) = solver.solve(gamma);
    v.iter()
        .zip(p_hat)
        .map(|(&x, &p)| (p + soft(x - p - tau, mu)).max(0.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_feasible(q: &[f64], p_hat: &[f64], gamma: f64) {
        assert!(q.iter().all(|&x| x >= 0.0), "{q:?}");
        assert!((q.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
        assert!(l1_distance(q, p_hat) <= 2.0 * gamma + 1e-8);
    }

    #[test]
    fn simplex_projection_basics() {
        assert_eq!(project_simplex(&[0.2, 0.8]), vec![0.2, 0.8]);
        let q = project_simplex(&[2.0, 0.0]);
        assert_eq!(q, vec![1.0, 0.0]);
        let q = project_simplex(&[0.5, 0.5, 0.5]);
        for x in q {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn l1_ball_projection_basics() {
        let q = project_l1_ball(&[3.0, 0.0], &[0.0, 0.0], 1.0);
        assert_eq!(q, vec![1.0, 0.0]);
        assert_eq!(project_l1_ball(&[0.1, 0.1], &[0.0, 0.0], 1.0), vec![0.1, 0.1]);
    }

    #[test]
    fn feasible_input_is_returned() {
        let p_hat = [0.5, 0.5];
        let v = [0.6, 0.4];
        for m in [ProjectionMethod::Exact, ProjectionMethod::Dykstra] {
            assert_eq!(project_tv_ball_slice(&v, &p_hat, 0.2, m).unwrap(), v.to_vec());
        }
    }

    #[test]
    fn zero_radius_returns_reference() {
        let p_hat = [0.25, 0.75, 0.0];
        let q = project_tv_ball_slice(&[3.0, -1.0, 0.4], &p_hat, 0.0, ProjectionMethod::Exact).unwrap();
        assert_eq!(q, p_hat.to_vec());
    }

    #[test]
    fn negative_radius_is_rejected() {
        let err = project_tv_ball_slice(&[0.5, 0.5], &[0.5, 0.5], -0.1, ProjectionMethod::Exact).unwrap_err();
        assert!(matches!(err, Error::Parameter(_)));
    }

    #[test]
    fn binding_ball_in_three_dims() {
        let third = 1.0 / 3.0;
        let p_hat = [third; 3];
        let v = [0.9, 0.05, 0.05];
        let q = project_tv_ball_slice(&v, &p_hat, 0.15, ProjectionMethod::Exact).unwrap();
        assert_feasible(&q, &p_hat, 0.15);
        // Symmetry: the ball binds, the first coordinate gains exactly 0.15.
        assert!((q[0] - (third + 0.15)).abs() < 1e-9, "{q:?}");
        assert!((q[1] - q[2]).abs() < 1e-12);
        let d = project_tv_ball_slice(&v, &p_hat, 0.15, ProjectionMethod::Dykstra).unwrap();
        for (a, b) in q.iter().zip(&d) {
            assert!((a - b).abs() < 1e-6, "{q:?} vs {d:?}");
        }
    }

    #[test]
    fn off_support_mass_is_allowed() {
        let p_hat = [0.5, 0.5, 0.0, 0.0];
        let v = [0.5, 0.5, 0.4, 0.0];
        let q = project_tv_ball_slice(&v, &p_hat, 0.1, ProjectionMethod::Exact).unwrap();
        assert_feasible(&q, &p_hat, 0.1);
        assert!(q[2] > 0.09, "{q:?}");
        assert_eq!(q[3], 0.0);
    }
}
