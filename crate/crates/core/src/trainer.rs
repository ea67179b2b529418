//! Projected stochastic gradient descent–ascent on the fairness Lagrangian.
//!
//! Each iteration perturbs the weights along the normalized Lagrangian
//! gradient (sharpness-aware step), descends on the weights with the
//! gradient taken at the perturbed point, raises the multiplier of every
//! group pair whose surrogate gap is positive, and moves the adversarial
//! pair distribution toward larger gaps before projecting it back onto the
//! TV ball around the empirical one.
//!
//! Pair distributions live on the batch. When consecutive batches have the
//! same rows (batch size at least the training-set size) the adversarial
//! distribution persists across iterations; otherwise every batch starts
//! from one ascent step away from its empirical distribution.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{stratified_sample, Batch, Dataset};
use crate::dro::{empirical_pair_dist, project_tv_ball_with, GammaMatrix, PairDistribution, ProjectionMethod};
use crate::error::{Error, Result};
use crate::metrics::{group_auc_report, logistic_loss, sigmoid, surrogate_auc_risk, GroupAucReport};
use crate::scorer::{sam_perturb, sgd_step, MlpDims, MlpParams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Constraints enforced for the worst distribution in the TV ball.
    #[default]
    Robust,
    /// Constraints enforced on the observed (noisy) groups only.
    NonRobust,
    /// Plain AUC maximization, no constraints.
    AucMax,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Robust => "robust",
            Mode::NonRobust => "non_robust",
            Mode::AucMax => "auc_max",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robust" => Ok(Mode::Robust),
            "non_robust" => Ok(Mode::NonRobust),
            "auc_max" => Ok(Mode::AucMax),
            _ => Err(Error::Parameter(format!("unknown mode {s:?}"))),
        }
    }
}

fn default_tolerance() -> f64 {
    0.01
}

fn default_hidden() -> [usize; 2] {
    [64, 32]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta_theta: f64,
    pub eta_lambda: f64,
    pub eta_p: f64,
    /// SAM radius; 0 disables the perturbation.
    #[serde(default)]
    pub nu: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub gamma: GammaMatrix,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    /// Largest exact validation gap still counted as feasible.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_hidden")]
    pub hidden: [usize; 2],
    #[serde(default)]
    pub projection: ProjectionMethod,
}

impl TrainConfig {
    pub fn new(m: usize, gamma: f64) -> Result<Self> {
        Ok(TrainConfig {
            eta_theta: 0.1,
            eta_lambda: 0.25,
            eta_p: 0.01,
            nu: 0.001,
            batch_size: 512,
            epochs: 50,
            gamma: GammaMatrix::uniform(m, gamma)?,
            mode: Mode::Robust,
            seed: 0,
            tolerance: default_tolerance(),
            hidden: default_hidden(),
            projection: ProjectionMethod::Exact,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_theta", self.eta_theta),
            ("eta_lambda", self.eta_lambda),
            ("eta_p", self.eta_p),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return Err(Error::Parameter(format!("nu must be >= 0, got {}", self.nu)));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be positive".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Parameter(format!("tolerance must be >= 0, got {}", self.tolerance)));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Parameter("hidden widths must be positive".into()));
        }
        self.gamma.validate()
    }

    /// Feasibility tolerance used for best-iterate selection. Unconstrained
    /// training treats every iterate as feasible.
    pub fn selection_tolerance(&self) -> f64 {
        match self.mode {
            Mode::AucMax => f64::INFINITY,
            _ => self.tolerance,
        }
    }
}

/// Empirical and adversarial distributions for one group pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairState {
    pub p_hat: PairDistribution,
    pub p_tilde: PairDistribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub auc: f64,
    pub violation: Option<f64>,
    pub min_max: Option<f64>,
    /// Surrogate AUC risk on the selection split.
    pub objective: f64,
    pub feasible: bool,
    /// Exact gaps on the selection split, `None` where undefined.
    pub gaps: Vec<Vec<Option<f64>>>,
    pub lambdas: Vec<Vec<f64>>,
}

impl EpochRecord {
    fn feasible_at(&self, tau: f64) -> bool {
        self.gaps.iter().flatten().flatten().all(|&g| g <= tau)
    }

    fn max_gap(&self) -> f64 {
        self.gaps.iter().flatten().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct TrainerState {
    pub params: MlpParams,
    pub lambdas: Vec<Vec<f64>>,
    pub pair_dists: BTreeMap<(usize, usize), PairState>,
    batch_rows: Option<(Vec<usize>, Vec<usize>)>,
}

impl TrainerState {
    pub fn new(params: MlpParams, m: usize) -> Self {
        TrainerState {
            params,
            lambdas: vec![vec![0.0; m]; m],
            pair_dists: BTreeMap::new(),
            batch_rows: None,
        }
    }
}

/// Lagrangian pieces on one batch; scores are in `Batch::rows` order.
#[derive(Clone, Debug)]
pub struct LagrangianTerms {
    pub value: f64,
    pub risk: f64,
    /// Surrogate gap of every constrained pair, at the given distributions.
    pub gaps: Vec<((usize, usize), f64)>,
    /// `sigmoid(s_i - s_j)` over positive rows and negative columns.
    pub pair_matrix: Array2<f64>,
    /// Derivative of `value` with respect to each score.
    pub dscores: Vec<f64>,
}

/// Surrogate AUC risk plus `sum lambda * gap`, with derivatives.
pub fn lagrangian_terms(
    scores: &[f64],
    n_pos: usize,
    lambdas: &[Vec<f64>],
    dists: &[((usize, usize), &Array2<f64>)],
) -> Result<LagrangianTerms> {
    let n_neg = scores.len().saturating_sub(n_pos);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateBatch("batch needs at least one positive and one negative".into()));
    }
    let (pos, neg) = scores.split_at(n_pos);
    let inv = 1.0 / (n_pos as f64 * n_neg as f64);

    let mut weights: Option<Array2<f64>> = None;
    let mut lambda_total = 0.0;
    for &((z, zp), d) in dists {
        if d.dim() != (n_pos, n_neg) {
            return Err(Error::Shape(format!("distribution {:?} for a {n_pos}x{n_neg} batch", d.dim())));
        }
        let lambda = lambdas[z][zp];
        if lambda != 0.0 {
            lambda_total += lambda;
            match weights.as_mut() {
                Some(w) => w.scaled_add(lambda, d),
                None => weights = Some(d.mapv(|x| lambda * x)),
            }
        }
    }

    let mut pair_matrix = Array2::zeros((n_pos, n_neg));
    let mut dscores = vec![0.0; scores.len()];
    let mut risk = 0.0;
    let mut total = 0.0;
    let centering = lambda_total * inv;
    for (i, &sp) in pos.iter().enumerate() {
        let mut row_grad = 0.0;
        for (j, &sn) in neg.iter().enumerate() {
            let a = sp - sn;
            let s = sigmoid(a);
            pair_matrix[[i, j]] = s;
            risk += logistic_loss(a);
            total += s;
            let mut d = -sigmoid(-a) * inv;
            if let Some(w) = &weights {
                d += s * (1.0 - s) * (w[[i, j]] - centering);
            }
            row_grad += d;
            dscores[n_pos + j] -= d;
        }
        dscores[i] = row_grad;
    }
    risk *= inv;
    let mean = total * inv;

    let mut value = risk;
    let mut gaps = Vec::with_capacity(dists.len());
    for &((z, zp), d) in dists {
        let mut weighted = 0.0;
        Zip::from(d).and(&pair_matrix).for_each(|&p, &m| weighted += p * m);
        let gap = weighted - mean;
        value += lambdas[z][zp] * gap;
        gaps.push(((z, zp), gap));
    }
    Ok(LagrangianTerms { value, risk, gaps, pair_matrix, dscores })
}

fn current_dists(state: &TrainerState) -> Vec<((usize, usize), &Array2<f64>)> {
    state.pair_dists.iter().map(|(&k, s)| (k, &s.p_tilde.weights)).collect()
}

/// Lagrangian value at the state's multipliers and adversarial
/// distributions. Pairs without distributions contribute nothing.
pub fn lagrangian_value(state: &TrainerState, batch: &Batch, scores: &[f64]) -> Result<f64> {
    if scores.len() != batch.len() {
        return Err(Error::Shape(format!("{} scores for {} batch rows", scores.len(), batch.len())));
    }
    Ok(lagrangian_terms(scores, batch.positives.len(), &state.lambdas, &current_dists(state))?.value)
}

/// Lagrangian value and its gradient with respect to the weights.
pub fn lagrangian_grad(
    params: &MlpParams,
    x: ndarray::ArrayView2<f64>,
    n_pos: usize,
    lambdas: &[Vec<f64>],
    dists: &[((usize, usize), &Array2<f64>)],
) -> Result<(LagrangianTerms, MlpParams)> {
    let mut terms = None;
    let (_, grad) = params.grad(x, |scores| {
        let t = lagrangian_terms(scores, n_pos, lambdas, dists)?;
        let out = (t.value, t.dscores.clone());
        terms = Some(t);
        Ok(out)
    })?;
    Ok((terms.expect("closure ran"), grad))
}

fn batch_features(ds: &Dataset, batch: &Batch) -> Array2<f64> {
    ds.features.select(Axis(0), &batch.rows())
}

fn ascend(
    p_tilde: &PairDistribution,
    p_hat: &PairDistribution,
    pair_matrix: &Array2<f64>,
    step: f64,
    gamma: f64,
    method: ProjectionMethod,
) -> Result<PairDistribution> {
    let mut moved = p_tilde.clone();
    moved.weights.scaled_add(step, pair_matrix);
    project_tv_ball_with(&moved, p_hat, gamma, method)
}

/// Sets up the pair distributions for `batch`. Returns whether the batch
/// repeats the previous one (adversarial distributions kept).
fn prepare_batch(state: &mut TrainerState, batch: &Batch, x: &Array2<f64>, cfg: &TrainConfig) -> Result<()> {
    if cfg.mode == Mode::AucMax {
        state.pair_dists.clear();
        return Ok(());
    }
    let key = (batch.positives.clone(), batch.negatives.clone());
    if state.batch_rows.as_ref() == Some(&key) {
        return Ok(());
    }
    state.pair_dists.clear();
    for (z, zp) in batch.active_pairs() {
        let p_hat = empirical_pair_dist(batch, z, zp)?;
        state.pair_dists.insert((z, zp), PairState { p_tilde: p_hat.to_adversarial(), p_hat });
    }
    if cfg.mode == Mode::Robust && state.lambdas.iter().flatten().any(|&l| l > 0.0) {
        let scores = state.params.forward(x.view())?;
        let (pos, neg) = scores.as_slice().unwrap().split_at(batch.positives.len());
        let m = crate::metrics::surrogate_pair_matrix(pos, neg);
        for (&(z, zp), s) in state.pair_dists.iter_mut() {
            let step = cfg.eta_p * state.lambdas[z][zp];
            if step > 0.0 {
                s.p_tilde = ascend(&s.p_hat, &s.p_hat, &m, step, cfg.gamma.radius(z, zp), cfg.projection)?;
            }
        }
    }
    state.batch_rows = Some(key);
    Ok(())
}

/// One descent–ascent step on `batch` (rows of `ds`).
pub fn sgda_iteration(state: &mut TrainerState, ds: &Dataset, batch: &Batch, cfg: &TrainConfig) -> Result<()> {
    if batch.positives.is_empty() || batch.negatives.is_empty() {
        return Err(Error::DegenerateBatch("batch needs both classes".into()));
    }
    let x = batch_features(ds, batch);
    prepare_batch(state, batch, &x, cfg)?;
    let n_pos = batch.positives.len();

    let (terms, grad) = {
        let dists = current_dists(state);
        let perturbed = if cfg.nu > 0.0 {
            let (_, g) = lagrangian_grad(&state.params, x.view(), n_pos, &state.lambdas, &dists)?;
            sam_perturb(&state.params, &g, cfg.nu)?
        } else {
            state.params.clone()
        };
        lagrangian_grad(&perturbed, x.view(), n_pos, &state.lambdas, &dists)?
    };
    if !terms.value.is_finite() {
        return Err(Error::Numeric { layer: "lagrangian".into(), msg: format!("value {}", terms.value) });
    }
    state.params = sgd_step(&state.params, &grad, cfg.eta_theta)?;

    if cfg.mode == Mode::AucMax {
        return Ok(());
    }
    for ((z, zp), gap) in terms.gaps {
        let old = state.lambdas[z][zp];
        state.lambdas[z][zp] = (old + cfg.eta_lambda * gap).max(0.0);
        if cfg.mode == Mode::Robust && old > 0.0 {
            let s = state.pair_dists.get_mut(&(z, zp)).expect("pair prepared");
            s.p_tilde = ascend(
                &s.p_tilde,
                &s.p_hat,
                &terms.pair_matrix,
                cfg.eta_p * old,
                cfg.gamma.radius(z, zp),
                cfg.projection,
            )?;
        }
    }
    check_invariants(state, cfg)
}

/// Multipliers nonnegative and every adversarial distribution inside its ball.
pub fn check_invariants(state: &TrainerState, cfg: &TrainConfig) -> Result<()> {
    for (z, row) in state.lambdas.iter().enumerate() {
        for (zp, &l) in row.iter().enumerate() {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::Invariant(format!("multiplier ({z}, {zp}) = {l}")));
            }
        }
    }
    for (&(z, zp), s) in &state.pair_dists {
        let total = s.p_tilde.total_mass();
        let l1: f64 = (&s.p_tilde.weights - &s.p_hat.weights).mapv(f64::abs).sum();
        let budget = 2.0 * cfg.gamma.radius(z, zp);
        if (total - 1.0).abs() > 1e-8 || l1 > budget + 1e-8 || s.p_tilde.weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Invariant(format!(
                "distribution ({z}, {zp}) left its ball: mass {total}, L1 {l1} > {budget}"
            )));
        }
    }
    Ok(())
}

/// Exact group report and surrogate risk of `params` on `ds` under `groups`.
pub fn evaluate(params: &MlpParams, ds: &Dataset, groups: &[usize]) -> Result<(GroupAucReport, f64)> {
    let scores = params.forward(ds.features.view())?;
    let scores = scores.as_slice().unwrap();
    let report = group_auc_report(scores, &ds.labels, groups, ds.num_groups)?;
    let (pos, neg): (Vec<(f64, i8)>, Vec<(f64, i8)>) =
        scores.iter().copied().zip(ds.labels.iter().copied()).partition(|&(_, y)| y > 0);
    let pos: Vec<f64> = pos.into_iter().map(|p| p.0).collect();
    let neg: Vec<f64> = neg.into_iter().map(|p| p.0).collect();
    Ok((report, surrogate_auc_risk(&pos, &neg)?))
}

/// Index of the selected iterate: lowest objective among iterates whose
/// defined gaps are all at most `tau`, else the smallest largest gap.
/// Ties go to the earliest epoch.
pub fn select_best_iterate(history: &[EpochRecord], tau: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, rec) in history.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) if better(rec, &history[b], tau) => Some(i),
            keep => keep,
        };
    }
    best
}

fn better(a: &EpochRecord, b: &EpochRecord, tau: f64) -> bool {
    match (a.feasible_at(tau), b.feasible_at(tau)) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => a.objective < b.objective,
        (false, false) => a.max_gap() < b.max_gap(),
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    /// Selected iterate (the initialization when no epoch ran).
    pub best: MlpParams,
    pub best_epoch: Option<usize>,
    pub last: MlpParams,
    pub history: Vec<EpochRecord>,
    pub warnings: Vec<String>,
}

/// Trains on `train`, selecting the iterate on `val` (noisy groups, as
/// observed). Each epoch runs `ceil(n / b)` stratified batches.
pub fn train(train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    train_with(train, val, cfg, |_, _| Ok(()))
}

/// As [`train`], calling `on_epoch` after every validation pass.
pub fn train_with<F>(train: &Dataset, val: &Dataset, cfg: &TrainConfig, mut on_epoch: F) -> Result<TrainOutput>
where
    F: FnMut(&EpochRecord, &TrainerState) -> Result<()>,
{
    cfg.validate()?;
    train.validate()?;
    let m = train.num_groups;
    if cfg.gamma.num_groups() != m {
        return Err(Error::Shape(format!("gamma is {0}x{0} for {m} groups", cfg.gamma.num_groups())));
    }
    let n_pos = train.count_positive();
    if n_pos == 0 || n_pos == train.len() {
        return Err(Error::Input("training split needs both classes".into()));
    }
    let mut warnings = Vec::new();
    for z in 0..m {
        if !train.noisy_groups.contains(&z) {
            return Err(Error::Input(format!("group {z} absent from the training split")));
        }
    }
    let select_on = if val.is_empty() {
        warnings.push("validation split is empty; selecting on the training split".to_string());
        train
    } else {
        val
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = MlpDims { input: train.num_features(), hidden1: cfg.hidden[0], hidden2: cfg.hidden[1] };
    let init = MlpParams::init(dims, &mut rng);
    let mut state = TrainerState::new(init.clone(), m);
    let mut history: Vec<EpochRecord> = Vec::new();
    let mut best = init;
    let mut best_epoch = None;
    let tau = cfg.selection_tolerance();
    let iters = train.len().div_ceil(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        for _ in 0..iters {
            let batch = stratified_sample(train, cfg.batch_size, &mut rng)?;
            for w in &batch.warnings {
                if !warnings.contains(w) {
                    warnings.push(w.clone());
                }
            }
            sgda_iteration(&mut state, train, &batch, cfg)?;
        }
        let (report, objective) = evaluate(&state.params, select_on, &select_on.noisy_groups)?;
        let mut rec = EpochRecord {
            epoch,
            auc: report.overall_auc,
            violation: report.violation,
            min_max: report.min_max,
            objective,
            feasible: false,
            gaps: report.gap.clone(),
            lambdas: state.lambdas.clone(),
        };
        rec.feasible = rec.feasible_at(tau);
        if best_epoch.is_none() || better(&rec, &history[best_epoch.unwrap()], tau) {
            best = state.params.clone();
            best_epoch = Some(history.len());
        }
        on_epoch(&rec, &state)?;
        history.push(rec);
    }
    Ok(TrainOutput {
        best,
        best_epoch: best_epoch.map(|i| history[i].epoch),
        last: state.params,
        history,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn record(epoch: usize, objective: f64, max_gap: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            auc: 0.8,
            violation: Some(max_gap.abs()),
            min_max: Some(0.9),
            objective,
            feasible: false,
            gaps: vec![vec![Some(max_gap), Some(-0.01)]],
            lambdas: vec![vec![0.0]],
        }
    }

    #[test]
    fn single_feasible_iterate_wins() {
        let h = vec![record(1, 0.1, 0.05), record(2, 0.9, 0.0), record(3, 0.2, 0.04)];
        assert_eq!(select_best_iterate(&h, 0.01), Some(1));
    }

    #[test]
    fn infeasible_fallback_minimizes_largest_gap() {
        let h = vec![record(1, 0.1, 0.05), record(2, 0.9, 0.03), record(3, 0.2, 0.04)];
        assert_eq!(select_best_iterate(&h, 0.01), Some(1));
    }

    #[test]
    fn feasible_iterates_compare_objective() {
        let h = vec![record(1, 0.30, 0.0), record(2, 0.25, 0.0), record(3, 0.25, 0.0)];
        assert_eq!(select_best_iterate(&h, 0.01), Some(1));
        assert_eq!(select_best_iterate(&[], 0.01), None);
    }

    #[test]
    fn zero_multipliers_reduce_to_risk() {
        let scores = [1.0, 0.5, 0.0, -1.0];
        let d = array![[1.0, 0.0], [0.0, 0.0]];
        let lambdas = vec![vec![0.0]];
        let t = lagrangian_terms(&scores, 2, &lambdas, &[((0, 0), &d)]).unwrap();
        let risk = surrogate_auc_risk(&scores[..2], &scores[2..]).unwrap();
        assert!((t.value - risk).abs() < 1e-15);
    }

    #[test]
    fn uniform_distribution_has_zero_gap() {
        let scores = [1.0, 0.5, 0.0, -1.0];
        let d = Array2::from_elem((2, 2), 0.25);
        let lambdas = vec![vec![3.0]];
        let t = lagrangian_terms(&scores, 2, &lambdas, &[((0, 0), &d)]).unwrap();
        let risk = surrogate_auc_risk(&scores[..2], &scores[2..]).unwrap();
        assert!((t.value - risk).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_point_mass() {
        // positives {1, 0}, negatives {0, -1}; all mass on (pos 0, neg 1)
        let scores = [1.0, 0.0, 0.0, -1.0];
        let d = array![[0.0, 1.0], [0.0, 0.0]];
        let lambdas = vec![vec![1.0]];
        let t = lagrangian_terms(&scores, 2, &lambdas, &[((0, 0), &d)]).unwrap();
        let s = |a: f64| 1.0 / (1.0 + (-a).exp());
        let l = |a: f64| (1.0 + (-a).exp()).ln();
        let risk = (l(1.0) + l(2.0) + l(0.0) + l(1.0)) / 4.0;
        let gap = s(2.0) - (s(1.0) + s(2.0) + s(0.0) + s(1.0)) / 4.0;
        assert!((t.value - (risk + gap)).abs() < 1e-15, "{} vs {}", t.value, risk + gap);
    }

    #[test]
    fn mode_round_trip() {
        for m in [Mode::Robust, Mode::NonRobust, Mode::AucMax] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("fair".parse::<Mode>().is_err());
    }
}
