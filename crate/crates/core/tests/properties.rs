use fairauc::dataset::{inject_group_noise, split, stratified_sample, Dataset};
use fairauc::dro::{estimate_gamma, greedy_tv_max, project_tv_ball_slice, tv_distance, GammaRecord, ProjectionMethod};
use fairauc::metrics::{exact_auc, group_auc_report};
use fairauc::scorer::{sam_perturb, MlpDims, MlpParams};
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, len).prop_filter_map("all zero", |raw| {
        let s: f64 = raw.iter().sum();
        (s > 1e-6).then(|| raw.iter().map(|x| x / s).collect())
    })
}

/// Reference distribution, a point to project, and a radius.
fn projection_case(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (2..=max_len).prop_flat_map(|k| {
        (
            distribution(k),
            prop::collection::vec(-0.8f64..0.8, k),
            prop_oneof![Just(0.0), 0.0f64..1.2],
        )
            .prop_map(|(p, noise, g)| {
                let v = p.iter().zip(&noise).map(|(a, b)| a + b).collect();
                (p, v, g)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn exact_auc_matches_enumeration(
        pos in prop::collection::vec(0i32..6, 1..30),
        neg in prop::collection::vec(0i32..6, 1..30),
    ) {
        let pos: Vec<f64> = pos.into_iter().map(f64::from).collect();
        let neg: Vec<f64> = neg.into_iter().map(f64::from).collect();
        let wins = pos.iter().flat_map(|p| neg.iter().map(move |n| u64::from(p > n))).sum::<u64>();
        let expected = wins as f64 / (pos.len() * neg.len()) as f64;
        prop_assert_eq!(exact_auc(&pos, &neg).unwrap(), expected);
    }

    #[test]
    fn group_aucs_average_to_overall(
        rows in prop::collection::vec((0i32..5, any::<bool>(), 0usize..3), 4..60),
    ) {
        let scores: Vec<f64> = rows.iter().map(|r| f64::from(r.0)).collect();
        let labels: Vec<i8> = rows.iter().map(|r| if r.1 { 1 } else { -1 }).collect();
        let groups: Vec<usize> = rows.iter().map(|r| r.2).collect();
        prop_assume!(labels.contains(&1) && labels.contains(&-1));
        let report = group_auc_report(&scores, &labels, &groups, 3).unwrap();
        let mut weighted = 0.0;
        for z in 0..3 {
            for zp in 0..3 {
                if let Some(a) = report.group_auc[z][zp] {
                    weighted += report.pair_weight[z][zp] * a;
                }
            }
        }
        prop_assert!((weighted - report.overall_auc).abs() < 1e-12);
    }

    #[test]
    fn projection_is_feasible_and_idempotent((p_hat, v, gamma) in projection_case(40)) {
        let q = project_tv_ball_slice(&v, &p_hat, gamma, ProjectionMethod::Exact).unwrap();
        let l1: f64 = q.iter().zip(&p_hat).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(q.iter().all(|&x| x >= 0.0));
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
        prop_assert!(l1 <= 2.0 * gamma + 1e-8);
        let again = project_tv_ball_slice(&q, &p_hat, gamma, ProjectionMethod::Exact).unwrap();
        for (a, b) in q.iter().zip(&again) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn exact_and_dykstra_projections_agree((p_hat, v, gamma) in projection_case(6)) {
        let a = project_tv_ball_slice(&v, &p_hat, gamma, ProjectionMethod::Exact).unwrap();
        let b = project_tv_ball_slice(&v, &p_hat, gamma, ProjectionMethod::Dykstra).unwrap();
        let dist = |q: &[f64]| q.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        // the exact solver is never farther from the input than Dykstra
        prop_assert!(dist(&a) <= dist(&b) + 1e-9);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-5, "{:?} vs {:?}", a, b);
        }
    }

    #[test]
    fn projection_beats_feasible_candidates((p_hat, v, gamma) in projection_case(8), t in 0.0f64..1.0, seed in any::<u64>()) {
        // any point on the segment from p_hat toward a random distribution,
        // shrunk into the ball, is no closer to v than the projection
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let other: Vec<f64> = {
            use rand::Rng;
            let raw: Vec<f64> = (0..p_hat.len()).map(|_| rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|x| x / s).collect()
        };
        let l1: f64 = other.iter().zip(&p_hat).map(|(a, b)| (a - b).abs()).sum();
        let scale = if l1 > 0.0 { (t * 2.0 * gamma / l1).min(1.0) } else { 0.0 };
        let cand: Vec<f64> = p_hat.iter().zip(&other).map(|(p, o)| p + scale * (o - p)).collect();
        let q = project_tv_ball_slice(&v, &p_hat, gamma, ProjectionMethod::Exact).unwrap();
        let dist = |x: &[f64]| x.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        prop_assert!(dist(&q) <= dist(&cand) + 1e-10);
    }

    #[test]
    fn greedy_value_is_monotone_in_radius(
        (p_hat, values) in (2usize..10).prop_flat_map(|k| (distribution(k), prop::collection::vec(-1.0f64..1.0, k))),
        g1 in 0.0f64..1.0,
        g2 in 0.0f64..1.0,
    ) {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let a = greedy_tv_max(&p_hat, &values, lo).unwrap().0;
        let b = greedy_tv_max(&p_hat, &values, hi).unwrap().0;
        prop_assert!(a <= b + 1e-12);
        let (_, q) = greedy_tv_max(&p_hat, &values, hi).unwrap();
        prop_assert!(tv_distance(&q, &p_hat).unwrap() <= hi + 1e-12);
    }

    #[test]
    fn tv_distance_is_a_bounded_symmetric_metric(
        (p, q) in (1usize..12).prop_flat_map(|k| (distribution(k), distribution(k))),
    ) {
        let d = tv_distance(&p, &q).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
        prop_assert_eq!(d, tv_distance(&q, &p).unwrap());
        prop_assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn gamma_matches_closed_form(
        rows in prop::collection::vec((any::<bool>(), 0usize..3, 0u8..4, 0u8..4), 1..50),
    ) {
        let records: Vec<GammaRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| GammaRecord {
                id: i.to_string(),
                label: if r.0 { 1 } else { -1 },
                group: r.1,
                sim_pos: f64::from(r.2),
                sim_neg: f64::from(r.3),
            })
            .collect();
        let g = estimate_gamma(&records, 3).unwrap();
        for z in 0..3 {
            for zp in 0..3 {
                let pos: Vec<_> = records.iter().filter(|r| r.label > 0 && r.group == z).collect();
                let neg: Vec<_> = records.iter().filter(|r| r.label < 0 && r.group == zp).collect();
                if pos.is_empty() || neg.is_empty() {
                    prop_assert_eq!(g.get(z, zp), None);
                    continue;
                }
                let fp = pos.iter().filter(|r| r.is_clean()).count() as f64 / pos.len() as f64;
                let fn_ = neg.iter().filter(|r| r.is_clean()).count() as f64 / neg.len() as f64;
                let got = g.get(z, zp).unwrap();
                prop_assert!((got - (1.0 - fp * fn_)).abs() <= 1e-12);
                prop_assert!((0.0..=1.0).contains(&got));
            }
        }
    }

    #[test]
    fn stratified_batches_respect_strata(
        rows in prop::collection::vec((any::<bool>(), 0usize..2), 4..80),
        b in 4usize..80,
        seed in any::<u64>(),
    ) {
        let n = rows.len();
        let labels: Vec<i8> = rows.iter().map(|r| if r.0 { 1 } else { -1 }).collect();
        let groups: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let ds = Dataset::new(Array2::zeros((n, 1)), labels.clone(), groups.clone(), 2).unwrap();
        let batch = stratified_sample(&ds, b, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for (z, [pos, neg]) in batch.strata.iter().enumerate() {
            for (k, members) in [pos, neg].into_iter().enumerate() {
                let total = (0..n).filter(|&i| groups[i] == z && (labels[i] < 0) == (k == 1)).count();
                prop_assert_eq!(members.len(), (b * total).div_ceil(n).min(total));
                prop_assert!(members.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(members.iter().all(|&i| groups[i] == z && (labels[i] < 0) == (k == 1)));
            }
        }
    }

    #[test]
    fn split_partitions_rows(n in 5usize..200, seed in any::<u64>()) {
        let labels: Vec<i8> = (0..n).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let groups: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let features = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let ds = Dataset::new(features, labels, groups, 2).unwrap();
        let (a, b, c) = split(&ds, (0.6, 0.2, 0.2), seed).unwrap();
        let mut ids: Vec<usize> = [a, b, c].iter().flat_map(|d| d.features.column(0).to_vec()).map(|x| x as usize).collect();
        ids.sort_unstable();
        prop_assert_eq!(ids, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn noise_flips_exact_count(n in 2usize..300, rho in 0.0f64..1.0, seed in any::<u64>()) {
        let groups: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let labels = vec![1i8; n];
        let ds = Dataset::new(Array2::zeros((n, 1)), labels, groups, 3).unwrap();
        let noisy = inject_group_noise(&ds, rho, seed).unwrap();
        let flipped = noisy.noisy_groups.iter().zip(noisy.clean_groups.as_ref().unwrap()).filter(|(a, b)| a != b).count();
        prop_assert_eq!(flipped, (rho * n as f64 + 1e-9).floor() as usize);
    }

    #[test]
    fn sam_perturbation_has_radius_nu(seed in any::<u64>(), nu in 1e-4f64..1.0) {
        let dims = MlpDims { input: 3, hidden1: 4, hidden2: 3 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = MlpParams::init(dims, &mut rng);
        let g = MlpParams::init(dims, &mut rng);
        let q = sam_perturb(&p, &g, nu).unwrap();
        let mut diff = q.clone();
        diff.scaled_add(-1.0, &p).unwrap();
        prop_assert!((diff.l2_norm() - nu).abs() <= 1e-9 * (1.0 + nu));
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), d in 1usize..6, h1 in 1usize..6, h2 in 1usize..6) {
        let dims = MlpDims { input: d, hidden1: h1, hidden2: h2 };
        let p = MlpParams::init(dims, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(MlpParams::from_bytes(&p.to_bytes()).unwrap(), p);
    }
}
