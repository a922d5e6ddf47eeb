use loadbench_core::dist::student_t_quantile;
use loadbench_core::stats::{
    composite_ranking, diebold_mariano, hac_variance_of_mean, newey_west_lags, robustness_cv, window_ci, RankingInput,
    StatsError,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn abs_normals(n: usize, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

#[test]
fn dm_power_on_scale_separated_pair() {
    let a = abs_normals(1000, 1.0, 1);
    let b = abs_normals(1000, 2.0, 2);
    let r = diebold_mariano(&a, &b, None).unwrap();
    assert!(r.p_value < 1e-4, "{r:?}");
    assert!(r.statistic < 0.0, "a has smaller losses");
    assert_eq!(r.n, 1000);
    assert_eq!(r.hac_lags, newey_west_lags(1000));
}

#[test]
fn dm_antisymmetry_is_exact() {
    for seed in 0..10 {
        let a = abs_normals(300, 1.0, seed);
        let b = abs_normals(300, 1.1, seed + 100);
        let ab = diebold_mariano(&a, &b, None).unwrap();
        let ba = diebold_mariano(&b, &a, None).unwrap();
        assert_eq!(ab.statistic, -ba.statistic);
        assert_eq!(ab.p_value, ba.p_value);
    }
}

#[test]
fn dm_degenerate_on_identical_errors() {
    let a = abs_normals(200, 1.0, 4);
    assert!(matches!(diebold_mariano(&a, &a, None), Err(StatsError::Degenerate { n: 200, .. })));
    // sign flips leave |e| unchanged
    let flipped: Vec<f64> = a.iter().map(|v| -v).collect();
    assert!(matches!(diebold_mariano(&a, &flipped, None), Err(StatsError::Degenerate { .. })));
}

#[test]
fn dm_preconditions() {
    assert!(matches!(diebold_mariano(&[1.0; 5], &[2.0; 5], None), Err(StatsError::TooShort { .. })));
    assert!(matches!(diebold_mariano(&[1.0; 12], &[2.0; 11], None), Err(StatsError::LengthMismatch(12, 11))));
}

#[test]
fn dm_p_value_is_two_sided_normal() {
    let a = abs_normals(500, 1.0, 8);
    let b = abs_normals(500, 1.05, 9);
    let r = diebold_mariano(&a, &b, Some(0)).unwrap();
    let expected = 2.0 * (1.0 - loadbench_core::dist::normal_cdf(r.statistic.abs()));
    assert!((r.p_value - expected).abs() < 1e-12);
    assert!((0.0..=1.0).contains(&r.p_value));
}

#[test]
fn newey_west_lag_rule() {
    assert_eq!(newey_west_lags(100), 4);
    assert_eq!(newey_west_lags(720), 6);
    assert_eq!(newey_west_lags(1000), 6);
    assert_eq!(newey_west_lags(10), 2);
}

#[test]
fn hac_is_non_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let dist = Normal::new(0.0, 1.0).unwrap();
    for lags in 0..12 {
        let d: Vec<f64> = (0..60).map(|_| dist.sample(&mut rng)).collect();
        assert!(hac_variance_of_mean(&d, lags) >= 0.0);
    }
}

#[test]
fn window_ci_hand_formula() {
    let (m, hw) = window_ci(&[1.0, 2.0, 3.0], 0.95).unwrap();
    assert_eq!(m, 2.0);
    let expected = student_t_quantile(0.975, 2.0) * 1.0 / 3f64.sqrt();
    assert!((hw - expected).abs() < 1e-12);
    let (_, wider) = window_ci(&[0.0, 2.0, 4.0], 0.95).unwrap();
    assert!(wider > hw);
    assert!(window_ci(&[1.0], 0.95).is_err());
}

#[test]
fn cv_scale_invariance() {
    let v = [0.6, 0.75, 0.9, 1.4];
    let base = robustness_cv(&v).unwrap();
    let scaled: Vec<f64> = v.iter().map(|x| x * 12.5).collect();
    assert!((robustness_cv(&scaled).unwrap() - base).abs() < 1e-12);
}

fn input(model: &str, cov: f64, crps: f64, cv: f64, lat: f64) -> RankingInput {
    RankingInput {
        model: model.into(),
        coverage_deviation: cov,
        crps,
        robustness_cv: cv,
        latency_seconds: lat,
    }
}

#[test]
fn dominating_model_scores_number_of_dimensions() {
    let ranked = composite_ranking(&[input("a", 0.01, 1.0, 0.1, 0.01), input("b", 0.2, 2.0, 0.3, 0.2)]).unwrap();
    assert_eq!(ranked[0].model, "a");
    assert_eq!(ranked[0].composite, 4);
    assert_eq!(ranked[1].composite, 8);
}

#[test]
fn ranking_ties_and_permutation() {
    let inputs = vec![
        input("x", 0.05, 10.0, 0.2, 0.5),
        input("y", 0.05, 12.0, 0.1, 0.5),
        input("z", 0.10, 11.0, 0.3, 0.1),
    ];
    let ranked = composite_ranking(&inputs).unwrap();
    let x = ranked.iter().find(|r| r.model == "x").unwrap();
    let y = ranked.iter().find(|r| r.model == "y").unwrap();
    assert_eq!(x.ranks[0], 1);
    assert_eq!(y.ranks[0], 1);
    assert_eq!(x.ranks[3], 2);
    let mut reversed = inputs.clone();
    reversed.reverse();
    assert_eq!(composite_ranking(&reversed).unwrap(), ranked);
}

#[test]
fn ranking_invariant_to_monotone_transform() {
    let inputs = vec![
        input("a", 0.039, 1007.0, 0.268, 0.031),
        input("b", 0.190, 1125.0, 0.301, 0.026),
        input("c", 0.051, 1071.0, 0.415, 0.048),
    ];
    let base = composite_ranking(&inputs).unwrap();
    let transformed: Vec<RankingInput> = inputs
        .iter()
        .map(|i| RankingInput {
            crps: i.crps.ln(),
            latency_seconds: i.latency_seconds.sqrt() * 1e3,
            ..i.clone()
        })
        .collect();
    assert_eq!(composite_ranking(&transformed).unwrap(), base);
}

#[test]
fn three_model_fixture_composites() {
    let ranked = composite_ranking(&[
        input("chronos-bolt", 0.039, 1007.0, 0.268, 0.031),
        input("moirai-2", 0.190, 1125.0, 0.301, 0.026),
        input("chronos-2", 0.051, 1071.0, 0.415, 0.048),
    ])
    .unwrap();
    let order: Vec<(&str, usize)> = ranked.iter().map(|r| (r.model.as_str(), r.composite)).collect();
    assert_eq!(order, vec![("chronos-bolt", 5), ("moirai-2", 9), ("chronos-2", 10)]);
    assert_eq!(ranked[0].ranks, [1, 1, 1, 2]);
    assert_eq!(ranked[1].ranks, [3, 3, 2, 1]);
    assert_eq!(ranked[2].ranks, [2, 2, 3, 3]);
}
