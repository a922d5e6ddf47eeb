use loadbench_core::dist::{gaussian_crps, normal_quantile};
use loadbench_core::forecast::QuantileLevels;
use loadbench_core::metrics::{
    coverage, crps_samples, mae, mase, norm_interval_width, reliability_curve, seasonal_scale, winkler, MetricError,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn brute_force_crps(y: f64, xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let first: f64 = xs.iter().map(|x| (x - y).abs()).sum::<f64>() / n;
    let mut pairs = 0.0;
    for a in xs {
        for b in xs {
            pairs += (a - b).abs();
        }
    }
    first - 0.5 * pairs / (n * n)
}

#[test]
fn crps_matches_gaussian_closed_form() {
    let (mu, sigma) = (1000.0, 50.0);
    let steps = 50;
    let actuals: Vec<f64> = normals(steps, 1).iter().map(|z| mu + 1.5 * sigma * z).collect();
    let samples: Vec<Vec<f64>> = (0..steps)
        .map(|h| normals(10_000, 100 + h as u64).iter().map(|z| mu + sigma * z).collect())
        .collect();
    let estimate = crps_samples(&actuals, &samples).unwrap();
    let exact = actuals.iter().map(|&y| gaussian_crps(mu, sigma, y)).sum::<f64>() / steps as f64;
    assert!((estimate - exact).abs() / exact < 0.02, "estimate {estimate} vs closed form {exact}");
    // far from the centre a single step is already tight
    let far = crps_samples(&[mu + 2.0 * sigma], &samples[..1]).unwrap();
    let far_exact = gaussian_crps(mu, sigma, mu + 2.0 * sigma);
    assert!((far - far_exact).abs() / far_exact < 0.02, "{far} vs {far_exact}");
}

#[test]
fn crps_matches_brute_force_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..20 {
        let s = 2 + trial * 7;
        let xs: Vec<f64> = (0..s)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                10.0 * z
            })
            .collect();
        let y = 3.0 * trial as f64 - 20.0;
        let fast = crps_samples(&[y], std::slice::from_ref(&xs)).unwrap();
        let slow = brute_force_crps(y, &xs);
        assert!((fast - slow).abs() < 1e-9 * (1.0 + slow.abs()), "S = {s}: {fast} vs {slow}");
    }
}

#[test]
fn crps_hand_cases() {
    assert_eq!(crps_samples(&[5.0f64], &[vec![5.0; 10]]).unwrap(), 0.0);
    assert!((crps_samples(&[1.0f64], &[vec![0.0, 2.0]]).unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(crps_samples(&[1.0f64], &[vec![1.0]]), Err(MetricError::TooFewSamples));
}

#[test]
fn crps_bounded_by_sample_mean_error_plus_dispersion() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let xs: Vec<f64> = (0..40)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                100.0 + 20.0 * z
            })
            .collect();
        let z: f64 = StandardNormal.sample(&mut rng);
        let y = 100.0 + 30.0 * z;
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let dispersion = xs.iter().map(|x| (x - m).abs()).sum::<f64>() / xs.len() as f64;
        let score = crps_samples(&[y], std::slice::from_ref(&xs)).unwrap();
        assert!(score <= (m - y).abs() + dispersion + 1e-9);
        assert!(score >= 0.0);
    }
}

#[test]
fn winkler_hand_cases() {
    let w = |y: f64, l: f64, u: f64| winkler(&[y], &[l], &[u], 0.1).unwrap();
    assert_eq!(w(5.0, 0.0, 10.0), 10.0);
    assert_eq!(w(12.0, 0.0, 10.0), 50.0);
    assert_eq!(w(-3.0, 0.0, 10.0), 70.0);
    assert!(w(5.0, -1.0, 10.0) > w(5.0, 0.0, 10.0));
    // moving the actual out by d adds exactly (2/δ)·d
    assert!((w(10.0 + 2.5, 0.0, 10.0) - w(10.0, 0.0, 10.0) - 20.0 * 2.5).abs() < 1e-12);
    assert!(winkler(&[1.0], &[2.0], &[1.0], 0.1).is_err());
    assert!(winkler(&[1.0], &[0.0], &[2.0], 0.0).is_err());
}

#[test]
fn mase_hand_cases() {
    // seasonal differences with lag 2 over the history are all 2
    let history = [0.0, 0.0, 2.0, 2.0, 4.0, 4.0];
    assert_eq!(seasonal_scale(&history, 2).unwrap(), 2.0);
    assert_eq!(mase(&[10.0, 12.0], &[11.0, 13.0], &history, 2).unwrap(), 0.5);
    assert_eq!(mase(&[10.0, 12.0], &[10.0, 12.0], &history, 2).unwrap(), 0.0);
    // naive errors equal to the in-sample seasonal error give exactly 1
    assert_eq!(mase(&[8.0, 8.0], &[6.0, 6.0], &history, 2).unwrap(), 1.0);
    assert_eq!(
        mase(&[1.0], &[1.0], &[3.0, 3.0, 3.0], 1),
        Err(MetricError::DegenerateScaling { lag: 1 })
    );
    assert!(matches!(mase(&[1.0], &[1.0], &[1.0, 2.0], 2), Err(MetricError::ShortHistory { .. })));
}

#[test]
fn mase_is_scale_invariant() {
    let history: Vec<f64> = (0..400).map(|i| (i as f64 * 0.37).sin() * 50.0 + 500.0).collect();
    let actuals = [510.0, 530.0, 470.0];
    let forecasts = [505.0, 520.0, 490.0];
    let base = mase(&actuals, &forecasts, &history, 168).unwrap();
    for k in [0.001, 3.0, 1e4] {
        let scale = |v: &[f64]| v.iter().map(|x| x * k).collect::<Vec<_>>();
        let scaled = mase(&scale(&actuals), &scale(&forecasts), &scale(&history), 168).unwrap();
        assert!((scaled - base).abs() < 1e-9 * base);
    }
}

fn standard_normal_quantiles(steps: usize, levels: &[f64]) -> Vec<Vec<f64>> {
    let row: Vec<f64> = levels.iter().map(|&p| normal_quantile(p)).collect();
    vec![row; steps]
}

#[test]
fn coverage_monte_carlo() {
    let levels = QuantileLevels::default_grid();
    let actuals = normals(10_000, 21);
    let q = standard_normal_quantiles(actuals.len(), levels.as_slice());
    let c = coverage(&actuals, &q, levels.as_slice(), 0.90).unwrap();
    assert!((c - 0.90).abs() <= 0.01, "coverage {c}");
}

#[test]
fn coverage_edge_cases() {
    let levels = QuantileLevels::default_grid();
    let q = standard_normal_quantiles(3, levels.as_slice());
    assert_eq!(coverage(&[0.0, 0.0, 0.0], &q, levels.as_slice(), 0.9).unwrap(), 1.0);
    assert_eq!(coverage(&[9.0, 9.0, 9.0], &q, levels.as_slice(), 0.9).unwrap(), 0.0);
    assert!(matches!(
        coverage(&[0.0, 0.0, 0.0], &q, levels.as_slice(), 0.33),
        Err(MetricError::MissingLevel(_))
    ));
}

#[test]
fn reliability_on_the_diagonal() {
    let levels = QuantileLevels::default_grid();
    let actuals = normals(10_000, 99);
    let q = standard_normal_quantiles(actuals.len(), levels.as_slice());
    let curve = reliability_curve(&actuals, &q, levels.as_slice()).unwrap();
    assert_eq!(curve.len(), 10);
    for w in curve.windows(2) {
        assert!(w[0].nominal < w[1].nominal);
    }
    for point in &curve {
        assert!((point.value - point.nominal).abs() <= 0.02, "{point:?}");
    }
}

#[test]
fn reliability_vacuous_and_zero_width() {
    let levels = QuantileLevels::default_grid();
    let n = levels.len();
    let actuals = normals(500, 5);
    let huge: Vec<Vec<f64>> = vec![(0..n).map(|j| if j < n / 2 { -1e12 } else { 1e12 }).collect(); actuals.len()];
    for p in reliability_curve(&actuals, &huge, levels.as_slice()).unwrap() {
        assert_eq!(p.value, 1.0);
    }
    let flat = vec![vec![0.123; n]; actuals.len()];
    for p in reliability_curve(&actuals, &flat, levels.as_slice()).unwrap() {
        assert_eq!(p.value, 0.0);
    }
}

#[test]
fn interval_width_examples() {
    let levels = QuantileLevels::new(vec![0.05, 0.5, 0.95]).unwrap();
    let q = vec![vec![96.0, 100.0, 104.0]; 4];
    let w = norm_interval_width(&q, levels.as_slice(), 100.0).unwrap();
    assert_eq!(w.len(), 1);
    assert!((w[0].value - 0.08).abs() < 1e-12);
    let scaled: Vec<Vec<f64>> = q.iter().map(|r| r.iter().map(|v| v * 7.0).collect()).collect();
    let w7 = norm_interval_width(&scaled, levels.as_slice(), 700.0).unwrap();
    assert!((w7[0].value - 0.08).abs() < 1e-12);
    let zero = vec![vec![5.0; 3]; 4];
    assert_eq!(norm_interval_width(&zero, levels.as_slice(), 100.0).unwrap()[0].value, 0.0);
}

#[test]
fn scores_are_invariant_to_step_order() {
    let levels = QuantileLevels::default_grid();
    let actuals = normals(50, 8);
    let q: Vec<Vec<f64>> = (0..50)
        .map(|h| levels.as_slice().iter().map(|&p| normal_quantile(p) * (1.0 + h as f64 / 50.0)).collect())
        .collect();
    let point: Vec<f64> = (0..50).map(|h| h as f64 / 100.0).collect();
    let mut order: Vec<usize> = (0..50).collect();
    order.reverse();
    order.swap(3, 17);
    let pa: Vec<f64> = order.iter().map(|&i| actuals[i]).collect();
    let pq: Vec<Vec<f64>> = order.iter().map(|&i| q[i].clone()).collect();
    let pp: Vec<f64> = order.iter().map(|&i| point[i]).collect();
    assert_eq!(
        coverage(&actuals, &q, levels.as_slice(), 0.8).unwrap(),
        coverage(&pa, &pq, levels.as_slice(), 0.8).unwrap()
    );
    assert!((mae(&actuals, &point).unwrap() - mae(&pa, &pp).unwrap()).abs() < 1e-12);
    assert!((crps_samples(&actuals, &q).unwrap() - crps_samples(&pa, &pq).unwrap()).abs() < 1e-12);
}
