use crlr::synthgen::{generate, resample_test_grid, SynthConfig};
use crlr::Dataset;

fn pool_config(r: f64, seed: u64) -> SynthConfig {
    SynthConfig {
        n_pool: 100_000,
        target_n: None,
        ..SynthConfig::with_target(0, 10, 10, r, seed)
    }
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn bias_corr(d: &Dataset, col: usize) -> f64 {
    let v: Vec<f64> = d
        .features()
        .column(col)
        .iter()
        .map(|&e| f64::from(e))
        .collect();
    let y: Vec<f64> = d.labels().iter().map(|&e| f64::from(e)).collect();
    corr(&v, &y)
}

#[test]
fn half_rate_leaves_bias_feature_independent() {
    let s = generate(&pool_config(0.5, 1)).unwrap();
    let c = bias_corr(&s.dataset, s.config.bias_column());
    assert!(c.abs() < 0.05, "corr {c}");
}

#[test]
fn high_rate_makes_bias_feature_predictive() {
    let s = generate(&pool_config(0.9, 2)).unwrap();
    let c = bias_corr(&s.dataset, s.config.bias_column());
    assert!(c >= 0.3, "corr {c}");
    let low = generate(&pool_config(0.1, 3)).unwrap();
    assert!(bias_corr(&low.dataset, low.config.bias_column()) <= -0.3);
}

#[test]
fn pool_marginals_are_fair_coins() {
    let s = generate(&pool_config(0.7, 4)).unwrap();
    let n = s.pool_size() as f64;
    let sigma = (0.25 / n).sqrt();
    for col in s.pool_features.columns() {
        let freq = col.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        assert!((freq - 0.5).abs() < 5.0 * sigma, "{freq}");
    }
}

#[test]
fn selected_fraction_matches_expectation() {
    for (r, seed) in [(0.85, 5), (0.3, 6)] {
        let s = generate(&pool_config(r, seed)).unwrap();
        let b = s.config.bias_column();
        let n = s.pool_size() as f64;
        let agree = s
            .pool_features
            .column(b)
            .iter()
            .zip(&s.pool_labels)
            .filter(|(v, y)| v == y)
            .count() as f64
            / n;
        let expected = r * agree + (1.0 - r) * (1.0 - agree);
        let observed = s.dataset.n_samples() as f64 / n;
        let sigma = (expected * (1.0 - expected) / n).sqrt();
        assert!(
            (observed - expected).abs() < 5.0 * sigma,
            "{observed} vs {expected}"
        );
    }
}

#[test]
fn unbiased_thinning_keeps_marginals() {
    let s = generate(&pool_config(0.5, 7)).unwrap();
    let n = s.dataset.n_samples() as f64;
    let pool_n = s.pool_size() as f64;
    for j in 0..s.dataset.n_features() {
        let sel = s
            .dataset
            .features()
            .column(j)
            .iter()
            .map(|&v| f64::from(v))
            .sum::<f64>()
            / n;
        let pool = s
            .pool_features
            .column(j)
            .iter()
            .map(|&v| f64::from(v))
            .sum::<f64>()
            / pool_n;
        let sigma = (pool * (1.0 - pool) / n).sqrt();
        assert!((sel - pool).abs() < 5.0 * sigma);
    }
}

#[test]
fn labels_depend_on_the_causal_block() {
    let s = generate(&pool_config(0.5, 8)).unwrap();
    let c0 = bias_corr(&s.dataset, 0);
    assert!(c0 > 0.1, "{c0}");
    let frac = s
        .dataset
        .labels()
        .iter()
        .map(|&v| f64::from(v))
        .sum::<f64>()
        / s.dataset.n_samples() as f64;
    assert!((0.3..0.7).contains(&frac), "label rate {frac}");
}

#[test]
fn test_grid_draws_independent_sets() {
    let cfg = SynthConfig::with_target(300, 3, 3, 0.5, 9);
    let grid: Vec<f64> = (1..=9).map(|i| f64::from(i) / 10.0).collect();
    let sets = resample_test_grid(&cfg, &grid).unwrap();
    assert_eq!(sets.len(), 9);
    for (s, &r) in sets.iter().zip(&grid) {
        assert_eq!(s.config.bias_rate, r);
        assert_eq!(s.dataset.n_samples(), 300);
    }
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            assert_ne!(sets[i].dataset, sets[j].dataset);
        }
    }
    let again = resample_test_grid(&cfg, &grid).unwrap();
    assert_eq!(sets[4].dataset, again[4].dataset);
}
