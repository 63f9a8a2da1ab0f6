use fbmsde::fbm::{
    build_covariance_matrix, coarsen, covariance, sample_multi, sample_path_cholesky, sample_path_circulant,
    CholeskySampler, CirculantSampler,
};
use fbmsde::seed::rng_from_seed;
use fbmsde::{HurstVector, Partition};

const PATHS: u64 = 10_000;

// sample mean and its standard error
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn assert_within_3se(xs: &[f64], expected: f64, what: &str) {
    let (m, se) = mean_se(xs);
    assert!((m - expected).abs() <= 3.0 * se, "{what}: {m} vs {expected} (se {se})");
}

#[test]
fn cholesky_variance_of_brownian_endpoint() {
    let grid = Partition::uniform(16, 2.0).unwrap();
    let sampler = CholeskySampler::new(&grid, 0.5).unwrap();
    let sq: Vec<f64> = (0..PATHS)
        .map(|s| sampler.sample_levels(&mut rng_from_seed(s))[16].powi(2))
        .collect();
    assert_within_3se(&sq, 2.0, "Var(B_T)");
}

#[test]
fn cholesky_half_time_covariance() {
    let grid = Partition::uniform(32, 1.0).unwrap();
    let prods: Vec<f64> = (0..PATHS)
        .map(|s| {
            let p = sample_path_cholesky(&grid, 0.7, s).unwrap();
            p.value(16)[0] * p.value(32)[0]
        })
        .collect();
    assert_within_3se(&prods, covariance(0.5, 1.0, 0.7).unwrap(), "Cov(B_T/2, B_T)");
}

#[test]
fn circulant_brownian_increments_are_uncorrelated() {
    let sampler = CirculantSampler::new(100_000, 1.0, 0.5).unwrap();
    let levels = sampler.sample_levels(&mut rng_from_seed(3));
    let inc: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
    let n = inc.len() as f64;
    let m = inc.iter().sum::<f64>() / n;
    let var = inc.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    let lag1 = inc.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / var;
    assert!(lag1.abs() <= 3.0 / n.sqrt(), "lag-1 autocorrelation {lag1}");
}

#[test]
fn circulant_mean_square_endpoint() {
    let t: f64 = 1.5;
    let sq: Vec<f64> = (0..PATHS)
        .map(|s| sample_path_circulant(32, t, 0.6, s).unwrap().value(32)[0].powi(2))
        .collect();
    assert_within_3se(&sq, t.powf(1.2), "E B_T^2");
}

#[test]
fn coordinates_are_independent_with_correct_variance() {
    let grid = Partition::uniform(8, 1.0).unwrap();
    let hurst = HurstVector::uniform(0.6, 2).unwrap();
    let paths: Vec<_> = (0..PATHS).map(|s| sample_multi(&grid, &hurst, s).unwrap()).collect();
    let cross: Vec<f64> = paths.iter().map(|p| p.value(8)[0] * p.value(8)[1]).collect();
    assert_within_3se(&cross, 0.0, "Cov(B1_T, B2_T)");
    for i in 0..2 {
        let sq: Vec<f64> = paths.iter().map(|p| p.value(8)[i].powi(2)).collect();
        assert_within_3se(&sq, 1.0, "Var(B_T)");
    }
}

#[test]
fn distinct_hurst_components() {
    let grid = Partition::uniform(8, 2.0).unwrap();
    let hurst = HurstVector::new(vec![0.55, 0.85]).unwrap();
    let paths: Vec<_> = (0..PATHS).map(|s| sample_multi(&grid, &hurst, s).unwrap()).collect();
    for (i, h) in [0.55f64, 0.85].into_iter().enumerate() {
        let sq: Vec<f64> = paths.iter().map(|p| p.value(8)[i].powi(2)).collect();
        assert_within_3se(&sq, 2f64.powf(2.0 * h), "Var(B_T)");
    }
}

#[test]
fn large_covariance_matrices_factor() {
    for &h in &[0.55, 0.9] {
        let grid = Partition::uniform(1 << 12, 1.0).unwrap();
        let cov = build_covariance_matrix(&grid, h).unwrap();
        assert_eq!(cov, cov.transpose());
        CholeskySampler::new(&grid, h).unwrap();
    }
}

#[test]
fn nonuniform_grid_covariance() {
    let grid = Partition::new(vec![0.0, 0.1, 0.15, 0.6, 1.0]).unwrap();
    let prods: Vec<f64> = (0..PATHS)
        .map(|s| {
            let p = sample_path_cholesky(&grid, 0.8, s).unwrap();
            p.value(2)[0] * p.value(4)[0]
        })
        .collect();
    assert_within_3se(&prods, covariance(0.15, 1.0, 0.8).unwrap(), "Cov(B_0.15, B_1)");
}

#[test]
fn coarsened_increments_telescope_exactly() {
    let fine = sample_path_circulant(1 << 10, 1.0, 0.7, 9).unwrap();
    for steps in [1usize, 4, 32, 1 << 10] {
        let coarse = coarsen(&fine, &Partition::uniform(steps, 1.0).unwrap()).unwrap();
        let total: f64 = (0..steps).map(|k| coarse.increment(k)[0]).sum();
        // telescoping is exact once levels are copied
        assert_eq!(coarse.value(steps)[0], fine.value(1 << 10)[0]);
        assert!((total - fine.value(1 << 10)[0]).abs() <= 1e-12);
        for k in 0..=steps {
            assert_eq!(coarse.value(k), fine.value(k * (1 << 10) / steps));
        }
    }
    let two_point = coarsen(&fine, &Partition::new(vec![0.0, 1.0]).unwrap()).unwrap();
    assert_eq!(two_point.values().len(), 2);
    assert_eq!(two_point.value(1), fine.value(1 << 10));
}
