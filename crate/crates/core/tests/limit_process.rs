use fbmsde::fbm::coarsen;
use fbmsde::integrators::{fundamental_matrix_reference, reference_solution};
use fbmsde::limit::{compute_u, compute_u_path, residual_bundle, solve_u_ode};
use fbmsde::{BuiltinDrift, DVector, FbmGenerator, FbmMethod, FbmPath, HurstVector, Partition, SolveConfig};

const PATHS: u64 = 20;

fn fine_noise(seed: u64) -> FbmPath {
    let grid = Partition::uniform(1 << 11, 1.0).unwrap();
    FbmGenerator::new(&grid, &HurstVector::uniform(0.7, 2).unwrap(), FbmMethod::Circulant)
        .unwrap()
        .sample(seed)
}

fn u_terminal(noise: &FbmPath) -> DVector<f64> {
    let planar = BuiltinDrift::PlanarCubic.spec().unwrap();
    let x = reference_solution(&planar, noise, &DVector::from_column_slice(&[1.0, 1.0]), &SolveConfig::default())
        .unwrap();
    let phi = fundamental_matrix_reference(&planar, &x).unwrap();
    compute_u(&planar, &x, &phi, noise, 1.0).unwrap()
}

#[test]
fn u_refinement_is_cauchy() {
    let (mut coarse_gap, mut fine_gap) = (0.0, 0.0);
    for seed in 0..PATHS {
        let fine = fine_noise(seed);
        let us: Vec<DVector<f64>> = [1usize << 9, 1 << 10, 1 << 11]
            .iter()
            .map(|&n| u_terminal(&coarsen(&fine, &Partition::uniform(n, 1.0).unwrap()).unwrap()))
            .collect();
        coarse_gap += (&us[1] - &us[0]).norm();
        fine_gap += (&us[2] - &us[1]).norm();
    }
    assert!(fine_gap <= coarse_gap, "{fine_gap} vs {coarse_gap}");
}

#[test]
fn ode_and_transport_forms_converge_together() {
    let planar = BuiltinDrift::PlanarCubic.spec().unwrap();
    let x0 = DVector::from_column_slice(&[1.0, 1.0]);
    let cfg = SolveConfig::default();
    let mut gaps = [0.0; 3];
    for seed in 0..PATHS {
        let fine = fine_noise(seed);
        for (gap, n) in gaps.iter_mut().zip([1usize << 9, 1 << 10, 1 << 11]) {
            let noise = coarsen(&fine, &Partition::uniform(n, 1.0).unwrap()).unwrap();
            let x = reference_solution(&planar, &noise, &x0, &cfg).unwrap();
            let phi = fundamental_matrix_reference(&planar, &x).unwrap();
            let transport = compute_u_path(&planar, &x, &phi, &noise).unwrap();
            let ode = solve_u_ode(&planar, &x, &noise).unwrap();
            *gap += transport.iter().zip(&ode).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        }
    }
    for w in gaps.windows(2) {
        assert!(w[1] <= 1.25 * w[0] / 2.0, "gaps {gaps:?}");
    }
}

#[test]
fn transport_path_agrees_with_pointwise_evaluation() {
    let planar = BuiltinDrift::PlanarCubic.spec().unwrap();
    let noise = coarsen(&fine_noise(5), &Partition::uniform(256, 1.0).unwrap()).unwrap();
    let x = reference_solution(&planar, &noise, &DVector::from_column_slice(&[1.0, 1.0]), &SolveConfig::default())
        .unwrap();
    let phi = fundamental_matrix_reference(&planar, &x).unwrap();
    let path = compute_u_path(&planar, &x, &phi, &noise).unwrap();
    for k in [0usize, 17, 128, 256] {
        let point = compute_u(&planar, &x, &phi, &noise, noise.grid().times()[k]).unwrap();
        assert!((&path[k] - &point).norm() <= 1e-12 * (1.0 + point.norm()));
    }
}

#[test]
fn residual_decomposition_is_exact() {
    let planar = BuiltinDrift::PlanarCubic.spec().unwrap();
    let noise = fine_noise(3);
    let x = reference_solution(&planar, &noise, &DVector::from_column_slice(&[1.0, 1.0]), &SolveConfig::default())
        .unwrap();
    let coarse = Partition::uniform(32, 1.0).unwrap();
    for k in 0..coarse.steps() {
        let r = residual_bundle(&planar, &x, &noise, &coarse, k).unwrap();
        assert_eq!(r.rhat, &r.r + &r.r1 + &r.r2);
    }
    assert!(residual_bundle(&planar, &x, &noise, &coarse, 32).is_err());
}
