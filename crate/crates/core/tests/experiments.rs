use fbmsde::harness::{mc_strong_error, stability_compare, ExperimentConfig};
use fbmsde::{BuiltinDrift, DVector, HurstVector, Scheme};

fn example2(h: f64, paths: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        BuiltinDrift::PlanarCubic.spec().unwrap(),
        DVector::from_column_slice(&[1.0, 1.0]),
        HurstVector::uniform(h, 2).unwrap(),
    );
    cfg.mc_paths = paths;
    cfg.seed = 3;
    cfg
}

#[test]
fn finer_master_barely_moves_the_finest_error() {
    let cfg = example2(0.6, 200);
    let base = mc_strong_error(&cfg).unwrap();
    let mut finer = cfg.clone();
    finer.master_mesh = 2f64.powi(-12);
    let refined = mc_strong_error(&finer).unwrap();
    let (a, b) = (base[0].rows.last().unwrap().error, refined[0].rows.last().unwrap().error);
    assert!((a - b).abs() / b < 0.1, "{a} vs {b}");
}

#[test]
fn rate_report_shape_and_sup_error() {
    let mut cfg = example2(0.7, 20);
    cfg.schemes = vec![Scheme::BackwardEuler, Scheme::CrankNicolson];
    cfg.sup_error = true;
    let reports = mc_strong_error(&cfg).unwrap();
    assert_eq!(reports.len(), 2);
    for report in &reports {
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("mesh,error,stderr,pairwise_order,sup_error"));
        assert_eq!(lines.count(), 5);
        assert!(csv.ends_with('\n'));
        assert!(report.rows[0].pairwise_order.is_none());
        for r in &report.rows {
            assert!(r.sup_error.unwrap() >= r.error);
            assert!(r.stderr > 0.0 && r.stderr < r.error);
        }
    }
}

#[test]
fn single_path_smoke_run() {
    let cfg = example2(0.8, 1);
    let report = &mc_strong_error(&cfg).unwrap()[0];
    assert!(report.rows.iter().all(|r| r.error.is_finite() && r.stderr == 0.0));
}

#[test]
fn stability_table_renders_divergence() {
    let mut cfg = ExperimentConfig::new(
        BuiltinDrift::Cubic1d.spec().unwrap(),
        DVector::from_element(1, 5.0),
        HurstVector::uniform(0.6, 1).unwrap(),
    );
    cfg.t_final = 0.72;
    cfg.meshes = vec![0.08, 0.02];
    cfg.master_mesh = 1e-4;
    cfg.schemes = vec![Scheme::ForwardEuler, Scheme::CrankNicolson, Scheme::BackwardEuler];
    // zero noise from 10 puts forward Euler far past its stability limit
    cfg.zero_noise = true;
    cfg.x0 = DVector::from_element(1, 10.0);
    let tables = stability_compare(&cfg).unwrap();
    assert_eq!(tables.len(), 2);
    let large = &tables[0];
    assert_eq!(large.values("exact").len(), 9);
    assert!(large.values("em").iter().any(|v| !v.is_finite()));
    assert!(large.values("bem").iter().all(|v| v.is_finite() && v.abs() <= 10.0));
    let csv = large.to_csv();
    assert!(csv.contains("Inf") || csv.contains("NaN"));
    assert!(tables[1].values("bem").iter().all(|v| v.is_finite()));
}
