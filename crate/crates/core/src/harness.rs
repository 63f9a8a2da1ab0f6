//! Monte Carlo drivers: strong-error tables with fitted convergence orders,
//! and the stability comparison of explicit and implicit schemes.
//!
//! Paths are the unit of parallel work. Path `ℓ` draws its master noise from
//! `derive_seed(seed, ℓ)` and every reduction runs in path order, so output
//! does not depend on the number of worker threads.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::csv::fmt_f64;
use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::fbm::{coarsen, FbmGenerator, FbmMethod, FbmPath, HurstVector};
use crate::implicit::SolveConfig;
use crate::integrators::{reference_solution, run_scheme, Divergence, Scheme};
use crate::partition::Partition;
use crate::seed::derive_seed;

/// Evaluates `f(0..count)` on `threads` workers (the global pool when `None`),
/// returning results in index order.
pub(crate) fn map_paths<T, F>(threads: Option<usize>, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match threads {
        None => Ok((0..count).into_par_iter().map(&f).collect()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub drift: DriftSpec,
    pub x0: DVector<f64>,
    pub t_final: f64,
    pub hurst: HurstVector,
    pub schemes: Vec<Scheme>,
    /// Step sizes of the compared schemes.
    pub meshes: Vec<f64>,
    /// Step size of the reference solution; must divide every mesh.
    pub master_mesh: f64,
    pub mc_paths: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub method: FbmMethod,
    pub solve: SolveConfig,
    /// Also report the largest error over the shared grid points.
    pub sup_error: bool,
    /// Replace the fBm by the zero path.
    pub zero_noise: bool,
    /// Spacing of the stability report times; the largest mesh when `None`.
    pub report_every: Option<f64>,
}

fn report_stride(every: f64, mesh: f64) -> Option<usize> {
    let stride = (every / mesh).round();
    (stride >= 1.0 && (stride * mesh - every).abs() <= 1e-9 * every).then_some(stride as usize)
}

fn steps_for(t_final: f64, mesh: f64) -> Option<usize> {
    if !(mesh > 0.0) {
        return None;
    }
    let steps = (t_final / mesh).round();
    ((steps * mesh - t_final).abs() <= 1e-9 * t_final && steps >= 1.0).then_some(steps as usize)
}

impl ExperimentConfig {
    /// Defaults for the planar cubic system on `[0, 1]`: meshes `2^-5..2^-9`,
    /// master mesh `2^-11`, 1000 paths.
    pub fn new(drift: DriftSpec, x0: DVector<f64>, hurst: HurstVector) -> Self {
        Self {
            drift,
            x0,
            t_final: 1.0,
            hurst,
            schemes: vec![Scheme::BackwardEuler],
            meshes: (5..=9).map(|k| 2f64.powi(-k)).collect(),
            master_mesh: 2f64.powi(-11),
            mc_paths: 1000,
            seed: 0,
            threads: None,
            method: FbmMethod::Circulant,
            solve: SolveConfig::default(),
            sup_error: false,
            zero_noise: false,
            report_every: None,
        }
    }

    /// Every problem with the configuration, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.t_final > 0.0) {
            out.push(format!("t_final = {} must be positive", self.t_final));
        }
        if self.x0.len() != self.drift.dim() {
            out.push(format!("x0 has {} components, drift {} needs {}", self.x0.len(), self.drift.name(), self.drift.dim()));
        }
        if self.hurst.dim() != self.drift.dim() {
            out.push(format!("hurst has {} components, drift {} needs {}", self.hurst.dim(), self.drift.name(), self.drift.dim()));
        }
        if let Err(e) = self.hurst.require_young_regime() {
            out.push(e.to_string());
        }
        if self.schemes.is_empty() {
            out.push("at least one scheme is required".into());
        }
        if self.meshes.is_empty() {
            out.push("at least one mesh is required".into());
        }
        if self.mc_paths == 0 {
            out.push("mc_paths must be at least 1".into());
        }
        let master = steps_for(self.t_final, self.master_mesh);
        if master.is_none() {
            out.push(format!("master mesh {} does not divide t_final = {}", self.master_mesh, self.t_final));
        }
        for &h in &self.meshes {
            match (steps_for(self.t_final, h), master) {
                (None, _) => out.push(format!("mesh {h} does not divide t_final = {}", self.t_final)),
                (Some(n), Some(nm)) if nm % n != 0 => {
                    out.push(format!("mesh {h} is not an integer multiple of the master mesh {}", self.master_mesh))
                }
                _ => {}
            }
        }
        if let Some(&min) = self.meshes.iter().min_by(|a, b| a.total_cmp(b)) {
            if self.master_mesh > min / 4.0 * (1.0 + 1e-12) {
                out.push(format!("master mesh {} exceeds a quarter of the finest mesh {min}", self.master_mesh));
            }
        }
        if let Some(r) = self.report_every {
            if self.meshes.iter().any(|&h| report_stride(r, h).is_none()) {
                out.push(format!("report_every = {r} is not a multiple of every mesh"));
            }
        }
        if let Err(e) = self.solve.validate() {
            out.push(e.to_string());
        }
        out
    }

    fn report_spacing(&self) -> f64 {
        self.report_every.unwrap_or_else(|| self.meshes.iter().cloned().fold(0.0, f64::max))
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn master_grid(&self) -> Result<Partition> {
        let n = steps_for(self.t_final, self.master_mesh)
            .ok_or_else(|| Error::Config(format!("master mesh {} does not divide t_final", self.master_mesh)))?;
        Partition::uniform(n, self.t_final)
    }

    pub fn grids(&self) -> Result<Vec<Partition>> {
        self.meshes
            .iter()
            .map(|&h| {
                let n = steps_for(self.t_final, h)
                    .ok_or_else(|| Error::Config(format!("mesh {h} does not divide t_final")))?;
                Partition::uniform(n, self.t_final)
            })
            .collect()
    }

    fn noise_source(&self, master: &Partition) -> Result<Option<FbmGenerator>> {
        if self.zero_noise {
            Ok(None)
        } else {
            FbmGenerator::new(master, &self.hurst, self.method).map(Some)
        }
    }
}

fn draw(generator: &Option<FbmGenerator>, master: &Partition, hurst: &HurstVector, seed: u64) -> FbmPath {
    match generator {
        Some(g) => g.sample(seed),
        None => FbmPath::zero(master.clone(), hurst.clone()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub mesh: f64,
    /// Root-mean-square terminal error `ε(T)`.
    pub error: f64,
    pub stderr: f64,
    /// `log(ε_prev / ε) / log(h_prev / h)`; absent on the first row.
    pub pairwise_order: Option<f64>,
    /// Root-mean-square of the largest error over shared grid points.
    pub sup_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub scheme: Scheme,
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `log ε` against `log h`, with its standard error.
    pub fit: Option<(f64, f64)>,
    pub mc_paths: usize,
}

impl RateReport {
    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.0)
    }

    /// Columns `mesh,error,stderr,pairwise_order` (plus `sup_error` when measured).
    pub fn to_csv(&self) -> String {
        let with_sup = self.rows.iter().any(|r| r.sup_error.is_some());
        let mut out = String::from("mesh,error,stderr,pairwise_order");
        if with_sup {
            out.push_str(",sup_error");
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}",
                fmt_f64(r.mesh),
                fmt_f64(r.error),
                fmt_f64(r.stderr),
                r.pairwise_order.map(fmt_f64).unwrap_or_default()
            ));
            if with_sup {
                out.push(',');
                out.push_str(&r.sup_error.map(fmt_f64).unwrap_or_default());
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise order between consecutive rows.
pub fn pairwise_order(mesh_a: f64, err_a: f64, mesh_b: f64, err_b: f64) -> f64 {
    (err_a / err_b).ln() / (mesh_a / mesh_b).ln()
}

/// Ordinary least-squares slope of `log(error)` on `log(mesh)` and its
/// standard error (`NaN` for exactly two points).
pub fn fit_order(meshes: &[f64], errors: &[f64]) -> Result<(f64, f64)> {
    if meshes.len() != errors.len() {
        return Err(Error::DimensionMismatch { expected: meshes.len(), got: errors.len() });
    }
    if meshes.len() < 2 {
        return Err(Error::Config("a rate needs at least 2 meshes".into()));
    }
    if meshes.iter().chain(errors).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain("meshes and errors must be positive and finite".into()));
    }
    let xs: Vec<f64> = meshes.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("meshes must not all be equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let stderr = if xs.len() > 2 {
        let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok((slope, stderr))
}

// squared terminal and sup errors, indexed [scheme][mesh]
type PathErrors = Vec<Vec<(f64, f64)>>;

fn strong_errors_for_path(
    cfg: &ExperimentConfig,
    generator: &Option<FbmGenerator>,
    master: &Partition,
    grids: &[Partition],
    path: usize,
) -> Result<PathErrors> {
    let noise = draw(generator, master, &cfg.hurst, derive_seed(cfg.seed, path as u64));
    let wrap = |mesh: f64| move |e: Error| Error::Experiment { path, mesh, source: Box::new(e) };
    let x = reference_solution(&cfg.drift, &noise, &cfg.x0, &cfg.solve).map_err(wrap(cfg.master_mesh))?;
    let coarse: Vec<(FbmPath, Vec<DVector<f64>>)> = grids
        .iter()
        .map(|g| Ok((coarsen(&noise, g)?, x.restrict(g)?)))
        .collect::<Result<_>>()?;
    cfg.schemes
        .iter()
        .map(|&scheme| {
            grids
                .iter()
                .zip(&coarse)
                .map(|(g, (cn, xs))| {
                    let y = run_scheme(scheme, &cfg.drift, cn, &cfg.x0, &cfg.solve, Divergence::Record)
                        .map_err(wrap(g.mesh()))?;
                    let terminal = (y.terminal() - &xs[xs.len() - 1]).norm_squared();
                    let sup = y
                        .states
                        .iter()
                        .zip(xs)
                        .map(|(a, b)| (a - b).norm_squared())
                        .fold(0.0, f64::max);
                    Ok((terminal, sup))
                })
                .collect()
        })
        .collect()
}

/// Root-mean-square strong error at `T` of every scheme on every mesh, all
/// schemes sharing each path's master noise through coarsening.
pub fn mc_strong_error(cfg: &ExperimentConfig) -> Result<Vec<RateReport>> {
    cfg.validate()?;
    let master = cfg.master_grid()?;
    let grids = cfg.grids()?;
    let generator = cfg.noise_source(&master)?;
    let per_path: Vec<PathErrors> = map_paths(cfg.threads, cfg.mc_paths, |path| {
        strong_errors_for_path(cfg, &generator, &master, &grids, path)
    })?
    .into_iter()
    .collect::<Result<_>>()?;

    let m = cfg.mc_paths as f64;
    let reports = cfg
        .schemes
        .iter()
        .enumerate()
        .map(|(si, &scheme)| {
            let mut rows: Vec<RateRow> = Vec::with_capacity(grids.len());
            for (gi, &mesh) in cfg.meshes.iter().enumerate() {
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                let mut sup_sum = 0.0;
                for p in &per_path {
                    let (e2, s2) = p[si][gi];
                    sum += e2;
                    sum_sq += e2 * e2;
                    sup_sum += s2;
                }
                let mean = sum / m;
                let error = mean.sqrt();
                let var = if cfg.mc_paths > 1 { ((sum_sq / m - mean * mean) * m / (m - 1.0)).max(0.0) } else { 0.0 };
                // delta method for the square root of a sample mean
                let stderr = if error > 0.0 { (var / m).sqrt() / (2.0 * error) } else { 0.0 };
                let pairwise = rows.last().map(|prev| pairwise_order(prev.mesh, prev.error, mesh, error));
                rows.push(RateRow {
                    mesh,
                    error,
                    stderr,
                    pairwise_order: pairwise,
                    sup_error: cfg.sup_error.then(|| (sup_sum / m).sqrt()),
                });
            }
            let meshes: Vec<f64> = rows.iter().map(|r| r.mesh).collect();
            let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
            RateReport { scheme, fit: fit_order(&meshes, &errors).ok(), rows, mc_paths: cfg.mc_paths }
        })
        .collect();
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    /// `bem`, `em`, `cn` or `exact` for the reference solution.
    pub scheme: String,
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityTable {
    pub mesh: f64,
    pub rows: Vec<StabilityRow>,
}

impl StabilityTable {
    /// Columns `scheme,T,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,T,value\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.scheme, fmt_f64(r.t), fmt_f64(r.value)));
        }
        out
    }

    pub fn values(&self, scheme: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.scheme == scheme).map(|r| r.value).collect()
    }
}

fn require_scalar(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.drift.dim() != 1 {
        return Err(Error::Config(format!("stability comparison needs a 1D drift, {} has dimension {}", cfg.drift.name(), cfg.drift.dim())));
    }
    Ok(())
}

fn stability_for_path(
    cfg: &ExperimentConfig,
    generator: &Option<FbmGenerator>,
    master: &Partition,
    grids: &[Partition],
    path: usize,
) -> Result<Vec<StabilityTable>> {
    let noise = draw(generator, master, &cfg.hurst, derive_seed(cfg.seed, path as u64));
    let x = reference_solution(&cfg.drift, &noise, &cfg.x0, &cfg.solve)?;
    let every = cfg.report_spacing();
    grids
        .iter()
        .map(|g| {
            let stride = report_stride(every, g.mesh())
                .ok_or_else(|| Error::Config(format!("report spacing {every} is not a multiple of mesh {}", g.mesh())))?;
            let cn = coarsen(&noise, g)?;
            let mut rows = Vec::new();
            for &scheme in &cfg.schemes {
                let y = run_scheme(scheme, &cfg.drift, &cn, &cfg.x0, &cfg.solve, Divergence::Record)?;
                for k in (stride..=g.steps()).step_by(stride) {
                    rows.push(StabilityRow { scheme: scheme.to_string(), t: g.times()[k], value: y.states[k][0] });
                }
            }
            let xs = x.restrict(g)?;
            for k in (stride..=g.steps()).step_by(stride) {
                rows.push(StabilityRow { scheme: "exact".into(), t: g.times()[k], value: xs[k][0] });
            }
            Ok(StabilityTable { mesh: g.mesh(), rows })
        })
        .collect()
}

/// Values of each scheme and of the reference at multiples of the report
/// spacing, for the first path of the configured seed. Divergence is recorded, not raised.
pub fn stability_compare(cfg: &ExperimentConfig) -> Result<Vec<StabilityTable>> {
    cfg.validate()?;
    require_scalar(cfg)?;
    let master = cfg.master_grid()?;
    let grids = cfg.grids()?;
    let generator = cfg.noise_source(&master)?;
    stability_for_path(cfg, &generator, &master, &grids, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyRow {
    pub scheme: String,
    pub mesh: f64,
    /// Share of paths with a non-finite value by `T`.
    pub diverged: f64,
    /// Share of paths with `|Y| <= bound` at every step.
    pub bounded: f64,
    pub max_abs: f64,
}

/// Repeats [`stability_compare`] over `mc_paths` seeded paths and tallies
/// divergence and boundedness (`|Y| <= bound`) per scheme and mesh.
pub fn stability_survey(cfg: &ExperimentConfig, bound: f64) -> Result<Vec<SurveyRow>> {
    cfg.validate()?;
    require_scalar(cfg)?;
    let master = cfg.master_grid()?;
    let grids = cfg.grids()?;
    let generator = cfg.noise_source(&master)?;
    let tables: Vec<Vec<StabilityTable>> = map_paths(cfg.threads, cfg.mc_paths, |path| {
        stability_for_path(cfg, &generator, &master, &grids, path)
    })?
    .into_iter()
    .collect::<Result<_>>()?;
    let m = cfg.mc_paths as f64;
    let mut out = Vec::new();
    for (gi, &mesh) in cfg.meshes.iter().enumerate() {
        for scheme in cfg.schemes.iter().map(|s| s.to_string()).chain(["exact".to_string()]) {
            let (mut diverged, mut bounded, mut max_abs) = (0usize, 0usize, 0.0f64);
            for path in &tables {
                let vals = path[gi].values(&scheme);
                if vals.iter().any(|v| !v.is_finite()) {
                    diverged += 1;
                }
                if vals.iter().all(|v| v.abs() <= bound) {
                    bounded += 1;
                }
                max_abs = vals.iter().fold(max_abs, |a, v| a.max(v.abs()));
            }
            out.push(SurveyRow { scheme, mesh, diverged: diverged as f64 / m, bounded: bounded as f64 / m, max_abs });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::BuiltinDrift;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    #[test]
    fn fit_order_exact_powers() {
        let h = [0.1, 0.05, 0.025, 0.0125];
        let e1: Vec<f64> = h.iter().map(|x| 3.0 * x).collect();
        let e2: Vec<f64> = h.iter().map(|x| 0.5 * x * x).collect();
        assert_relative_eq!(fit_order(&h, &e1).unwrap().0, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fit_order(&h, &e2).unwrap().0, 2.0, epsilon = 1e-12);
        assert!(fit_order(&h, &e2).unwrap().1 < 1e-12);
    }

    #[test]
    fn fit_order_rejects_bad_input() {
        assert!(fit_order(&[0.1], &[0.1]).is_err());
        assert!(fit_order(&[0.1, 0.05], &[0.1, 0.0]).is_err());
        assert!(fit_order(&[0.1, -0.05], &[0.1, 0.2]).is_err());
        assert!(fit_order(&[0.1, 0.05], &[0.1]).is_err());
    }

    #[test]
    fn pairwise_order_of_halving() {
        assert_relative_eq!(pairwise_order(0.1, 4e-2, 0.05, 2e-2), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn fit_of_reference_error_column() {
        // H = 0.6 reference errors on meshes 2^-5..2^-9
        let h: Vec<f64> = (5..=9).map(|k| 2f64.powi(-k)).collect();
        let e = [3.3335e-2, 1.5464e-2, 7.1006e-3, 3.1505e-3, 1.3181e-3];
        let (slope, _) = fit_order(&h, &e).unwrap();
        assert!((slope - 1.16).abs() < 0.1, "slope {slope}");
        assert_relative_eq!(pairwise_order(h[0], e[0], h[1], e[1]), 1.1081, epsilon = 1e-3);
    }

    fn planar_cfg() -> ExperimentConfig {
        let drift = BuiltinDrift::PlanarCubic.spec().unwrap();
        ExperimentConfig::new(drift, DVector::from_column_slice(&[1.0, 1.0]), HurstVector::uniform(0.6, 2).unwrap())
    }

    #[test]
    fn config_problems_are_listed_exhaustively() {
        let mut cfg = planar_cfg();
        cfg.meshes = vec![0.03, 2f64.powi(-10)];
        cfg.mc_paths = 0;
        cfg.x0 = DVector::zeros(3);
        let problems = cfg.problems();
        assert!(problems.len() >= 4, "{problems:?}");
        assert!(mc_strong_error(&cfg).is_err());
        assert!(planar_cfg().problems().is_empty());
    }

    #[test]
    fn zero_drift_has_zero_error() {
        let zero = BuiltinDrift::Linear(DMatrix::zeros(2, 2)).spec().unwrap();
        let mut cfg = planar_cfg();
        cfg.drift = zero;
        cfg.mc_paths = 8;
        cfg.schemes = vec![Scheme::BackwardEuler, Scheme::ForwardEuler, Scheme::CrankNicolson];
        for report in mc_strong_error(&cfg).unwrap() {
            assert!(report.rows.iter().all(|r| r.error < 1e-12), "{report:?}");
        }
    }

    #[test]
    fn report_is_independent_of_thread_count() {
        let mut cfg = planar_cfg();
        cfg.mc_paths = 12;
        cfg.meshes = vec![2f64.powi(-4), 2f64.powi(-5), 2f64.powi(-6)];
        cfg.master_mesh = 2f64.powi(-8);
        cfg.threads = Some(1);
        let one = mc_strong_error(&cfg).unwrap()[0].to_csv();
        cfg.threads = Some(3);
        let three = mc_strong_error(&cfg).unwrap()[0].to_csv();
        assert_eq!(one, three);
    }

    #[test]
    fn noise_free_stability_follows_ode_flow() {
        let table = &stability_compare(&noise_free_cubic(0.02)).unwrap()[0];
        assert_eq!(table.values("bem").len(), 9);
        for r in &table.rows {
            let exact = 5.0 / (1.0 + 50.0 * r.t).sqrt();
            assert!((r.value - exact).abs() < 0.05, "{} at {}: {} vs {exact}", r.scheme, r.t, r.value);
        }
    }

    fn noise_free_cubic(mesh: f64) -> ExperimentConfig {
        let cubic = BuiltinDrift::Cubic1d.spec().unwrap();
        let mut cfg = ExperimentConfig::new(cubic, DVector::from_element(1, 5.0), HurstVector::uniform(0.6, 1).unwrap());
        cfg.t_final = 0.72;
        cfg.meshes = vec![mesh];
        cfg.master_mesh = 1e-4;
        cfg.zero_noise = true;
        cfg.report_every = Some(0.08);
        cfg.schemes = vec![Scheme::ForwardEuler, Scheme::CrankNicolson, Scheme::BackwardEuler];
        cfg
    }

    #[test]
    fn noise_free_fine_mesh_follows_ode_flow() {
        let table = &stability_compare(&noise_free_cubic(1e-3)).unwrap()[0];
        for r in &table.rows {
            let exact = 5.0 / (1.0 + 50.0 * r.t).sqrt();
            assert!((r.value - exact).abs() < 0.05, "{} at {}: {} vs {exact}", r.scheme, r.t, r.value);
        }
        assert!(table.to_csv().starts_with("scheme,T,value\n"));
    }

    #[test]
    fn fine_mesh_rows_stay_near_the_reference() {
        let mut cfg = noise_free_cubic(0.02);
        cfg.zero_noise = false;
        for seed in 0..10 {
            cfg.seed = seed;
            let table = &stability_compare(&cfg).unwrap()[0];
            let exact = table.values("exact");
            for scheme in ["em", "cn", "bem"] {
                for (v, x) in table.values(scheme).iter().zip(&exact) {
                    assert!(v.is_finite() && (v - x).abs() <= 1.0, "{scheme} seed {seed}: {v} vs {x}");
                }
            }
        }
    }

    #[test]
    fn report_spacing_must_divide() {
        let mut cfg = noise_free_cubic(0.02);
        cfg.report_every = Some(0.03);
        assert!(!cfg.problems().is_empty());
    }

    #[test]
    fn stability_needs_a_scalar_drift() {
        let mut cfg = planar_cfg();
        cfg.meshes = vec![2f64.powi(-5)];
        assert!(stability_compare(&cfg).is_err());
    }
}
