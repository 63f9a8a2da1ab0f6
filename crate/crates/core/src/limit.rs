//! The asymptotic error of backward Euler.
//!
//! On uniform partitions with step `Δ = T/n`, the scaled error
//! `(Y_t - X_t) / Δ` of backward Euler converges in `L^p`, `p ∈ [1, 2)`, to
//!
//! ```text
//! U_t = 1/2 ∫_0^t φ_t φ_s^{-1} (∂b b)(X_s) ds + 1/2 ∫_0^t φ_t φ_s^{-1} ∂b(X_s) dB_s,
//! ```
//!
//! which also solves `dU = ∂b(X) U dt + 1/2 (∂b b)(X) dt + 1/2 ∂b(X) dB`,
//! `U_0 = 0`. Both integrals are Young integrals (`H > 1/2`) and are
//! discretised here by left-point sums on the master grid.

use nalgebra::{DMatrix, DVector};

use crate::csv::fmt_f64;
use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::fbm::{coarsen, FbmGenerator, FbmMethod, FbmPath, HurstVector};
use crate::harness::map_paths;
use crate::implicit::SolveConfig;
use crate::integrators::{backward_euler, fundamental_matrix_reference, reference_solution, FundamentalMatrixPath, Trajectory};
use crate::partition::Partition;
use crate::seed::derive_seed;

fn same_grid(a: &Partition, b: &Partition) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::InvalidPartition("inputs must share one master grid".into()))
    }
}

/// Left-point integrand increments `(∂b b)(X_j) δ_j + ∂b(X_j) ΔB_j`.
fn integrand_increment(spec: &DriftSpec, x: &DVector<f64>, dt: f64, db: &DVector<f64>) -> DVector<f64> {
    let jac = spec.db(x);
    &jac * spec.b(x) * dt + &jac * db
}

/// `U` at every master-grid time through the transport form. Each term is
/// pulled back with `φ_{s_j}^{-1}` and pushed forward with `φ_{t_i}`.
pub fn compute_u_path(
    spec: &DriftSpec,
    x_traj: &Trajectory,
    phi: &FundamentalMatrixPath,
    noise: &FbmPath,
) -> Result<Vec<DVector<f64>>> {
    same_grid(&x_traj.grid, &phi.grid)?;
    same_grid(&x_traj.grid, noise.grid())?;
    let m = spec.dim();
    let grid = &x_traj.grid;
    let mut acc = DVector::zeros(m);
    let mut out = Vec::with_capacity(grid.steps() + 1);
    out.push(DVector::zeros(m));
    for j in 0..grid.steps() {
        let w = integrand_increment(spec, &x_traj.states[j], grid.delta(j), &noise.increment(j));
        let pulled = phi.matrices[j]
            .clone()
            .lu()
            .solve(&w)
            .ok_or_else(|| Error::Singular(format!("fundamental matrix at step {j}")))?;
        acc += pulled;
        out.push(&phi.matrices[j + 1] * &acc * 0.5);
    }
    Ok(out)
}

/// `U_t` at a master-grid time `t`.
pub fn compute_u(
    spec: &DriftSpec,
    x_traj: &Trajectory,
    phi: &FundamentalMatrixPath,
    noise: &FbmPath,
    t: f64,
) -> Result<DVector<f64>> {
    let idx = x_traj
        .grid
        .index_of(t)
        .ok_or_else(|| Error::Domain(format!("time {t} is not on the master grid")))?;
    same_grid(&x_traj.grid, &phi.grid)?;
    same_grid(&x_traj.grid, noise.grid())?;
    let m = spec.dim();
    let grid = &x_traj.grid;
    let mut acc = DVector::zeros(m);
    for j in 0..idx {
        let w = integrand_increment(spec, &x_traj.states[j], grid.delta(j), &noise.increment(j));
        acc += phi.matrices[j]
            .clone()
            .lu()
            .solve(&w)
            .ok_or_else(|| Error::Singular(format!("fundamental matrix at step {j}")))?;
    }
    Ok(&phi.matrices[idx] * acc * 0.5)
}

/// `U` from its linear equation: implicit in `∂b(X) U`, left-point in the forcing.
pub fn solve_u_ode(spec: &DriftSpec, x_traj: &Trajectory, noise: &FbmPath) -> Result<Vec<DVector<f64>>> {
    same_grid(&x_traj.grid, noise.grid())?;
    let m = spec.dim();
    let grid = &x_traj.grid;
    let id = DMatrix::<f64>::identity(m, m);
    let mut u = DVector::zeros(m);
    let mut out = Vec::with_capacity(grid.steps() + 1);
    out.push(u.clone());
    for j in 0..grid.steps() {
        let dt = grid.delta(j);
        let rhs = &u + integrand_increment(spec, &x_traj.states[j], dt, &noise.increment(j)) * 0.5;
        let a = &id - spec.db(&x_traj.states[j + 1]) * dt;
        u = a.lu().solve(&rhs).ok_or_else(|| Error::Singular(format!("U step {j}")))?;
        out.push(u.clone());
    }
    Ok(out)
}

/// Local-error decomposition of one coarse step `[t_k, t_{k+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBundle {
    pub k: usize,
    /// `∫ (b(X_s) - b(X_{t_{k+1}})) ds`.
    pub r: DVector<f64>,
    /// `(∂b b)(X_{t_k}) Δ_k^2 / 2`.
    pub r1: DVector<f64>,
    /// `∂b(X_{t_k}) ∫ (B_{t_{k+1}} - B_s) ds`.
    pub r2: DVector<f64>,
    /// `r + r1 + r2`.
    pub rhat: DVector<f64>,
}

/// The integrals over `s` use the trapezoidal rule on the fine grid.
pub fn residual_bundle(
    spec: &DriftSpec,
    x_fine: &Trajectory,
    noise_fine: &FbmPath,
    coarse: &Partition,
    k: usize,
) -> Result<ResidualBundle> {
    same_grid(&x_fine.grid, noise_fine.grid())?;
    if k >= coarse.steps() {
        return Err(Error::Domain(format!("step {k} outside a grid of {} steps", coarse.steps())));
    }
    let idx = x_fine.grid.nested_indices(coarse)?;
    let (a, e) = (idx[k], idx[k + 1]);
    let fine = &x_fine.grid;
    let m = spec.dim();
    let b_end = spec.b(&x_fine.states[e]);
    let b_end_noise = noise_fine.value(e);
    let mut r = DVector::zeros(m);
    let mut noise_integral = DVector::zeros(m);
    let mut left = spec.b(&x_fine.states[a]) - &b_end;
    for i in a..e {
        let half = 0.5 * fine.delta(i);
        let right = spec.b(&x_fine.states[i + 1]) - &b_end;
        r += (&left + &right) * half;
        noise_integral += ((b_end_noise - noise_fine.value(i)) + (b_end_noise - noise_fine.value(i + 1))) * half;
        left = right;
    }
    let dt = coarse.delta(k);
    let xk = &x_fine.states[a];
    let jac = spec.db(xk);
    let r1 = &jac * spec.b(xk) * (0.5 * dt * dt);
    let r2 = &jac * noise_integral;
    let rhat = &r + &r1 + &r2;
    Ok(ResidualBundle { k, r, r1, r2, rhat })
}

#[derive(Debug, Clone)]
pub struct LimitConfig {
    pub drift: DriftSpec,
    pub x0: DVector<f64>,
    pub hurst: f64,
    /// Horizon `T` of every grid.
    pub t_final: f64,
    /// Comparison time; must be a point of every coarse grid.
    pub t: f64,
    pub n_values: Vec<usize>,
    pub master_steps: usize,
    pub mc_paths: usize,
    pub p: f64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub solve: SolveConfig,
    pub method: FbmMethod,
}

impl LimitConfig {
    pub fn new(drift: DriftSpec, x0: DVector<f64>, hurst: f64) -> Self {
        Self {
            drift,
            x0,
            hurst,
            t_final: 1.0,
            t: 1.0,
            n_values: vec![32, 64, 128, 256],
            master_steps: 1 << 14,
            mc_paths: 500,
            p: 1.0,
            seed: 0,
            threads: None,
            solve: SolveConfig::default(),
            method: FbmMethod::Circulant,
        }
    }

    /// Every problem with the configuration.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.hurst > 0.5 && self.hurst < 1.0) {
            out.push(format!("hurst = {} must lie in (1/2, 1)", self.hurst));
        }
        if !(self.p >= 1.0 && self.p < 2.0) {
            out.push(format!("p = {} must lie in [1, 2)", self.p));
        }
        if self.x0.len() != self.drift.dim() {
            out.push(format!("x0 has {} components, drift {} needs {}", self.x0.len(), self.drift.name(), self.drift.dim()));
        }
        if !(self.t_final > 0.0) {
            out.push(format!("t_final = {} must be positive", self.t_final));
        }
        if !(self.t >= 0.0 && self.t <= self.t_final) {
            out.push(format!("t = {} must lie in [0, t_final]", self.t));
        }
        if self.n_values.is_empty() {
            out.push("n_values must not be empty".into());
        }
        if self.mc_paths == 0 {
            out.push("mc_paths must be at least 1".into());
        }
        for &n in &self.n_values {
            if n == 0 || !self.master_steps.is_multiple_of(n) {
                out.push(format!("n = {n} does not divide master_steps = {}", self.master_steps));
                continue;
            }
            let pos = self.t * n as f64 / self.t_final;
            if (pos - pos.round()).abs() > 1e-9 * n as f64 {
                out.push(format!("t = {} is not a point of the grid with n = {n}", self.t));
            }
        }
        if let Err(e) = self.solve.validate() {
            out.push(e.to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitRow {
    pub n: usize,
    /// `(E |(Y_t - X_t)/Δ - U_t|^p)^{1/p}`.
    pub lp_distance: f64,
    pub stderr: f64,
    pub mean_abs_nz: f64,
    pub mean_abs_z: f64,
    pub mean_abs_u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitComparison {
    pub p: f64,
    pub mc_paths: usize,
    pub rows: Vec<LimitRow>,
}

impl LimitComparison {
    pub fn n_values(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.n).collect()
    }

    pub fn lp_distances(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.lp_distance).collect()
    }

    /// Each distance is at most `slack` times its predecessor.
    pub fn is_decreasing(&self, slack: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].lp_distance <= slack * w[0].lp_distance)
    }

    /// Columns `n,lp_distance,stderr,mean_abs_nZ,mean_abs_U`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,lp_distance,stderr,mean_abs_nZ,mean_abs_U\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.n,
                fmt_f64(r.lp_distance),
                fmt_f64(r.stderr),
                fmt_f64(r.mean_abs_nz),
                fmt_f64(r.mean_abs_u)
            ));
        }
        out
    }
}

struct PathSample {
    // per n: |scaled - U|, |scaled|, |Y - X|
    per_n: Vec<(f64, f64, f64)>,
    abs_u: f64,
}

fn limit_path(cfg: &LimitConfig, generator: &FbmGenerator, grids: &[Partition], path: usize) -> Result<PathSample> {
    let noise = generator.sample(derive_seed(cfg.seed, path as u64));
    let wrap = |mesh: f64| move |e: Error| Error::Experiment { path, mesh, source: Box::new(e) };
    let master_mesh = generator.grid().mesh();
    let x = reference_solution(&cfg.drift, &noise, &cfg.x0, &cfg.solve).map_err(wrap(master_mesh))?;
    let t_idx = noise.grid().index_of(cfg.t).ok_or(Error::NotNested(cfg.t))?;
    let phi = fundamental_matrix_reference(&cfg.drift, &x).map_err(wrap(master_mesh))?;
    let u = compute_u(&cfg.drift, &x, &phi, &noise, noise.grid().times()[t_idx]).map_err(wrap(master_mesh))?;
    let mut per_n = Vec::with_capacity(grids.len());
    for grid in grids {
        let coarse_noise = coarsen(&noise, grid).map_err(wrap(grid.mesh()))?;
        let y = backward_euler(&cfg.drift, &coarse_noise, &cfg.x0, &cfg.solve).map_err(wrap(grid.mesh()))?;
        let k = grid.index_of(cfg.t).ok_or(Error::NotNested(cfg.t))?;
        let z = &y.states[k] - &x.states[t_idx];
        let scaled = &z / grid.mesh();
        per_n.push(((&scaled - &u).norm(), scaled.norm(), z.norm()));
    }
    Ok(PathSample { per_n, abs_u: u.norm() })
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = xs.collect();
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, (var / n).sqrt())
}

/// Monte Carlo estimate of `E |(Y_t - X_t)/Δ - U_t|^p` for each `n`, with `X`
/// and `U` computed on the master grid from the same noise as `Y`.
pub fn limit_check(cfg: &LimitConfig) -> Result<LimitComparison> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let master = Partition::uniform(cfg.master_steps, cfg.t_final)?;
    let hurst = HurstVector::uniform(cfg.hurst, cfg.drift.dim())?;
    let generator = FbmGenerator::new(&master, &hurst, cfg.method)?;
    let grids: Vec<Partition> = cfg
        .n_values
        .iter()
        .map(|&n| Partition::uniform(n, cfg.t_final))
        .collect::<Result<_>>()?;

    let samples: Vec<PathSample> = map_paths(cfg.threads, cfg.mc_paths, |path| {
        if cfg.t == 0.0 {
            return Ok(PathSample { per_n: vec![(0.0, 0.0, 0.0); grids.len()], abs_u: 0.0 });
        }
        limit_path(cfg, &generator, &grids, path)
    })?
    .into_iter()
    .collect::<Result<_>>()?;

    let (mean_abs_u, _) = mean(samples.iter().map(|s| s.abs_u));
    let rows = cfg
        .n_values
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let (moment, moment_se) = mean(samples.iter().map(|s| s.per_n[i].0.powf(cfg.p)));
            let lp_distance = moment.powf(1.0 / cfg.p);
            let stderr = if moment > 0.0 { moment_se * moment.powf(1.0 / cfg.p - 1.0) / cfg.p } else { 0.0 };
            LimitRow {
                n,
                lp_distance,
                stderr,
                mean_abs_nz: mean(samples.iter().map(|s| s.per_n[i].1)).0,
                mean_abs_z: mean(samples.iter().map(|s| s.per_n[i].2)).0,
                mean_abs_u,
            }
        })
        .collect();
    Ok(LimitComparison { p: cfg.p, mc_paths: cfg.mc_paths, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::BuiltinDrift;
    use approx::assert_relative_eq;

    fn minus_x() -> DriftSpec {
        BuiltinDrift::Linear(DMatrix::from_element(1, 1, -1.0)).spec().unwrap()
    }

    fn setup(spec: &DriftSpec, steps: usize, seed: u64, x0: &[f64]) -> (FbmPath, Trajectory, FundamentalMatrixPath) {
        let grid = Partition::uniform(steps, 1.0).unwrap();
        let noise = FbmGenerator::new(&grid, &HurstVector::uniform(0.7, spec.dim()).unwrap(), FbmMethod::Circulant)
            .unwrap()
            .sample(seed);
        let x = reference_solution(spec, &noise, &DVector::from_column_slice(x0), &SolveConfig::default()).unwrap();
        let phi = fundamental_matrix_reference(spec, &x).unwrap();
        (noise, x, phi)
    }

    #[test]
    fn u_vanishes_at_origin() {
        let spec = BuiltinDrift::PlanarCubic.spec().unwrap();
        let (noise, x, phi) = setup(&spec, 64, 1, &[1.0, 1.0]);
        assert_eq!(compute_u(&spec, &x, &phi, &noise, 0.0).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn linear_u_matches_scalar_quadrature() {
        let spec = minus_x();
        let (noise, x, phi) = setup(&spec, 512, 4, &[1.0]);
        // independent oracle: φ_t φ_s^{-1} = e^{-(t-s)} on the same grid,
        // (∂b b)(x) = x and ∂b = -1
        let grid = noise.grid();
        let t_idx = 384;
        let t = grid.times()[t_idx];
        let mut oracle_phi = 0.0;
        let mut oracle_exact = 0.0;
        for j in 0..t_idx {
            let s = grid.times()[j];
            let w = x.states[j][0] * grid.delta(j) - noise.increment(j)[0];
            oracle_phi += phi.matrices[t_idx][(0, 0)] / phi.matrices[j][(0, 0)] * w;
            oracle_exact += (-(t - s)).exp() * w;
        }
        let u = compute_u(&spec, &x, &phi, &noise, t).unwrap()[0];
        assert_relative_eq!(u, 0.5 * oracle_phi, epsilon = 1e-10);
        // the trapezoid flow matches the exponential kernel to O(δ^2)
        assert!((u - 0.5 * oracle_exact).abs() < 1e-4);
        let path = compute_u_path(&spec, &x, &phi, &noise).unwrap();
        assert_relative_eq!(path[t_idx][0], u, epsilon = 1e-12);

        // unrolling the implicit U recursion gives the kernel (1 + δ)^{-(i - j)}
        let ode = solve_u_ode(&spec, &x, &noise).unwrap();
        let mut oracle_ode = 0.0;
        for j in 0..t_idx {
            let w = x.states[j][0] * grid.delta(j) - noise.increment(j)[0];
            oracle_ode += (1.0 + grid.delta(0)).powi(-((t_idx - j) as i32)) * w;
        }
        assert_relative_eq!(ode[t_idx][0], 0.5 * oracle_ode, epsilon = 1e-8);
        assert!((ode[t_idx][0] - 0.5 * oracle_exact).abs() < 1e-2);
    }

    #[test]
    fn u_ode_is_zero_without_forcing() {
        let zero = BuiltinDrift::Linear(DMatrix::zeros(2, 2)).spec().unwrap();
        let (noise, x, _) = setup(&zero, 64, 2, &[0.3, 0.1]);
        assert!(solve_u_ode(&zero, &x, &noise).unwrap().iter().all(|u| u.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn residual_examples() {
        let dw = BuiltinDrift::DoubleWell1d.spec().unwrap();
        let grid = Partition::uniform(40, 4.0).unwrap();
        // the fixed point X ≡ 1 with no noise: b(X) = 0 everywhere
        let noise = FbmPath::zero(grid.clone(), HurstVector::uniform(0.7, 1).unwrap());
        let x = backward_euler(&dw, &noise, &DVector::from_element(1, 1.0), &SolveConfig::default()).unwrap();
        let coarse = Partition::uniform(4, 4.0).unwrap();
        let rb = residual_bundle(&dw, &x, &noise, &coarse, 2).unwrap();
        assert_eq!(rb.r[0], 0.0);
        assert_eq!(rb.r1[0], 0.0);
        assert_eq!(rb.rhat, &rb.r + &rb.r1 + &rb.r2);

        // R1 at X_{t_k} = 2 with Δ = 0.1 is 66 * 0.1^2 / 2
        let g = Partition::uniform(10, 0.1).unwrap();
        let traj = Trajectory {
            grid: g.clone(),
            states: vec![DVector::from_element(1, 2.0); 11],
            scheme: "test".into(),
            drift: "doublewell1d".into(),
            path_seed: 0,
            residuals: vec![0.0; 10],
        };
        let flat = FbmPath::zero(g, HurstVector::uniform(0.7, 1).unwrap());
        let rb = residual_bundle(&dw, &traj, &flat, &Partition::new(vec![0.0, 0.1]).unwrap(), 0).unwrap();
        assert_relative_eq!(rb.r1[0], 0.33, epsilon = 1e-12);
        assert!(residual_bundle(&dw, &traj, &flat, &Partition::new(vec![0.0, 0.1]).unwrap(), 1).is_err());
    }

    #[test]
    fn limit_config_problems_are_exhaustive() {
        let mut cfg = LimitConfig::new(minus_x(), DVector::from_element(1, 1.0), 0.4);
        cfg.p = 2.5;
        cfg.n_values = vec![3];
        let problems = cfg.problems();
        assert!(problems.len() >= 3, "{problems:?}");
        assert!(limit_check(&cfg).is_err());
    }

    #[test]
    fn zero_drift_and_zero_time_give_zero_distances() {
        let zero = BuiltinDrift::Linear(DMatrix::zeros(1, 1)).spec().unwrap();
        let mut cfg = LimitConfig::new(zero, DVector::from_element(1, 1.0), 0.7);
        cfg.master_steps = 256;
        cfg.n_values = vec![8, 16];
        cfg.mc_paths = 4;
        let out = limit_check(&cfg).unwrap();
        assert!(out.lp_distances().iter().all(|&d| d.abs() < 1e-9));

        let mut cfg = LimitConfig::new(minus_x(), DVector::from_element(1, 1.0), 0.7);
        cfg.master_steps = 256;
        cfg.n_values = vec![8, 16];
        cfg.mc_paths = 4;
        cfg.t = 0.0;
        let out = limit_check(&cfg).unwrap();
        assert!(out.lp_distances().iter().all(|&d| d == 0.0));
        assert!(out.to_csv().starts_with("n,lp_distance,stderr,mean_abs_nZ,mean_abs_U\n"));
    }
}
