//! Time stepping for `dX = b(X) dt + dB` on a general partition, and for the
//! linearised flow `φ_t = I + ∫_0^t ∂b(X_s) φ_s ds`.
//!
//! Every scheme consumes an [`FbmPath`] on its own grid; coarse runs are meant
//! to receive [`coarsen`](crate::fbm::coarsen)ed copies of one master sample
//! so errors are measured pathwise.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::csv::series_csv;
use crate::drift::DriftSpec;
use crate::error::{Error, Result, SolveError};
use crate::fbm::FbmPath;
use crate::implicit::{check_guard, solve_backward_step, SolveConfig};
use crate::partition::Partition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Drift-implicit (backward) Euler.
    BackwardEuler,
    /// Explicit Euler-Maruyama.
    ForwardEuler,
    /// Trapezoidal rule in the drift with the full noise increment.
    CrankNicolson,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::BackwardEuler => "bem",
            Self::ForwardEuler => "em",
            Self::CrankNicolson => "cn",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bem" => Ok(Self::BackwardEuler),
            "em" => Ok(Self::ForwardEuler),
            "cn" => Ok(Self::CrankNicolson),
            other => Err(Error::Config(format!("unknown scheme {other:?} (expected bem, em or cn)"))),
        }
    }
}

/// What an implicit scheme does when a step cannot be completed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Divergence {
    /// Return the solver error with its step index.
    #[default]
    Abort,
    /// Record a non-finite state and hold it for the rest of the run.
    Record,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Partition,
    pub states: Vec<DVector<f64>>,
    pub scheme: String,
    pub drift: String,
    pub path_seed: u64,
    /// Implicit-equation residual of each step (zero for explicit steps).
    pub residuals: Vec<f64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn terminal(&self) -> &DVector<f64> {
        &self.states[self.states.len() - 1]
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.states.iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    /// States at the times of a nested grid.
    pub fn restrict(&self, coarse: &Partition) -> Result<Vec<DVector<f64>>> {
        let idx = self.grid.nested_indices(coarse)?;
        Ok(idx.iter().map(|&i| self.states[i].clone()).collect())
    }

    /// CSV with header `t,Y1,...,Ym`.
    pub fn to_csv(&self) -> String {
        series_csv(
            "Y",
            self.dim(),
            self.grid.times().iter().copied().zip(self.states.iter().map(|v| v.as_slice())),
        )
    }
}

fn check_inputs(spec: &DriftSpec, noise: &FbmPath, x0: &DVector<f64>) -> Result<()> {
    if x0.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: x0.len() });
    }
    if noise.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: noise.dim() });
    }
    noise.hurst().require_young_regime()
}

fn new_trajectory(spec: &DriftSpec, noise: &FbmPath, x0: &DVector<f64>, scheme: &str) -> Trajectory {
    let n = noise.grid().steps();
    let mut states = Vec::with_capacity(n + 1);
    states.push(x0.clone());
    Trajectory {
        grid: noise.grid().clone(),
        states,
        scheme: scheme.to_string(),
        drift: spec.name().to_string(),
        path_seed: noise.seed(),
        residuals: Vec::with_capacity(n),
    }
}

/// `Y_{k+1} = Y_k + b(Y_{k+1}) Δ_k + ΔB_k`.
pub fn backward_euler(spec: &DriftSpec, noise: &FbmPath, x0: &DVector<f64>, cfg: &SolveConfig) -> Result<Trajectory> {
    check_inputs(spec, noise, x0)?;
    cfg.validate()?;
    check_guard(spec, noise.grid().mesh(), cfg).map_err(|source| Error::Step { step: 0, source })?;
    let mut traj = new_trajectory(spec, noise, x0, Scheme::BackwardEuler.as_str());
    let grid = noise.grid();
    for k in 0..grid.steps() {
        let c = &traj.states[k] + noise.increment(k);
        let step = solve_backward_step(spec, grid.delta(k), &c, cfg).map_err(|source| Error::Step { step: k, source })?;
        traj.residuals.push(step.residual);
        traj.states.push(step.y);
    }
    Ok(traj)
}

/// Explicit `Y_{k+1} = Y_k + b(Y_k) Δ_k + ΔB_k`. Overflow is kept as data:
/// once a state turns non-finite it is held for the remaining steps.
pub fn forward_euler(spec: &DriftSpec, noise: &FbmPath, x0: &DVector<f64>) -> Result<Trajectory> {
    check_inputs(spec, noise, x0)?;
    let mut traj = new_trajectory(spec, noise, x0, Scheme::ForwardEuler.as_str());
    let grid = noise.grid();
    for k in 0..grid.steps() {
        let y = &traj.states[k];
        let next = if y.iter().all(|v| v.is_finite()) {
            y + spec.b(y) * grid.delta(k) + noise.increment(k)
        } else {
            y.clone()
        };
        traj.residuals.push(0.0);
        traj.states.push(next);
    }
    Ok(traj)
}

/// `Y_{k+1} = Y_k + (Δ_k/2)(b(Y_k) + b(Y_{k+1})) + ΔB_k`.
pub fn crank_nicolson(
    spec: &DriftSpec,
    noise: &FbmPath,
    x0: &DVector<f64>,
    cfg: &SolveConfig,
    divergence: Divergence,
) -> Result<Trajectory> {
    check_inputs(spec, noise, x0)?;
    cfg.validate()?;
    check_guard(spec, 0.5 * noise.grid().mesh(), cfg).map_err(|source| Error::Step { step: 0, source })?;
    let mut traj = new_trajectory(spec, noise, x0, Scheme::CrankNicolson.as_str());
    let grid = noise.grid();
    for k in 0..grid.steps() {
        let y = &traj.states[k];
        let half = 0.5 * grid.delta(k);
        if !y.iter().all(|v| v.is_finite()) {
            let held = y.clone();
            traj.residuals.push(0.0);
            traj.states.push(held);
            continue;
        }
        let c = y + spec.b(y) * half + noise.increment(k);
        match solve_backward_step(spec, half, &c, cfg) {
            Ok(step) => {
                traj.residuals.push(step.residual);
                traj.states.push(step.y);
            }
            Err(source) => match divergence {
                Divergence::Abort => return Err(Error::Step { step: k, source }),
                Divergence::Record => {
                    let signed = c.map(|v| if v < 0.0 { f64::NEG_INFINITY } else if v > 0.0 { f64::INFINITY } else { f64::NAN });
                    traj.residuals.push(0.0);
                    traj.states.push(signed);
                }
            },
        }
    }
    Ok(traj)
}

/// Runs `scheme`; explicit and trapezoidal runs record divergence when `divergence` says so.
pub fn run_scheme(
    scheme: Scheme,
    spec: &DriftSpec,
    noise: &FbmPath,
    x0: &DVector<f64>,
    cfg: &SolveConfig,
    divergence: Divergence,
) -> Result<Trajectory> {
    match scheme {
        Scheme::BackwardEuler => backward_euler(spec, noise, x0, cfg),
        Scheme::ForwardEuler => forward_euler(spec, noise, x0),
        Scheme::CrankNicolson => crank_nicolson(spec, noise, x0, cfg, divergence),
    }
}

/// Backward Euler on the fine master grid, labelled as the reference solution.
pub fn reference_solution(
    spec: &DriftSpec,
    master_noise: &FbmPath,
    x0: &DVector<f64>,
    cfg: &SolveConfig,
) -> Result<Trajectory> {
    let mut traj = backward_euler(spec, master_noise, x0, cfg)?;
    traj.scheme = "reference".to_string();
    Ok(traj)
}

/// Continuous extension of backward Euler at a master-grid time `t`:
/// solves `Y_t = Y_{t_k} + b(Y_t)(t - t_k) + (B_t - B_{t_k})` with
/// `t_k < t <= t_{k+1}` the step of `traj.grid` containing `t`.
pub fn interpolate_backward(
    spec: &DriftSpec,
    noise: &FbmPath,
    traj: &Trajectory,
    t: f64,
    cfg: &SolveConfig,
) -> Result<DVector<f64>> {
    let fine_t = noise
        .grid()
        .index_of(t)
        .ok_or_else(|| Error::Domain(format!("time {t} is not on the noise grid")))?;
    let k = traj
        .grid
        .step_containing(t)
        .ok_or_else(|| Error::Domain(format!("time {t} is outside (0, T]")))?;
    let tk = traj.grid.times()[k];
    let fine_k = noise.grid().index_of(tk).ok_or(Error::NotNested(tk))?;
    let c = &traj.states[k] + (noise.value(fine_t) - noise.value(fine_k));
    let step = solve_backward_step(spec, noise.grid().times()[fine_t] - tk, &c, cfg)
        .map_err(|source| Error::Step { step: k, source })?;
    Ok(step.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiScheme {
    /// Implicit trapezoid on the master grid.
    Reference,
    /// `φ_{k+1} = (I - ∂b(X_{t_k}) Δ_k)^{-1} φ_k`.
    ForwardBackward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrixPath {
    pub grid: Partition,
    pub matrices: Vec<DMatrix<f64>>,
    pub scheme: PhiScheme,
}

impl FundamentalMatrixPath {
    /// `φ_{t_i} φ_{t_j}^{-1}`.
    pub fn transport(&self, i: usize, j: usize) -> Result<DMatrix<f64>> {
        // φ_i φ_j^{-1} = (φ_j^{-T} φ_i^T)^T
        let sol = self.matrices[j]
            .transpose()
            .lu()
            .solve(&self.matrices[i].transpose())
            .ok_or_else(|| Error::Singular(format!("fundamental matrix at step {j}")))?;
        Ok(sol.transpose())
    }
}

fn solve_matrix(a: DMatrix<f64>, rhs: &DMatrix<f64>, what: &str, k: usize) -> Result<DMatrix<f64>> {
    a.lu().solve(rhs).ok_or_else(|| Error::Singular(format!("{what} at step {k}")))
}

/// `(I - δ/2 ∂b(X_{j+1})) φ_{j+1} = (I + δ/2 ∂b(X_j)) φ_j` along a fine trajectory.
pub fn fundamental_matrix_reference(spec: &DriftSpec, x_traj: &Trajectory) -> Result<FundamentalMatrixPath> {
    let m = spec.dim();
    if x_traj.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, got: x_traj.dim() });
    }
    let id = DMatrix::<f64>::identity(m, m);
    let mut matrices = Vec::with_capacity(x_traj.states.len());
    matrices.push(id.clone());
    let mut jac = spec.db(&x_traj.states[0]);
    for k in 0..x_traj.grid.steps() {
        let half = 0.5 * x_traj.grid.delta(k);
        let next_jac = spec.db(&x_traj.states[k + 1]);
        let rhs = (&id + &jac * half) * &matrices[k];
        matrices.push(solve_matrix(&id - &next_jac * half, &rhs, "trapezoid matrix", k)?);
        jac = next_jac;
    }
    Ok(FundamentalMatrixPath { grid: x_traj.grid.clone(), matrices, scheme: PhiScheme::Reference })
}

/// Forward-backward Euler for `φ` on `coarse`, with `X` read off the fine trajectory.
pub fn fundamental_matrix_fb_euler(
    spec: &DriftSpec,
    x_traj: &Trajectory,
    coarse: &Partition,
) -> Result<FundamentalMatrixPath> {
    let m = spec.dim();
    if x_traj.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, got: x_traj.dim() });
    }
    let xs = x_traj.restrict(coarse)?;
    let id = DMatrix::<f64>::identity(m, m);
    let mut matrices = Vec::with_capacity(xs.len());
    matrices.push(id.clone());
    for k in 0..coarse.steps() {
        let dt = coarse.delta(k);
        let a = &id - spec.db(&xs[k]) * dt;
        let next = solve_matrix(a, &matrices[k], "resolvent", k).map_err(|e| match e {
            Error::Singular(_) => Error::Step { step: k, source: SolveError::LinearSolveFailure },
            other => other,
        })?;
        matrices.push(next);
    }
    Ok(FundamentalMatrixPath { grid: coarse.clone(), matrices, scheme: PhiScheme::ForwardBackward })
}
