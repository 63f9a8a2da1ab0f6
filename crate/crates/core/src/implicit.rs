//! Solver for the implicit step equation `y - delta * b(y) = c`.
//!
//! The map `y -> y - delta b(y)` is injective as soon as `kappa * delta < 1`,
//! and its Jacobian `I - delta ∂b(y)` then has inverse norm at most
//! `(1 - kappa delta)^{-1}`. Damped Newton is used throughout; scalar
//! problems fall back to a bracketing bisection when Newton stalls.

use nalgebra::{DMatrix, DVector};

use crate::drift::DriftSpec;
use crate::error::{Error, Result, SolveError};

/// Maximum `kappa * delta` accepted while the guard is on.
pub const KAPPA_GUARD_LIMIT: f64 = 0.9;
const MAX_HALVINGS: usize = 30;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    /// Absolute tolerance on the Euclidean residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Reject steps with `kappa * delta > KAPPA_GUARD_LIMIT`.
    pub kappa_guard: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 50, kappa_guard: true }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("newton tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("newton max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub y: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Checks the step-size guard for an implicit weight `delta`.
pub fn check_guard(spec: &DriftSpec, delta: f64, cfg: &SolveConfig) -> Result<(), SolveError> {
    let product = spec.kappa() * delta;
    if cfg.kappa_guard && product > KAPPA_GUARD_LIMIT {
        return Err(SolveError::StepTooLarge { product, limit: KAPPA_GUARD_LIMIT });
    }
    Ok(())
}

/// Solves `y - delta b(y) = c` starting from `y = c`.
pub fn solve_backward_step(
    spec: &DriftSpec,
    delta: f64,
    c: &DVector<f64>,
    cfg: &SolveConfig,
) -> Result<StepResult, SolveError> {
    solve_backward_step_from(spec, delta, c, c, cfg)
}

/// As [`solve_backward_step`] with an explicit initial guess.
pub fn solve_backward_step_from(
    spec: &DriftSpec,
    delta: f64,
    c: &DVector<f64>,
    guess: &DVector<f64>,
    cfg: &SolveConfig,
) -> Result<StepResult, SolveError> {
    let m = spec.dim();
    for v in [c, guess] {
        if v.len() != m {
            return Err(SolveError::DimensionMismatch { expected: m, got: v.len() });
        }
    }
    check_guard(spec, delta, cfg)?;

    let residual_of = |y: &DVector<f64>| y - spec.b(y) * delta - c;
    let mut y = guess.clone();
    let mut r = residual_of(&y);
    let mut rnorm = r.norm();
    let mut iterations = 0;

    while rnorm > cfg.tol && iterations < cfg.max_iter {
        // non-finite residuals cannot be damped back into range
        if !rnorm.is_finite() {
            break;
        }
        iterations += 1;
        let jac = DMatrix::identity(m, m) - spec.db(&y) * delta;
        let step = jac.lu().solve(&(-&r)).ok_or(SolveError::LinearSolveFailure)?;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &y + &step * scale;
            let tr = residual_of(&trial);
            let tn = tr.norm();
            if tn < rnorm {
                accepted = Some((trial, tr, tn));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((ny, nr, nn)) => {
                y = ny;
                r = nr;
                rnorm = nn;
            }
            None => break,
        }
    }

    if rnorm <= cfg.tol {
        return Ok(StepResult { y, residual: rnorm, iterations });
    }
    if m == 1 && c[0].is_finite() {
        if let Some((root, res, its)) = bisect_scalar(spec, delta, c[0], cfg.tol) {
            return Ok(StepResult {
                y: DVector::from_element(1, root),
                residual: res,
                iterations: iterations + its,
            });
        }
    }
    Err(SolveError::NoConvergence { residual: rnorm, iterations })
}

/// Bracket-expanding bisection on `g(y) = y - delta b(y) - c`.
fn bisect_scalar(spec: &DriftSpec, delta: f64, c: f64, tol: f64) -> Option<(f64, f64, usize)> {
    let g = |y: f64| {
        let v = DVector::from_element(1, y);
        y - delta * spec.b(&v)[0] - c
    };
    let mut width = 1.0f64.max(c.abs());
    let (mut lo, mut hi) = (c - width, c + width);
    let mut its = 0;
    while !(g(lo) <= 0.0 && g(hi) >= 0.0) {
        width *= 2.0;
        lo = c - width;
        hi = c + width;
        its += 1;
        if its > 64 || !width.is_finite() {
            return None;
        }
    }
    for _ in 0..MAX_BISECTIONS {
        its += 1;
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() <= tol {
            return Some((mid, gm.abs(), its));
        }
        if mid <= lo || mid >= hi {
            break;
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let best = if g(lo).abs() < g(hi).abs() { lo } else { hi };
    let res = g(best).abs();
    (res <= tol).then_some((best, res, its))
}

/// Spectral norm of `(I - t J)^{-1}` together with the bound `(1 - lambda t)^{-1}`
/// that holds whenever `<x, J x> <= lambda |x|^2`.
pub fn resolvent_norm_bound(j: &DMatrix<f64>, t: f64, lambda: f64) -> Result<(f64, f64)> {
    if !j.is_square() {
        return Err(Error::DimensionMismatch { expected: j.nrows(), got: j.ncols() });
    }
    if lambda * t >= 1.0 {
        return Err(Error::Domain(format!("lambda * t = {} must be below 1", lambda * t)));
    }
    let m = j.nrows();
    let a = DMatrix::identity(m, m) - j * t;
    let smin = a.svd(false, false).singular_values.min();
    if smin <= 0.0 {
        return Err(Error::Singular("I - tJ".into()));
    }
    Ok((1.0 / smin, 1.0 / (1.0 - lambda * t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::BuiltinDrift;
    use approx::assert_relative_eq;

    fn scalar(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn cubic_root_examples() {
        let cubic = BuiltinDrift::Cubic1d.spec().unwrap();
        let cfg = SolveConfig::default();
        for &d in &[0.01, 1.0, 50.0] {
            let r = solve_backward_step(&cubic, d, &scalar(0.0), &cfg).unwrap();
            assert_eq!(r.y[0], 0.0);
        }
        // y + y^3 = 2 has the single real root 1
        let r = solve_backward_step(&cubic, 1.0, &scalar(2.0), &cfg).unwrap();
        assert!((r.y[0] - 1.0).abs() <= 1e-12);
        assert!(r.residual <= 1e-12);
    }

    #[test]
    fn linear_closed_form_in_one_newton_step() {
        for &lambda in &[-3.0, -0.5, 0.4] {
            let lin = BuiltinDrift::Linear(DMatrix::from_element(1, 1, lambda)).spec().unwrap();
            let cfg = SolveConfig::default();
            let r = solve_backward_step(&lin, 0.5, &scalar(1.7), &cfg).unwrap();
            assert_relative_eq!(r.y[0], 1.7 / (1.0 - lambda * 0.5), epsilon = 1e-14);
            assert!(r.iterations <= 1);
        }
    }

    #[test]
    fn guard_rejects_large_steps() {
        let dw = BuiltinDrift::DoubleWell1d.spec().unwrap();
        let cfg = SolveConfig::default();
        assert!(matches!(
            solve_backward_step(&dw, 0.95, &scalar(1.0), &cfg),
            Err(SolveError::StepTooLarge { .. })
        ));
        assert!(solve_backward_step(&dw, 0.9, &scalar(1.0), &cfg).is_ok());
        // dissipative drifts carry no restriction
        let cubic = BuiltinDrift::Cubic1d.spec().unwrap();
        assert!(solve_backward_step(&cubic, 1e3, &scalar(4.0), &cfg).is_ok());
    }

    #[test]
    fn dimension_mismatch() {
        let planar = BuiltinDrift::PlanarCubic.spec().unwrap();
        assert!(matches!(
            solve_backward_step(&planar, 0.1, &scalar(1.0), &SolveConfig::default()),
            Err(SolveError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn stiff_cubic_from_far_guess_falls_back_or_converges() {
        let cubic = BuiltinDrift::Cubic1d.spec().unwrap();
        let cfg = SolveConfig { max_iter: 2, ..SolveConfig::default() };
        let r = solve_backward_step_from(&cubic, 10.0, &scalar(30.0), &scalar(1e4), &cfg).unwrap();
        assert!(r.residual <= 1e-12);
        assert!((r.y[0] + 10.0 * r.y[0].powi(3) - 30.0).abs() <= 1e-12);
    }

    #[test]
    fn planar_step_converges() {
        let planar = BuiltinDrift::PlanarCubic.spec().unwrap();
        let c = DVector::from_column_slice(&[1.3, -0.7]);
        let r = solve_backward_step(&planar, 2f64.powi(-5), &c, &SolveConfig::default()).unwrap();
        let res = &r.y - planar.eval(&r.y).unwrap() * 2f64.powi(-5) - &c;
        assert!(res.norm() <= 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(SolveConfig::default().validate().is_ok());
        assert!(SolveConfig { tol: 0.0, ..SolveConfig::default() }.validate().is_err());
        assert!(SolveConfig { max_iter: 0, ..SolveConfig::default() }.validate().is_err());
    }

    #[test]
    fn resolvent_examples() {
        let (n, b) = resolvent_norm_bound(&DMatrix::zeros(2, 2), 0.3, 0.0).unwrap();
        assert_relative_eq!(n, 1.0, epsilon = 1e-14);
        assert_relative_eq!(b, 1.0);

        let (n, b) = resolvent_norm_bound(&-DMatrix::<f64>::identity(2, 2), 1.0, -1.0).unwrap();
        assert_relative_eq!(n, 0.5, epsilon = 1e-14);
        assert_relative_eq!(b, 0.5);

        let j = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, -5.0]));
        let (n, b) = resolvent_norm_bound(&j, 0.5, 1.0).unwrap();
        assert_relative_eq!(n, 2.0, epsilon = 1e-12);
        assert_relative_eq!(b, 2.0);

        assert!(resolvent_norm_bound(&j, 1.0, 1.0).is_err());
    }
}
