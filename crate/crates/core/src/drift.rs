//! Drift fields `b: R^m -> R^m` with their Jacobians and declared constants.
//!
//! A [`DriftSpec`] pairs a [`VectorField`] with the one-sided Lipschitz
//! constant `kappa` (`<x-y, b(x)-b(y)> <= kappa |x-y|^2`) and polynomial growth
//! data `|b(x)| <= growth * (1 + |x|^mu)`. The constants are declarations;
//! [`verify_one_sided`] only samples them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::implicit::{solve_backward_step, SolveConfig};
use crate::seed::rng_from_seed;

pub trait VectorField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Clone)]
pub struct DriftSpec {
    name: String,
    kappa: f64,
    mu: f64,
    growth: f64,
    field: Arc<dyn VectorField>,
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftSpec")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("kappa", &self.kappa)
            .field("mu", &self.mu)
            .field("growth", &self.growth)
            .finish()
    }
}

impl DriftSpec {
    pub fn new(name: impl Into<String>, field: Arc<dyn VectorField>, kappa: f64, mu: f64, growth: f64) -> Self {
        Self { name: name.into(), kappa, mu, growth, field }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    /// Declared one-sided Lipschitz constant.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Declared growth exponent.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Declared growth constant.
    pub fn growth(&self) -> f64 {
        self.growth
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() })
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x)?;
        Ok(self.field.eval(x))
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check(x)?;
        Ok(self.field.jacobian(x))
    }

    /// `(∂b b)(x) = Σ_i ∂_i b(x) b^i(x)`, the Jacobian applied to the drift.
    pub fn drift_drift_product(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x)?;
        Ok(self.field.jacobian(x) * self.field.eval(x))
    }

    // Unchecked accessors for the inner loops; callers validate dimensions once.
    pub(crate) fn b(&self, x: &DVector<f64>) -> DVector<f64> {
        self.field.eval(x)
    }

    pub(crate) fn db(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.field.jacobian(x)
    }
}

/// The drifts used by the bundled experiments.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinDrift {
    /// `b(x) = -x^3`.
    Cubic1d,
    /// `b(x) = x - x^3`.
    DoubleWell1d,
    /// `b(x, y) = (x - y - x^3 - x y^2, x + y - x^2 y - y^3)`.
    PlanarCubic,
    /// `b(x) = M x`.
    Linear(DMatrix<f64>),
}

#[derive(Debug)]
struct Cubic;

impl VectorField for Cubic {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, -x[0].powi(3))
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -3.0 * x[0] * x[0])
    }
}

#[derive(Debug)]
struct DoubleWell;

impl VectorField for DoubleWell {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x[0] - x[0].powi(3))
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0 - 3.0 * x[0] * x[0])
    }
}

#[derive(Debug)]
struct Planar;

impl VectorField for Planar {
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, v: &DVector<f64>) -> DVector<f64> {
        let (x, y) = (v[0], v[1]);
        let r2 = x * x + y * y;
        DVector::from_column_slice(&[x - y - x * r2, x + y - y * r2])
    }
    fn jacobian(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let (x, y) = (v[0], v[1]);
        DMatrix::from_row_slice(
            2,
            2,
            &[
                1.0 - 3.0 * x * x - y * y,
                -1.0 - 2.0 * x * y,
                1.0 - 2.0 * x * y,
                1.0 - x * x - 3.0 * y * y,
            ],
        )
    }
}

#[derive(Debug)]
struct Linear(DMatrix<f64>);

impl VectorField for Linear {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.0 * x
    }
    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.0.clone()
    }
}

/// Largest eigenvalue of the symmetric part of `m`: the sharp one-sided
/// constant of `x -> m x`.
pub fn symmetric_part_max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.max()
}

impl BuiltinDrift {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Cubic1d => "cubic1d",
            Self::DoubleWell1d => "doublewell1d",
            Self::PlanarCubic => "planar_cubic",
            Self::Linear(_) => "linear",
        }
    }

    pub fn spec(&self) -> Result<DriftSpec> {
        let name = self.name();
        Ok(match self {
            Self::Cubic1d => DriftSpec::new(name, Arc::new(Cubic), 0.0, 3.0, 1.0),
            Self::DoubleWell1d => DriftSpec::new(name, Arc::new(DoubleWell), 1.0, 3.0, 2.0),
            // sym(J) = (1 - |v|^2) I - 2 v v^T <= I
            Self::PlanarCubic => DriftSpec::new(name, Arc::new(Planar), 1.0, 3.0, 2.0),
            Self::Linear(m) => {
                if m.nrows() != m.ncols() || m.nrows() == 0 {
                    return Err(Error::Config(format!(
                        "linear drift needs a non-empty square matrix, got {}x{}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                let kappa = symmetric_part_max_eigenvalue(m);
                let norm = m.clone().svd(false, false).singular_values.max();
                DriftSpec::new(name, Arc::new(Linear(m.clone())), kappa, 1.0, norm)
            }
        })
    }
}

/// Name-to-drift lookup, preloaded with the built-in drifts. `example1` and
/// `example2` alias `cubic1d` and `planar_cubic`.
#[derive(Debug, Clone)]
pub struct DriftRegistry {
    drifts: BTreeMap<String, DriftSpec>,
}

impl Default for DriftRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl DriftRegistry {
    pub fn empty() -> Self {
        Self { drifts: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        for b in [BuiltinDrift::Cubic1d, BuiltinDrift::DoubleWell1d, BuiltinDrift::PlanarCubic] {
            r.register(b.name(), b.spec().expect("builtin drifts are valid"));
        }
        r.register("example1", BuiltinDrift::Cubic1d.spec().expect("valid"));
        r.register("example2", BuiltinDrift::PlanarCubic.spec().expect("valid"));
        r
    }

    pub fn register(&mut self, name: impl Into<String>, spec: DriftSpec) {
        self.drifts.insert(name.into(), spec);
    }

    /// `linear` is resolved through [`BuiltinDrift::Linear`] since it needs a matrix.
    pub fn get(&self, name: &str) -> Result<DriftSpec> {
        self.drifts.get(name).cloned().ok_or_else(|| Error::UnknownDrift(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.drifts.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneSidedReport {
    /// Largest sampled `<x, J_b(y) x> / |x|^2` or `<x-y, b(x)-b(y)> / |x-y|^2`.
    pub max_ratio: f64,
    pub declared_kappa: f64,
    pub samples: usize,
    pub violated: bool,
}

/// Samples the one-sided constant over the box `[-r, r]^m`, both through the
/// Jacobian quadratic form and through difference quotients.
pub fn verify_one_sided(spec: &DriftSpec, box_radius: f64, samples: usize, seed: u64) -> OneSidedReport {
    let m = spec.dim();
    let mut rng = rng_from_seed(seed);
    let point = |rng: &mut rand_chacha::ChaCha8Rng| {
        DVector::from_fn(m, |_, _| rng.random_range(-box_radius..=box_radius))
    };
    let mut max_ratio = f64::NEG_INFINITY;
    for _ in 0..samples.max(1) {
        let y = point(&mut rng);
        let dir = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n2 = dir.norm_squared();
        if n2 > 0.0 {
            max_ratio = max_ratio.max(dir.dot(&(spec.db(&y) * &dir)) / n2);
        }
        let x = point(&mut rng);
        let d = &x - &y;
        let d2 = d.norm_squared();
        if d2 > 0.0 {
            max_ratio = max_ratio.max(d.dot(&(spec.b(&x) - spec.b(&y))) / d2);
        }
    }
    OneSidedReport {
        max_ratio,
        declared_kappa: spec.kappa(),
        samples: samples.max(1),
        violated: max_ratio > spec.kappa() + 1e-9,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub trajectory: Vec<DVector<f64>>,
    /// Largest `|x_t|^2 / bound(t)` seen along the run.
    pub worst_ratio: f64,
}

/// Relative slack granted to the discrete flow when checking the a priori bound.
pub const NOISE_FREE_SLACK: f64 = 0.05;

/// Integrates `x' = b(x)` with backward Euler and checks
/// `|x_t|^2 <= (|x_0|^2 + t |b(0)|^2) e^{(2 kappa + 1) t}` at every step.
pub fn noise_free_bound_check(spec: &DriftSpec, x0: &DVector<f64>, t_final: f64, steps: usize) -> Result<BoundCheck> {
    spec.check(x0)?;
    if steps == 0 || !(t_final > 0.0) {
        return Err(Error::Config("noise-free check needs steps >= 1 and T > 0".into()));
    }
    let cfg = SolveConfig::default();
    let dt = t_final / steps as f64;
    let b0 = spec.b(&DVector::zeros(spec.dim())).norm_squared();
    let x0sq = x0.norm_squared();
    let mut x = x0.clone();
    let mut trajectory = vec![x.clone()];
    let mut worst_ratio = 0.0f64;
    for k in 1..=steps {
        x = solve_backward_step(spec, dt, &x, &cfg).map_err(|source| Error::Step { step: k - 1, source })?.y;
        let t = k as f64 * dt;
        let rhs = (x0sq + t * b0) * ((2.0 * spec.kappa() + 1.0) * t).exp();
        let lhs = x.norm_squared();
        if lhs > rhs * (1.0 + NOISE_FREE_SLACK) {
            return Err(Error::BoundViolated { step: k, lhs, rhs });
        }
        if rhs > 0.0 {
            worst_ratio = worst_ratio.max(lhs / rhs);
        }
        trajectory.push(x.clone());
    }
    Ok(BoundCheck { trajectory, worst_ratio })
}
