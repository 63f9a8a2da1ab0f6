//! Simulation of `dX_t = b(X_t) dt + dB_t` driven by fractional Brownian
//! motion with Hurst parameter `H > 1/2` and a one-sided Lipschitz drift.
//!
//! The crate provides exact fBm sampling ([`fbm`]), drift fields with
//! declared constants ([`drift`]), the implicit step solver ([`implicit`]),
//! backward Euler and the comparison schemes ([`integrators`]), the
//! asymptotic error process of backward Euler ([`limit`]) and Monte Carlo
//! drivers for strong-error and stability experiments ([`harness`]).

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csv;
pub mod drift;
pub mod error;
pub mod fbm;
pub mod harness;
pub mod implicit;
pub mod integrators;
pub mod limit;
pub mod partition;
pub mod seed;

pub use drift::{BuiltinDrift, DriftRegistry, DriftSpec, VectorField};
pub use error::{Error, Result, SolveError};
pub use fbm::{FbmGenerator, FbmMethod, FbmPath, HurstVector};
pub use harness::{ExperimentConfig, RateReport, StabilityTable};
pub use implicit::{SolveConfig, StepResult};
pub use integrators::{Divergence, FundamentalMatrixPath, Scheme, Trajectory};
pub use limit::{LimitComparison, LimitConfig};
pub use partition::Partition;

pub use nalgebra::{DMatrix, DVector};
