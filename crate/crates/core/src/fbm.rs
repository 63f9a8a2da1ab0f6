//! Exact-in-distribution fractional Brownian motion on a time grid.
//!
//! Two samplers are provided. [`CholeskySampler`] factors the covariance of
//! the path levels `B_{t_1}, ..., B_{t_n}` and works on arbitrary grids at
//! `O(n^3)` setup cost. [`CirculantSampler`] embeds the stationary increment
//! covariance of a uniform grid into a circulant matrix (Davies-Harte) and
//! draws paths in `O(n log n)`.
//!
//! Samplers are built once per `(grid, H)` and then draw any number of paths
//! from 64-bit seeds; drawing is a pure function of the seed.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::csv::series_csv;
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::seed::{derive_seed, rng_from_seed};

/// Pivots of the level covariance within this distance below zero are
/// treated as zero.
pub const CHOLESKY_TOLERANCE: f64 = 1e-10;
/// Circulant eigenvalues in `[-EMBEDDING_TOLERANCE, 0)` are clipped to zero;
/// anything lower is an embedding failure.
pub const EMBEDDING_TOLERANCE: f64 = 1e-10;

fn check_hurst(h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("Hurst parameter {h} outside (0, 1)")))
    }
}

/// Per-coordinate Hurst parameters `H = (H_1, ..., H_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HurstVector(Vec<f64>);

impl HurstVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("Hurst vector must have at least one component".into()));
        }
        for &h in &components {
            check_hurst(h)?;
        }
        Ok(Self(components))
    }

    /// The same `h` for all `dim` coordinates.
    pub fn uniform(h: f64, dim: usize) -> Result<Self> {
        Self::new(vec![h; dim])
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Integrators only accept the Young regime `H > 1/2`.
    pub fn require_young_regime(&self) -> Result<()> {
        match self.0.iter().find(|&&h| h <= 0.5) {
            Some(h) => Err(Error::Domain(format!(
                "Hurst component {h} must exceed 1/2 for the integrators"
            ))),
            None => Ok(()),
        }
    }
}

/// An `m`-dimensional fBm sample on a grid; `values[0]` is the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    grid: Partition,
    values: Vec<DVector<f64>>,
    hurst: HurstVector,
    seed: u64,
}

impl FbmPath {
    /// The identically zero path. Useful for deterministic (noise-free) runs.
    pub fn zero(grid: Partition, hurst: HurstVector) -> Self {
        let values = vec![DVector::zeros(hurst.dim()); grid.steps() + 1];
        Self { grid, values, hurst, seed: 0 }
    }

    /// Assembles a path from explicit values. `values[0]` must vanish.
    pub fn from_values(grid: Partition, values: Vec<DVector<f64>>, hurst: HurstVector, seed: u64) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(Error::DimensionMismatch { expected: grid.steps() + 1, got: values.len() });
        }
        if let Some(v) = values.iter().find(|v| v.len() != hurst.dim()) {
            return Err(Error::DimensionMismatch { expected: hurst.dim(), got: v.len() });
        }
        if values[0].iter().any(|&x| x != 0.0) {
            return Err(Error::Domain("fBm paths start at the origin".into()));
        }
        Ok(Self { grid, values, hurst, seed })
    }

    pub fn grid(&self) -> &Partition {
        &self.grid
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn value(&self, k: usize) -> &DVector<f64> {
        &self.values[k]
    }

    /// `B_{t_{k+1}} - B_{t_k}`.
    pub fn increment(&self, k: usize) -> DVector<f64> {
        &self.values[k + 1] - &self.values[k]
    }

    pub fn hurst(&self) -> &HurstVector {
        &self.hurst
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.hurst.dim()
    }

    /// The scalar series of coordinate `i`.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[i]).collect()
    }

    /// CSV with header `t,B1,...,Bm`.
    pub fn to_csv(&self) -> String {
        series_csv(
            "B",
            self.dim(),
            self.grid.times().iter().copied().zip(self.values.iter().map(|v| v.as_slice())),
        )
    }
}

/// `E[B_s B_t] = (t^{2H} + s^{2H} - |t-s|^{2H}) / 2`.
pub fn covariance(s: f64, t: f64, h: f64) -> Result<f64> {
    check_hurst(h)?;
    if !(s >= 0.0 && t >= 0.0) {
        return Err(Error::Domain(format!("times must be non-negative, got ({s}, {t})")));
    }
    let two_h = 2.0 * h;
    Ok(0.5 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h)))
}

/// Covariance of the path levels at `t_1, ..., t_n` (the origin is excluded).
pub fn build_covariance_matrix(grid: &Partition, h: f64) -> Result<DMatrix<f64>> {
    check_hurst(h)?;
    let times = &grid.times()[1..];
    let n = times.len();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = covariance(times[i], times[j], h)?;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

/// Lower Cholesky factor; pivots in `[-tol, 0]` are zeroed, lower ones fail.
fn cholesky_lower(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    // row-major so that the inner products run over contiguous memory
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let row_j = &mut l[j * n..(j + 1) * n];
        let mut d = a[(j, j)];
        d -= row_j[..j].iter().map(|v| v * v).sum::<f64>();
        if d < -tol {
            return Err(Error::Factorization { index: j, value: d });
        }
        let ljj = d.max(0.0).sqrt();
        row_j[j] = ljj;
        if ljj == 0.0 {
            continue;
        }
        for i in (j + 1)..n {
            let (upper, lower) = l.split_at_mut(i * n);
            let row_j = &upper[j * n..j * n + j];
            let row_i = &mut lower[..n];
            let dot: f64 = row_i[..j].iter().zip(row_j).map(|(x, y)| x * y).sum();
            row_i[j] = (a[(i, j)] - dot) / ljj;
        }
    }
    Ok(DMatrix::from_row_slice(n, n, &l))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FbmMethod {
    #[default]
    Cholesky,
    Circulant,
}

impl FromStr for FbmMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(Self::Cholesky),
            "circulant" => Ok(Self::Circulant),
            other => Err(Error::Config(format!("unknown fBm method {other:?}"))),
        }
    }
}

impl fmt::Display for FbmMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cholesky => "cholesky",
            Self::Circulant => "circulant",
        })
    }
}

/// Exact sampler for one coordinate on an arbitrary grid.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    grid: Partition,
    hurst: f64,
    factor: DMatrix<f64>,
}

impl CholeskySampler {
    pub fn new(grid: &Partition, h: f64) -> Result<Self> {
        let cov = build_covariance_matrix(grid, h)?;
        let factor = cholesky_lower(&cov, CHOLESKY_TOLERANCE)?;
        Ok(Self { grid: grid.clone(), hurst: h, factor })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Levels `B_{t_0}, ..., B_{t_n}` with `B_{t_0} = 0`.
    pub fn sample_levels<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.grid.steps();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut out = Vec::with_capacity(n + 1);
        out.push(0.0);
        for i in 0..n {
            let row = self.factor.row(i);
            let mut acc = 0.0;
            for k in 0..=i {
                acc += row[k] * z[k];
            }
            out.push(acc);
        }
        out
    }
}

/// Davies-Harte sampler for one coordinate on a uniform grid.
#[derive(Clone)]
pub struct CirculantSampler {
    steps: usize,
    t_final: f64,
    hurst: f64,
    scaled_sqrt_eigen: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for CirculantSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CirculantSampler")
            .field("steps", &self.steps)
            .field("t_final", &self.t_final)
            .field("hurst", &self.hurst)
            .finish_non_exhaustive()
    }
}

/// Autocovariance of fractional Gaussian noise with unit step at lag `k`.
fn fgn_autocovariance(k: usize, h: f64) -> f64 {
    let two_h = 2.0 * h;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

impl CirculantSampler {
    pub fn new(steps: usize, t_final: f64, h: f64) -> Result<Self> {
        check_hurst(h)?;
        // validates steps and t_final
        Partition::uniform(steps, t_final)?;
        let size = 2 * steps;
        let mut row: Vec<Complex64> = (0..size)
            .map(|j| {
                let lag = if j <= steps { j } else { size - j };
                Complex64::new(fgn_autocovariance(lag, h), 0.0)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(size);
        fft.process(&mut row);
        let dt = t_final / steps as f64;
        let scale = dt.powf(h);
        let mut scaled_sqrt_eigen = Vec::with_capacity(size);
        for (index, c) in row.iter().enumerate() {
            let mut lambda = c.re;
            if lambda < 0.0 {
                if lambda < -EMBEDDING_TOLERANCE {
                    return Err(Error::Embedding { index, value: lambda });
                }
                lambda = 0.0;
            }
            scaled_sqrt_eigen.push(scale * (lambda / size as f64).sqrt());
        }
        Ok(Self { steps, t_final, hurst: h, scaled_sqrt_eigen, fft })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn grid(&self) -> Partition {
        Partition::uniform(self.steps, self.t_final).expect("validated at construction")
    }

    /// Levels `B_{t_0}, ..., B_{t_n}` with `B_{t_0} = 0`.
    pub fn sample_levels<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut w: Vec<Complex64> = self
            .scaled_sqrt_eigen
            .iter()
            .map(|&s| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(s * re, s * im)
            })
            .collect();
        self.fft.process(&mut w);
        let mut out = Vec::with_capacity(self.steps + 1);
        let mut level = 0.0;
        out.push(level);
        for z in &w[..self.steps] {
            level += z.re;
            out.push(level);
        }
        out
    }
}

#[derive(Debug, Clone)]
enum ScalarSampler {
    Cholesky(CholeskySampler),
    Circulant(CirculantSampler),
}

impl ScalarSampler {
    fn new(grid: &Partition, h: f64, method: FbmMethod) -> Result<Self> {
        match method {
            FbmMethod::Cholesky => Ok(Self::Cholesky(CholeskySampler::new(grid, h)?)),
            FbmMethod::Circulant => {
                if !grid.is_uniform() {
                    return Err(Error::InvalidPartition("circulant sampling needs a uniform grid".into()));
                }
                Ok(Self::Circulant(CirculantSampler::new(grid.steps(), grid.t_final(), h)?))
            }
        }
    }

    fn sample_levels(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        match self {
            Self::Cholesky(s) => s.sample_levels(&mut rng),
            Self::Circulant(s) => s.sample_levels(&mut rng),
        }
    }
}

/// Reusable multi-coordinate sampler. Coordinate `i` of the path drawn from
/// `seed` uses the sub-seed `derive_seed(seed, i)`.
#[derive(Debug, Clone)]
pub struct FbmGenerator {
    grid: Partition,
    hurst: HurstVector,
    samplers: Vec<Arc<ScalarSampler>>,
}

impl FbmGenerator {
    pub fn new(grid: &Partition, hurst: &HurstVector, method: FbmMethod) -> Result<Self> {
        let mut samplers: Vec<Arc<ScalarSampler>> = Vec::with_capacity(hurst.dim());
        for (i, &h) in hurst.components().iter().enumerate() {
            let shared = hurst.components()[..i].iter().position(|&g| g == h);
            let sampler = match shared {
                Some(j) => Arc::clone(&samplers[j]),
                None => Arc::new(ScalarSampler::new(grid, h, method)?),
            };
            samplers.push(sampler);
        }
        Ok(Self { grid: grid.clone(), hurst: hurst.clone(), samplers })
    }

    pub fn grid(&self) -> &Partition {
        &self.grid
    }

    pub fn hurst(&self) -> &HurstVector {
        &self.hurst
    }

    pub fn sample(&self, seed: u64) -> FbmPath {
        let m = self.hurst.dim();
        let n = self.grid.steps();
        let coords: Vec<Vec<f64>> = self
            .samplers
            .iter()
            .enumerate()
            .map(|(i, s)| s.sample_levels(derive_seed(seed, i as u64)))
            .collect();
        let values = (0..=n).map(|k| DVector::from_fn(m, |i, _| coords[i][k])).collect();
        FbmPath { grid: self.grid.clone(), values, hurst: self.hurst.clone(), seed }
    }
}

/// One coordinate drawn with the Cholesky sampler, seeded directly by `seed`.
pub fn sample_path_cholesky(grid: &Partition, h: f64, seed: u64) -> Result<FbmPath> {
    let sampler = CholeskySampler::new(grid, h)?;
    let levels = sampler.sample_levels(&mut rng_from_seed(seed));
    scalar_path(grid.clone(), levels, h, seed)
}

/// One coordinate on the uniform grid with `n` steps over `[0, t_final]`.
pub fn sample_path_circulant(n: usize, t_final: f64, h: f64, seed: u64) -> Result<FbmPath> {
    let sampler = CirculantSampler::new(n, t_final, h)?;
    let levels = sampler.sample_levels(&mut rng_from_seed(seed));
    scalar_path(sampler.grid(), levels, h, seed)
}

fn scalar_path(grid: Partition, levels: Vec<f64>, h: f64, seed: u64) -> Result<FbmPath> {
    let values = levels.into_iter().map(|v| DVector::from_element(1, v)).collect();
    Ok(FbmPath { grid, values, hurst: HurstVector::new(vec![h])?, seed })
}

/// `m` independent coordinates via the Cholesky sampler.
pub fn sample_multi(grid: &Partition, hurst: &HurstVector, seed: u64) -> Result<FbmPath> {
    Ok(FbmGenerator::new(grid, hurst, FbmMethod::Cholesky)?.sample(seed))
}

/// Restriction of `path` to the nested grid `coarse`.
pub fn coarsen(path: &FbmPath, coarse: &Partition) -> Result<FbmPath> {
    let idx = path.grid.nested_indices(coarse)?;
    let values = idx.iter().map(|&i| path.values[i].clone()).collect();
    Ok(FbmPath { grid: coarse.clone(), values, hurst: path.hurst.clone(), seed: path.seed })
}
