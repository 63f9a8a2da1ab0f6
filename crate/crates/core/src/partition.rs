//! Time grids `0 = t_0 < t_1 < ... < t_n = T`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
    mesh: f64,
}

impl Partition {
    /// Builds a partition from explicit times. The first time must be 0 and the
    /// sequence strictly increasing with at least one step.
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidPartition("need at least one step".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidPartition(format!("first time is {}, expected 0", times[0])));
        }
        let mut mesh = 0.0f64;
        for (k, w) in times.windows(2).enumerate() {
            let gap = w[1] - w[0];
            if !(gap > 0.0) || !w[1].is_finite() {
                return Err(Error::InvalidPartition(format!(
                    "times not strictly increasing at index {}",
                    k + 1
                )));
            }
            mesh = mesh.max(gap);
        }
        Ok(Self { times, mesh })
    }

    pub fn uniform(steps: usize, t_final: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidPartition("need at least one step".into()));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidPartition(format!("final time {t_final} must be positive")));
        }
        let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * t_final / steps as f64).collect();
        times[steps] = t_final;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t_final(&self) -> f64 {
        self.times[self.steps()]
    }

    /// Largest gap `|π|`.
    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    /// Width of step `k`, i.e. `t_{k+1} - t_k`.
    pub fn delta(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn is_uniform(&self) -> bool {
        let h = self.t_final() / self.steps() as f64;
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h)
    }

    fn tolerance(&self) -> f64 {
        1e-9 * self.t_final().max(self.mesh)
    }

    /// Index of the grid time matching `t` up to a relative tolerance of 1e-9.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = self.tolerance();
        let pos = self.times.partition_point(|&s| s < t - tol);
        (pos < self.times.len() && (self.times[pos] - t).abs() <= tol).then_some(pos)
    }

    /// For every time of `coarse`, the index of the same time in `self`.
    pub fn nested_indices(&self, coarse: &Partition) -> Result<Vec<usize>> {
        coarse
            .times
            .iter()
            .map(|&t| self.index_of(t).ok_or(Error::NotNested(t)))
            .collect()
    }

    /// Index `k` with `t_k < t <= t_{k+1}`; `None` when `t` is outside `(0, T]`.
    pub fn step_containing(&self, t: f64) -> Option<usize> {
        if let Some(i) = self.index_of(t) {
            return i.checked_sub(1);
        }
        if t <= 0.0 || t > self.t_final() {
            return None;
        }
        Some(self.times.partition_point(|&s| s < t) - 1)
    }
}
