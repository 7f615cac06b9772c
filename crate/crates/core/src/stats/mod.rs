//! Set-wide descriptor statistics: mean, population covariance and its
//! sorted, orientation-fixed eigenpairs.

mod eigen;

pub use eigen::{symmetric_eigen, NotConverged, SymmetricEigen, OFF_DIAGONAL_TOLERANCE};

use thiserror::Error;

use crate::io::DescriptorTensor;

/// Relative size below which the covariance trace counts as zero.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;
/// Relative size below which an orientation score counts as zero.
pub const ORIENTATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("descriptor dimension {found} does not match accumulator dimension {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("accumulator holds no descriptors")]
    EmptyAccumulator,
    #[error("top_k {top_k} outside 1..={d}")]
    InvalidTopK { top_k: usize, d: usize },
    #[error("degenerate covariance (trace {trace:e}, largest eigenvalue {lambda1:e})")]
    DegenerateCovariance { trace: f64, lambda1: f64 },
    #[error(transparent)]
    NotConverged(#[from] NotConverged),
}

/// Running raw moments of a descriptor stream.
///
/// Besides the sum and `Σ x xᵀ` (upper triangle, packed row by row) it keeps
/// `Σ x ‖x‖²` and `Σ ‖x‖²`, which is all the eigenvector orientation rule
/// needs, so no second pass over the data is required.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceAccumulator {
    d: usize,
    count: u64,
    sum: Vec<f64>,
    moment: Vec<f64>,
    energy_weighted_sum: Vec<f64>,
    energy: f64,
}

fn packed_len(d: usize) -> usize {
    d * (d + 1) / 2
}

impl CovarianceAccumulator {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            count: 0,
            sum: vec![0.0; d],
            moment: vec![0.0; packed_len(d)],
            energy_weighted_sum: vec![0.0; d],
            energy: 0.0,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum(&self) -> &[f64] {
        &self.sum
    }

    /// `Σ x xᵀ` as a full row-major `d x d` matrix, mirrored from the stored
    /// upper triangle.
    pub fn second_moment(&self) -> Vec<f64> {
        let d = self.d;
        let mut full = vec![0.0; d * d];
        let mut off = 0;
        for i in 0..d {
            for j in i..d {
                full[i * d + j] = self.moment[off];
                full[j * d + i] = self.moment[off];
                off += 1;
            }
        }
        full
    }

    pub fn push_descriptor(&mut self, x: &[f32]) -> Result<(), StatsError> {
        if x.len() != self.d {
            return Err(StatsError::DimMismatch { expected: self.d, found: x.len() });
        }
        let x: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        self.push_f64(&x);
        Ok(())
    }

    fn push_f64(&mut self, x: &[f64]) {
        let d = self.d;
        let mut norm2 = 0.0;
        let mut off = 0;
        for i in 0..d {
            let xi = x[i];
            norm2 += xi * xi;
            self.sum[i] += xi;
            let row = &mut self.moment[off..off + d - i];
            for (m, &xj) in row.iter_mut().zip(&x[i..]) {
                *m += xi * xj;
            }
            off += d - i;
        }
        for (e, &xi) in self.energy_weighted_sum.iter_mut().zip(x) {
            *e += xi * norm2;
        }
        self.energy += norm2;
        self.count += 1;
    }

    /// Adds every cell descriptor of `t`.
    pub fn accumulate(&mut self, t: &DescriptorTensor) -> Result<(), StatsError> {
        if t.d() != self.d {
            return Err(StatsError::DimMismatch { expected: self.d, found: t.d() });
        }
        let mut buf = vec![0.0f64; self.d];
        for cell in t.cells() {
            for (b, &v) in buf.iter_mut().zip(cell) {
                *b = f64::from(v);
            }
            self.push_f64(&buf);
        }
        Ok(())
    }

    /// Componentwise sum of two accumulators.
    pub fn merge(&mut self, other: &CovarianceAccumulator) -> Result<(), StatsError> {
        if other.d != self.d {
            return Err(StatsError::DimMismatch { expected: self.d, found: other.d });
        }
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.moment.iter_mut().zip(&other.moment) {
            *a += b;
        }
        for (a, b) in self.energy_weighted_sum.iter_mut().zip(&other.energy_weighted_sum) {
            *a += b;
        }
        self.energy += other.energy;
        Ok(())
    }

    pub fn mean(&self) -> Result<Vec<f64>, StatsError> {
        if self.count == 0 {
            return Err(StatsError::EmptyAccumulator);
        }
        let k = self.count as f64;
        Ok(self.sum.iter().map(|s| s / k).collect())
    }

    /// Population covariance `Σ x xᵀ / K − x̄ x̄ᵀ`.
    pub fn covariance(&self) -> Result<Vec<f64>, StatsError> {
        let mean = self.mean()?;
        let k = self.count as f64;
        let d = self.d;
        let mut cov = self.second_moment();
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] = cov[i * d + j] / k - mean[i] * mean[j];
            }
        }
        Ok(cov)
    }

    pub fn orientation_context(&self) -> Result<OrientationContext, StatsError> {
        Ok(OrientationContext {
            mean: self.mean()?,
            energy_weighted_sum: self.energy_weighted_sum.clone(),
            energy: self.energy,
        })
    }

    /// Mean, covariance and the top `top_k` oriented eigenvectors.
    pub fn finalize(&self, top_k: usize) -> Result<SetStatistics, StatsError> {
        if self.count == 0 {
            return Err(StatsError::EmptyAccumulator);
        }
        if top_k == 0 || top_k > self.d {
            return Err(StatsError::InvalidTopK { top_k, d: self.d });
        }
        let d = self.d;
        let mean = self.mean()?;
        let covariance = self.covariance()?;
        let trace: f64 = (0..d).map(|i| covariance[i * d + i]).sum();
        let mean_energy = self.energy / self.count as f64;
        if trace <= DEGENERACY_TOLERANCE * mean_energy {
            return Err(StatsError::DegenerateCovariance { trace, lambda1: trace.max(0.0) });
        }
        let eig = symmetric_eigen(&covariance, d)?;
        let lambda1 = eig.values[0];
        if lambda1 <= DEGENERACY_TOLERANCE * trace {
            return Err(StatsError::DegenerateCovariance { trace, lambda1 });
        }
        let ctx = self.orientation_context()?;
        let eigenvectors = eig.vectors.into_iter().take(top_k).map(|xi| orient_eigenvector(&xi, &ctx)).collect();
        Ok(SetStatistics {
            d,
            total_count: self.count,
            mean,
            covariance,
            eigenvalues: eig.values,
            eigenvectors,
        })
    }
}

/// Sufficient statistics for the eigenvector sign rule.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationContext {
    pub mean: Vec<f64>,
    /// `Σ x ‖x‖²` over the stream.
    pub energy_weighted_sum: Vec<f64>,
    /// `Σ ‖x‖²` over the stream.
    pub energy: f64,
}

impl OrientationContext {
    /// `Σ (ξᵀ(x − x̄)) ‖x‖²`, expanded as `ξᵀ(Σ x‖x‖² − x̄ Σ‖x‖²)`.
    pub fn score(&self, xi: &[f64]) -> f64 {
        xi.iter()
            .zip(self.energy_weighted_sum.iter().zip(&self.mean))
            .map(|(&x, (&ew, &m))| x * (ew - m * self.energy))
            .sum()
    }

    fn score_scale(&self, xi: &[f64]) -> f64 {
        xi.iter()
            .zip(self.energy_weighted_sum.iter().zip(&self.mean))
            .map(|(&x, (&ew, &m))| x.abs() * (ew.abs() + (m * self.energy).abs()))
            .sum()
    }
}

/// Fixes the sign of a unit eigenvector.
///
/// High-activation-energy descriptors should project positively: the result
/// `±ξ` satisfies `Σ (ξᵀ(x − x̄)) ‖x‖² ≥ 0`. When that sum vanishes (up to
/// rounding), the largest-magnitude coordinate is made positive, the lowest
/// index winning exact ties.
pub fn orient_eigenvector(xi: &[f64], ctx: &OrientationContext) -> Vec<f64> {
    let score = ctx.score(xi);
    let flip = if score.abs() > ORIENTATION_TOLERANCE * ctx.score_scale(xi) {
        score < 0.0
    } else {
        let mut best = 0;
        for (i, v) in xi.iter().enumerate() {
            if v.abs() > xi[best].abs() {
                best = i;
            }
        }
        xi.get(best).is_some_and(|&v| v < 0.0)
    };
    if flip {
        xi.iter().map(|v| -v).collect()
    } else {
        xi.to_vec()
    }
}

/// Finalized statistics of one descriptor set.
#[derive(Debug, Clone, PartialEq)]
pub struct SetStatistics {
    d: usize,
    total_count: u64,
    mean: Vec<f64>,
    covariance: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
}

impl SetStatistics {
    pub fn d(&self) -> usize {
        self.d
    }

    /// `K`, the number of descriptors in the set.
    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Row-major `d x d` population covariance.
    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    /// All `d` eigenvalues, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Number of retained (oriented) eigenvectors.
    pub fn retained(&self) -> usize {
        self.eigenvectors.len()
    }

    /// Eigenvector of the `k`-th component, 1-based.
    pub fn component(&self, k: usize) -> Option<&[f64]> {
        k.checked_sub(1).and_then(|i| self.eigenvectors.get(i)).map(Vec::as_slice)
    }
}
