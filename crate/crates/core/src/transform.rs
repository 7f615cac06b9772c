//! Projection of per-image descriptors onto principal directions.

use thiserror::Error;

use crate::io::DescriptorTensor;
use crate::stats::SetStatistics;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("descriptor dimension {found} does not match statistics dimension {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("component {k} outside 1..={retained}")]
    ComponentOutOfRange { k: usize, retained: usize },
}

/// Signed `h x w` projection map of one image onto the `component`-th
/// principal direction of its set.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMap {
    pub image_id: String,
    pub component: usize,
    pub h: usize,
    pub w: usize,
    /// Row-major, length `h * w`.
    pub values: Vec<f64>,
}

impl IndicatorMap {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.w + j]
    }

    pub fn positive_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    /// Fraction of strictly positive cells.
    pub fn positive_fraction(&self) -> f64 {
        self.positive_count() as f64 / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// `values[i][j] = ξ_kᵀ (x_(i,j) − x̄)` for every cell of `t`.
pub fn project(
    image_id: &str,
    t: &DescriptorTensor,
    stats: &SetStatistics,
    k: usize,
) -> Result<IndicatorMap, TransformError> {
    if t.d() != stats.d() {
        return Err(TransformError::DimMismatch { expected: stats.d(), found: t.d() });
    }
    let xi = stats
        .component(k)
        .ok_or(TransformError::ComponentOutOfRange { k, retained: stats.retained() })?;
    let mean = stats.mean();
    let values = t
        .cells()
        .map(|x| {
            x.iter()
                .zip(mean)
                .zip(xi)
                .map(|((&v, &m), &e)| e * (f64::from(v) - m))
                .sum()
        })
        .collect();
    Ok(IndicatorMap { image_id: image_id.to_owned(), component: k, h: t.h(), w: t.w(), values })
}

/// Scales a map into `[-1, 1]` by its largest magnitude. An all-zero map is
/// returned unchanged.
pub fn normalize_signed(m: &IndicatorMap) -> IndicatorMap {
    let scale = m.max_abs();
    let mut out = m.clone();
    if scale > 0.0 {
        for v in &mut out.values {
            *v /= scale;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::CovarianceAccumulator;

    fn two_point_stats() -> SetStatistics {
        let t = DescriptorTensor::new(1, 2, 2, vec![1.0, 0.0, -1.0, 0.0]).unwrap();
        let mut acc = CovarianceAccumulator::new(2);
        acc.accumulate(&t).unwrap();
        acc.finalize(2).unwrap()
    }

    #[test]
    fn hand_eigen_case() {
        let stats = two_point_stats();
        let t = DescriptorTensor::new(1, 2, 2, vec![1.0, 0.0, -1.0, 0.0]).unwrap();
        let m = project("a", &t, &stats, 1).unwrap();
        let sign = stats.component(1).unwrap()[0];
        assert_eq!(m.values, vec![sign, -sign]);
        assert_eq!((m.h, m.w), (1, 2));
    }

    #[test]
    fn centered_input_projects_to_zero() {
        let stats = two_point_stats();
        let t = DescriptorTensor::zeros(3, 2, 2).unwrap();
        let m = project("a", &t, &stats, 1).unwrap();
        assert!(m.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn errors() {
        let stats = two_point_stats();
        let t = DescriptorTensor::zeros(1, 1, 3).unwrap();
        assert_eq!(project("a", &t, &stats, 1), Err(TransformError::DimMismatch { expected: 2, found: 3 }));
        let t = DescriptorTensor::zeros(1, 1, 2).unwrap();
        assert_eq!(project("a", &t, &stats, 3), Err(TransformError::ComponentOutOfRange { k: 3, retained: 2 }));
        assert!(project("a", &t, &stats, 0).is_err());
    }

    #[test]
    fn normalize_divides_by_max_magnitude() {
        let m = IndicatorMap { image_id: "a".into(), component: 1, h: 1, w: 2, values: vec![2.0, -4.0] };
        assert_eq!(normalize_signed(&m).values, vec![0.5, -1.0]);
        let z = IndicatorMap { values: vec![0.0, 0.0], ..m };
        assert_eq!(normalize_signed(&z), z);
    }
}
