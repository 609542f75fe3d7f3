//! Sample mean: per-part coordinate means with counts, combined by
//! count-weighted averaging. Exact up to floating accumulation order.

use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, MeanResult};
use crate::numeric::Neumaier;

/// Streaming accumulator shared by the per-part map and the full-data
/// oracle, so both routes sum with the same compensation.
#[derive(Debug, Clone)]
pub struct MeanAccumulator {
    sums: Vec<Neumaier>,
    count: u64,
}

impl MeanAccumulator {
    pub fn new(d: usize) -> Self {
        Self {
            sums: vec![Neumaier::new(); d],
            count: 0,
        }
    }

    #[inline]
    pub fn push(&mut self, point: &[f64]) {
        for (acc, v) in self.sums.iter_mut().zip(point) {
            acc.add(*v);
        }
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(&self) -> Result<MeanResult> {
        if self.count == 0 {
            return Err(Error::EmptyInput("mean of zero points"));
        }
        let mean = self
            .sums
            .iter()
            .map(|s| s.total() / self.count as f64)
            .collect();
        MeanResult::new(mean, self.count)
    }
}

pub fn rho_mean(part: &EmpiricalMeasure) -> MeanResult {
    let mut acc = MeanAccumulator::new(part.dim());
    for p in part.iter_points() {
        acc.push(p);
    }
    acc.finish().expect("measure is non-empty")
}

/// Count-weighted mean of means; equals the pooled mean when the parts
/// partition the data. A single input is returned unchanged.
pub fn combine_mean(results: &[MeanResult]) -> Result<MeanResult> {
    let first = results
        .first()
        .ok_or(Error::EmptyInput("no mean results"))?;
    if results.len() == 1 {
        return Ok(first.clone());
    }
    let d = first.mean.len();
    let mut sums = vec![Neumaier::new(); d];
    let mut total = 0u64;
    for r in results {
        if r.mean.len() != d {
            return Err(Error::DimensionMismatch {
                context: "mean results".into(),
                expected: d,
                got: r.mean.len(),
            });
        }
        for (acc, v) in sums.iter_mut().zip(&r.mean) {
            acc.add(r.count as f64 * *v);
        }
        total += r.count;
    }
    let mean = sums.iter().map(|s| s.total() / total as f64).collect();
    MeanResult::new(mean, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::DataPoint;

    fn measure(rows: &[&[f64]]) -> EmpiricalMeasure {
        let pts: Vec<DataPoint> = rows
            .iter()
            .map(|r| DataPoint::new(r.to_vec()).unwrap())
            .collect();
        EmpiricalMeasure::from_points(&pts).unwrap()
    }

    #[test]
    fn rho_mean_arithmetic() {
        let r = rho_mean(&measure(&[&[1.0], &[2.0], &[3.0]]));
        assert_eq!(r.mean, vec![2.0]);
        assert_eq!(r.count, 3);
    }

    #[test]
    fn rho_mean_single_point() {
        let r = rho_mean(&measure(&[&[7.5]]));
        assert_eq!(r.mean, vec![7.5]);
        assert_eq!(r.count, 1);
    }

    #[test]
    fn rho_mean_coordinate_wise() {
        let r = rho_mean(&measure(&[&[1.0, 10.0], &[3.0, 20.0]]));
        assert_eq!(r.mean, vec![2.0, 15.0]);
        assert_eq!(r.count, 2);
    }

    #[test]
    fn combine_equal_weights() {
        let r = combine_mean(&[
            MeanResult::new(vec![2.0], 2).unwrap(),
            MeanResult::new(vec![4.0], 2).unwrap(),
        ])
        .unwrap();
        assert_eq!(r.mean, vec![3.0]);
        assert_eq!(r.count, 4);
    }

    #[test]
    fn combine_weighted_matches_pooled_oracle() {
        // Underlying values: [1] and [4, 4, 4]; pooled mean is 13/4.
        let pooled = rho_mean(&measure(&[&[1.0], &[4.0], &[4.0], &[4.0]]));
        assert_eq!(pooled.mean, vec![3.25]);
        let r = combine_mean(&[
            MeanResult::new(vec![1.0], 1).unwrap(),
            MeanResult::new(vec![4.0], 3).unwrap(),
        ])
        .unwrap();
        assert_eq!(r.mean, vec![3.25]);
        assert_eq!(r.count, 4);
    }

    #[test]
    fn combine_single_part_identity() {
        let input = MeanResult::new(vec![5.0], 3).unwrap();
        let r = combine_mean(std::slice::from_ref(&input)).unwrap();
        assert_eq!(r, input);
    }

    #[test]
    fn combine_dimension_mismatch() {
        let err = combine_mean(&[
            MeanResult::new(vec![1.0], 1).unwrap(),
            MeanResult::new(vec![1.0, 2.0], 1).unwrap(),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }
}
