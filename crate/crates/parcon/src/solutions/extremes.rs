//! Extreme statistics: lexicographic minimum and maximum point, combined by
//! min-of-mins / max-of-maxs. Exact under any partitioning.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::measure::{DataPoint, EmpiricalMeasure, ExtremesResult};

#[derive(Debug, Clone)]
pub struct ExtremesAccumulator {
    min: Option<DataPoint>,
    max: Option<DataPoint>,
}

impl ExtremesAccumulator {
    pub fn new() -> Self {
        Self {
            min: None,
            max: None,
        }
    }

    pub fn push(&mut self, point: DataPoint) {
        match &self.min {
            Some(cur) if point.lex_cmp(cur) != Ordering::Less => {}
            _ => self.min = Some(point.clone()),
        }
        match &self.max {
            Some(cur) if point.lex_cmp(cur) != Ordering::Greater => {}
            _ => self.max = Some(point),
        }
    }

    pub fn finish(self) -> Result<ExtremesResult> {
        match (self.min, self.max) {
            (Some(min), Some(max)) => Ok(ExtremesResult { min, max }),
            _ => Err(Error::EmptyInput("extremes of zero points")),
        }
    }
}

impl Default for ExtremesAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

pub fn rho_extremes(part: &EmpiricalMeasure) -> ExtremesResult {
    let mut acc = ExtremesAccumulator::new();
    for i in 0..part.len() {
        acc.push(part.data_point(i));
    }
    acc.finish().expect("measure is non-empty")
}

pub fn combine_extremes(results: &[ExtremesResult]) -> Result<ExtremesResult> {
    let mut iter = results.iter();
    let first = iter
        .next()
        .ok_or(Error::EmptyInput("no extremes results"))?;
    let mut min = first.min.clone();
    let mut max = first.max.clone();
    for r in iter {
        if r.min.lex_cmp(&min) == Ordering::Less {
            min = r.min.clone();
        }
        if r.max.lex_cmp(&max) == Ordering::Greater {
            max = r.max.clone();
        }
    }
    Ok(ExtremesResult { min, max })
}
