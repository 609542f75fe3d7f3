//! Histograms over globally fixed bin edges, combined by bin-wise count
//! addition. Bins are half-open `[e_j, e_{j+1})` except the last, which is
//! closed so the data maximum is counted; every point must fall inside the
//! edge range for the counts to sum to the part size.

use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, HistogramResult};

#[derive(Debug, Clone)]
pub struct HistogramAccumulator {
    edges: Vec<f64>,
    counts: Vec<u64>,
    key_dim: usize,
}

impl HistogramAccumulator {
    pub fn new(edges: Vec<f64>, key_dim: usize) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec(
                "histogram edges must be at least 2 strictly increasing values".into(),
            ));
        }
        let bins = edges.len() - 1;
        Ok(Self {
            edges,
            counts: vec![0; bins],
            key_dim,
        })
    }

    pub fn push(&mut self, point: &[f64]) -> Result<()> {
        let v = point[self.key_dim];
        let lo = self.edges[0];
        let hi = self.edges[self.edges.len() - 1];
        if v < lo || v > hi {
            return Err(Error::BoundsDoNotCover { value: v, lo, hi });
        }
        let bin = if v == hi {
            self.counts.len() - 1
        } else {
            self.edges.partition_point(|e| *e <= v) - 1
        };
        self.counts[bin] += 1;
        Ok(())
    }

    pub fn finish(self) -> HistogramResult {
        HistogramResult {
            edges: self.edges,
            counts: self.counts,
        }
    }
}

pub fn rho_histogram(part: &EmpiricalMeasure, edges: &[f64]) -> Result<HistogramResult> {
    let mut acc = HistogramAccumulator::new(edges.to_vec(), 0)?;
    for p in part.iter_points() {
        acc.push(p)?;
    }
    Ok(acc.finish())
}

pub fn combine_histograms(results: &[HistogramResult]) -> Result<HistogramResult> {
    let mut iter = results.iter();
    let first = iter
        .next()
        .ok_or(Error::EmptyInput("no histogram results"))?;
    let mut counts = first.counts.clone();
    for r in iter {
        if r.edges != first.edges {
            return Err(Error::BinMismatch);
        }
        for (acc, c) in counts.iter_mut().zip(&r.counts) {
            *acc += c;
        }
    }
    HistogramResult::new(first.edges.clone(), counts)
}
