//! Robust outlier detection on 1-D data: a point is flagged when its
//! MAD-scaled distance from the part median exceeds a threshold `c`.
//!
//! The first-stage combiner cross-checks flags against the other parts'
//! data sections (a flag is demoted when it looks ordinary relative to that
//! pool) and then re-runs the detector on the surviving flags as a group: a
//! large-enough subset of mutually ordinary flagged points is its own data
//! section, not a set of outliers. The second stage keeps the points
//! flagged in at least `ceil(tau * K)` repetitions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, OutlierResult};
use crate::numeric::{mad, median};

/// Consistency factor making the MAD comparable to a Gaussian sigma.
pub const MAD_SCALE: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutlierParams {
    /// Robust z-score threshold.
    pub c: f64,
    /// Fraction of repetitions that must flag a point.
    pub tau: f64,
    /// Absolute floor of the demotable-section size.
    pub min_section: usize,
    /// Fractional (of n) floor of the demotable-section size.
    pub section_frac: f64,
}

impl Default for OutlierParams {
    fn default() -> Self {
        Self {
            c: 3.5,
            tau: 0.5,
            min_section: 3,
            section_frac: 0.02,
        }
    }
}

impl OutlierParams {
    pub fn validate(&self) -> Result<()> {
        if self.c <= 0.0 || !self.c.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "outlier threshold c={} must be positive",
                self.c
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "tau={} must lie in (0, 1]",
                self.tau
            )));
        }
        Ok(())
    }

    fn section_floor(&self, n_total: usize) -> usize {
        self.min_section
            .max((self.section_frac * n_total as f64).ceil() as usize)
    }
}

/// Robust z-score of `v` against a reference location/scale. A zero MAD
/// collapses the scale: values at the median score 0, everything else is
/// infinitely far.
fn robust_score(v: f64, med: f64, mad_value: f64) -> f64 {
    if mad_value > 0.0 {
        (v - med).abs() / (mad_value * MAD_SCALE)
    } else if v == med {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Flags part points whose MAD score against the part itself exceeds `c`.
/// A part with zero MAD (at least half its values identical) flags nothing.
pub fn rho_outlier(part: &EmpiricalMeasure, c: f64) -> Result<OutlierResult> {
    if part.dim() != 1 {
        return Err(Error::DimensionMismatch {
            context: "outlier detector data".into(),
            expected: 1,
            got: part.dim(),
        });
    }
    if c <= 0.0 || !c.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "outlier threshold c={c} must be positive"
        )));
    }
    let values: Vec<f64> = part.iter_points().map(|p| p[0]).collect();
    let med = median(&values);
    let mad_value = mad(&values, med);
    let mut data = Vec::new();
    let mut outliers = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let idx = part.parent_index(i);
        if mad_value > 0.0 && robust_score(v, med, mad_value) > c {
            outliers.push((idx, v));
        } else {
            data.push(idx);
        }
    }
    OutlierResult::new(data, outliers)
}

/// First-stage combiner over the `L` per-part splits of one repetition.
/// `parts` are the corresponding sub-measures (for the cross-part data
/// pools); `n_total` is the size of the root measure.
pub fn combine_outlier_parts(
    splits: &[OutlierResult],
    parts: &[EmpiricalMeasure],
    params: &OutlierParams,
    n_total: usize,
) -> Result<OutlierResult> {
    if splits.is_empty() || splits.len() != parts.len() {
        return Err(Error::EmptyInput("outlier splits and parts must pair up"));
    }
    // Combining a single part has nothing to cross-check against; the
    // repetition result is the part result.
    if splits.len() == 1 {
        return Ok(splits[0].clone());
    }
    params.validate()?;

    // Data-section values per part, in part order.
    let data_values: Vec<Vec<f64>> = splits
        .iter()
        .zip(parts)
        .map(|(split, part)| {
            let outlier_set: std::collections::HashSet<usize> =
                split.outlier_idx.iter().copied().collect();
            (0..part.len())
                .filter(|&i| !outlier_set.contains(&part.parent_index(i)))
                .map(|i| part.point(i)[0])
                .collect()
        })
        .collect();

    // Cross-check: a flag that scores ordinary against the pooled data
    // sections of the other parts belongs to the data.
    let mut survivors: Vec<(usize, f64)> = Vec::new();
    let mut demoted: Vec<usize> = Vec::new();
    for (l, split) in splits.iter().enumerate() {
        let pool: Vec<f64> = data_values
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != l)
            .flat_map(|(_, vs)| vs.iter().copied())
            .collect();
        for (&idx, &v) in split.outlier_idx.iter().zip(&split.outlier_values) {
            let keep = if pool.is_empty() {
                true
            } else {
                let med = median(&pool);
                robust_score(v, med, mad(&pool, med)) > params.c
            };
            if keep {
                survivors.push((idx, v));
            } else {
                demoted.push(idx);
            }
        }
    }

    // Re-run the detector on the pooled survivors: a large-enough group of
    // mutually ordinary flagged points forms a data section of its own.
    if !survivors.is_empty() {
        let values: Vec<f64> = survivors.iter().map(|(_, v)| *v).collect();
        let med = median(&values);
        let mad_value = mad(&values, med);
        let ordinary: Vec<usize> = survivors
            .iter()
            .enumerate()
            .filter(|(_, (_, v))| robust_score(*v, med, mad_value) <= params.c)
            .map(|(pos, _)| pos)
            .collect();
        if ordinary.len() >= params.section_floor(n_total) {
            let ordinary_set: std::collections::HashSet<usize> = ordinary.into_iter().collect();
            let mut kept = Vec::new();
            for (pos, pair) in survivors.into_iter().enumerate() {
                if ordinary_set.contains(&pos) {
                    demoted.push(pair.0);
                } else {
                    kept.push(pair);
                }
            }
            survivors = kept;
        }
    }
    let _ = demoted;

    let outlier_set: std::collections::HashSet<usize> = survivors.iter().map(|(i, _)| *i).collect();
    let data: Vec<usize> = splits
        .iter()
        .flat_map(|s| {
            s.data_idx
                .iter()
                .copied()
                .chain(s.outlier_idx.iter().copied())
        })
        .filter(|i| !outlier_set.contains(i))
        .collect();
    OutlierResult::new(data, survivors)
}

/// Second-stage combiner: stable outliers are the points flagged in at
/// least `ceil(tau * K)` of the `K` repetition results. Raising `tau` never
/// adds outliers.
pub fn combine_outlier_reps(
    reps: &[OutlierResult],
    tau: f64,
    n_total: usize,
) -> Result<OutlierResult> {
    if reps.is_empty() {
        return Err(Error::EmptyInput("no outlier repetition results"));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidSpec(format!("tau={tau} must lie in (0, 1]")));
    }
    let needed = ((tau * reps.len() as f64).ceil() as usize).max(1);
    let mut flag_counts: std::collections::HashMap<usize, (usize, f64)> =
        std::collections::HashMap::new();
    for rep in reps {
        for (&idx, &v) in rep.outlier_idx.iter().zip(&rep.outlier_values) {
            let entry = flag_counts.entry(idx).or_insert((0, v));
            entry.0 += 1;
        }
    }
    let mut stable: Vec<(usize, f64)> = flag_counts
        .into_iter()
        .filter(|(_, (count, _))| *count >= needed)
        .map(|(idx, (_, v))| (idx, v))
        .collect();
    stable.sort_unstable_by_key(|(i, _)| *i);
    let stable_set: std::collections::HashSet<usize> = stable.iter().map(|(i, _)| *i).collect();
    let data: Vec<usize> = (0..n_total).filter(|i| !stable_set.contains(i)).collect();
    OutlierResult::new(data, stable)
}
