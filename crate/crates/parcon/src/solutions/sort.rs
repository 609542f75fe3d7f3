//! Sorting under a range-bounded partitioner: each part is sorted
//! independently and the runs are concatenated in part order. Points are
//! ordered lexicographically on coordinates, which reduces to plain numeric
//! order for 1-D data.

use crate::error::{Error, Result};
use crate::measure::{DataPoint, EmpiricalMeasure, SortedResult};

pub fn rho_sort(part: &EmpiricalMeasure) -> SortedResult {
    let mut run: Vec<DataPoint> = part.to_points();
    run.sort_unstable_by(|a, b| a.lex_cmp(b));
    SortedResult { run }
}

/// Concatenates per-part runs in part-index order. Valid only when the
/// partitioner is range-bounded on the sort key, so that every value in
/// part `j` precedes every value in part `j+1`.
pub fn combine_sort(results: &[SortedResult], range_bounded: bool) -> Result<SortedResult> {
    if results.is_empty() {
        return Err(Error::EmptyInput("no sorted runs"));
    }
    if !range_bounded {
        return Err(Error::NonViableCombiner(
            "sorted runs can only be concatenated under a range-bounded partitioner".into(),
        ));
    }
    let mut run = Vec::with_capacity(results.iter().map(|r| r.run.len()).sum());
    for r in results {
        run.extend_from_slice(&r.run);
    }
    Ok(SortedResult { run })
}
