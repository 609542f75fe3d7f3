//! Exact k-nearest-neighbor queries per part and the top-k merge across
//! parts. Distances are Euclidean on the feature coordinates; when the
//! query has one coordinate fewer than the data, the last data coordinate
//! is treated as a class label and excluded from the distance.
//!
//! Ordering is total: ascending distance, then ascending root index. A
//! point appearing in several overlapping parts (subsample mode) is counted
//! once, by root index.

use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, KnnResult, Neighbor};

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    sq.sqrt()
}

fn feature_len(part_dim: usize, query_len: usize) -> Result<usize> {
    if query_len == part_dim || query_len + 1 == part_dim {
        Ok(query_len)
    } else {
        Err(Error::DimensionMismatch {
            context: "k-NN query".into(),
            expected: part_dim,
            got: query_len,
        })
    }
}

/// Exact k nearest points of `part` to `query`. Parts smaller than `k`
/// return all their points; the caller surfaces that as a warning.
pub fn rho_knn(part: &EmpiricalMeasure, query: &[f64], k: usize) -> Result<KnnResult> {
    if k == 0 {
        return Err(Error::InvalidK(k));
    }
    let f = feature_len(part.dim(), query.len())?;
    let mut candidates: Vec<Neighbor> = (0..part.len())
        .map(|i| Neighbor {
            point: part.data_point(i),
            distance: euclidean(&part.point(i)[..f], query),
            index: part.parent_index(i),
        })
        .collect();
    candidates.sort_unstable_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap()
            .then(a.index.cmp(&b.index))
    });
    candidates.dedup_by_key(|nb| nb.index);
    candidates.truncate(k);
    KnnResult::new(candidates)
}

/// Picks the global k nearest among the pooled per-part candidates.
pub fn combine_knn(lists: &[KnnResult], k: usize) -> Result<KnnResult> {
    if k == 0 {
        return Err(Error::InvalidK(k));
    }
    if lists.is_empty() {
        return Err(Error::EmptyInput("no k-NN candidate lists"));
    }
    if lists.len() == 1 {
        return Ok(lists[0].clone());
    }
    let mut pool: Vec<Neighbor> = lists
        .iter()
        .flat_map(|l| l.neighbors.iter().cloned())
        .collect();
    pool.sort_unstable_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap()
            .then(a.index.cmp(&b.index))
    });
    pool.dedup_by_key(|nb| nb.index);
    pool.truncate(k);
    KnnResult::new(pool)
}

/// Majority vote among the neighbors' labels. Ties go to the label with the
/// smaller summed distance, then to the smaller label value.
pub fn classify_knn(result: &KnnResult, labels: &[f64]) -> Result<f64> {
    if labels.len() != result.neighbors.len() {
        return Err(Error::LabelMissing(format!(
            "{} labels for {} neighbors",
            labels.len(),
            result.neighbors.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("no neighbors to vote"));
    }
    // (label, count, summed distance), merged by label value.
    let mut tally: Vec<(f64, usize, f64)> = Vec::new();
    for (nb, &label) in result.neighbors.iter().zip(labels) {
        match tally.iter_mut().find(|(l, _, _)| *l == label) {
            Some(entry) => {
                entry.1 += 1;
                entry.2 += nb.distance;
            }
            None => tally.push((label, 1, nb.distance)),
        }
    }
    tally.sort_unstable_by(|a, b| {
        b.1.cmp(&a.1)
            .then(a.2.partial_cmp(&b.2).unwrap())
            .then(a.0.partial_cmp(&b.0).unwrap())
    });
    Ok(tally[0].0)
}

/// Extracts the label (last coordinate) of each neighbor point.
pub fn neighbor_labels(result: &KnnResult, feature_len: usize) -> Result<Vec<f64>> {
    result
        .neighbors
        .iter()
        .map(|nb| {
            let coords = nb.point.coords();
            if coords.len() != feature_len + 1 {
                return Err(Error::LabelMissing(
                    "neighbor points carry no label coordinate".into(),
                ));
            }
            Ok(coords[feature_len])
        })
        .collect()
}
