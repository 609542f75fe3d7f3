//! Datasets as finite empirical measures, plus the result and evaluation
//! vector types shared by every solution.
//!
//! An [`EmpiricalMeasure`] is an indexed sequence of `d`-dimensional points,
//! each carrying implicit mass `1/n`. Indices `0..n-1` are stable for the
//! lifetime of a run; a sub-measure produced by restriction remembers its
//! parent indices. All types here are immutable after construction and safe
//! to share across workers.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::lex_cmp;

/// A single observation: `d` finite real coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DataPoint {
    coords: Vec<f64>,
}

impl DataPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::EmptyInput("data point has no coordinates"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonfiniteValue("data point coordinate".into()));
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn lex_cmp(&self, other: &DataPoint) -> Ordering {
        lex_cmp(&self.coords, &other.coords)
    }
}

/// A dataset identified with the probability measure placing mass `1/n` on
/// each of its points. Coordinates are stored flat, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    data: Vec<f64>,
    n: usize,
    d: usize,
    /// Maps local index -> index in the parent measure; `None` means this is
    /// a root measure and the mapping is the identity.
    parent: Option<Vec<usize>>,
}

impl EmpiricalMeasure {
    /// Builds a measure from points, assigning indices in input order.
    pub fn from_points(points: &[DataPoint]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("measure needs at least one point"));
        }
        let d = points[0].dim();
        let mut data = Vec::with_capacity(points.len() * d);
        for (i, p) in points.iter().enumerate() {
            if p.dim() != d {
                return Err(Error::DimensionMismatch {
                    context: format!("point {i}"),
                    expected: d,
                    got: p.dim(),
                });
            }
            data.extend_from_slice(p.coords());
        }
        Ok(Self {
            n: points.len(),
            d,
            data,
            parent: None,
        })
    }

    /// Builds a measure from flat row-major coordinates.
    pub fn from_flat(data: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::EmptyInput("dimension must be at least 1"));
        }
        if data.is_empty() {
            return Err(Error::EmptyInput("measure needs at least one point"));
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                context: "flat coordinate buffer".into(),
                expected: d,
                got: data.len() % d,
            });
        }
        if data.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonfiniteValue("measure coordinate".into()));
        }
        Ok(Self {
            n: data.len() / d,
            d,
            data,
            parent: None,
        })
    }

    pub(crate) fn with_parent(data: Vec<f64>, d: usize, parent: Vec<usize>) -> Result<Self> {
        let mut m = Self::from_flat(data, d)?;
        debug_assert_eq!(m.n, parent.len());
        m.parent = Some(parent);
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false // constructors reject empty measures
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Coordinates of the point at local index `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn data_point(&self, i: usize) -> DataPoint {
        DataPoint {
            coords: self.point(i).to_vec(),
        }
    }

    /// Index of local point `i` in the parent (root) measure.
    pub fn parent_index(&self, i: usize) -> usize {
        match &self.parent {
            Some(map) => map[i],
            None => i,
        }
    }

    pub fn iter_points(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n).map(move |i| self.point(i))
    }

    pub fn to_points(&self) -> Vec<DataPoint> {
        (0..self.n).map(|i| self.data_point(i)).collect()
    }
}

/// Constructs an [`EmpiricalMeasure`] from a point sequence.
pub fn measure_from_points(points: &[DataPoint]) -> Result<EmpiricalMeasure> {
    EmpiricalMeasure::from_points(points)
}

/// One neighbor in a k-NN result. `index` is the neighbor's index in the
/// root measure and is the tie-breaker when distances are equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub point: DataPoint,
    pub distance: f64,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanResult {
    pub mean: Vec<f64>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortedResult {
    pub run: Vec<DataPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremesResult {
    pub min: DataPoint,
    pub max: DataPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramResult {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueResult {
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnResult {
    pub neighbors: Vec<Neighbor>,
}

/// Split of a measure into a data section and an outlier section, by root
/// index. `outlier_values` carries the sort-key value of each outlier
/// (parallel to `outlier_idx`) so the evaluation vector is a function of the
/// result alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierResult {
    pub data_idx: Vec<usize>,
    pub outlier_idx: Vec<usize>,
    pub outlier_values: Vec<f64>,
}

/// Tagged per-problem result (an element of the result space).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResultValue {
    Mean(MeanResult),
    Sorted(SortedResult),
    Extremes(ExtremesResult),
    Histogram(HistogramResult),
    PValue(PValueResult),
    Mle(MleResult),
    Knn(KnnResult),
    Outlier(OutlierResult),
}

impl MeanResult {
    pub fn new(mean: Vec<f64>, count: u64) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::EmptyInput("mean vector"));
        }
        if count == 0 {
            return Err(Error::EmptyInput("mean count must be positive"));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonfiniteValue("mean component".into()));
        }
        Ok(Self { mean, count })
    }
}

impl SortedResult {
    pub fn new(run: Vec<DataPoint>) -> Result<Self> {
        let r = Self { run };
        r.check()?;
        Ok(r)
    }

    fn check(&self) -> Result<()> {
        for w in self.run.windows(2) {
            if w[0].lex_cmp(&w[1]) == Ordering::Greater {
                return Err(Error::InvalidSpec(
                    "sorted run is not non-decreasing".into(),
                ));
            }
        }
        Ok(())
    }
}

impl HistogramResult {
    pub fn new(edges: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        let r = Self { edges, counts };
        r.check()?;
        Ok(r)
    }

    fn check(&self) -> Result<()> {
        if self.edges.len() < 2 {
            return Err(Error::InvalidSpec(
                "histogram needs at least 2 edges".into(),
            ));
        }
        if self.counts.len() + 1 != self.edges.len() {
            return Err(Error::InvalidSpec(
                "histogram counts must have one entry per bin".into(),
            ));
        }
        if self.edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec("histogram edges must ascend".into()));
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

impl PValueResult {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidSpec(format!("p-value {p} outside [0, 1]")));
        }
        Ok(Self { p })
    }
}

impl KnnResult {
    pub fn new(neighbors: Vec<Neighbor>) -> Result<Self> {
        let r = Self { neighbors };
        r.check()?;
        Ok(r)
    }

    fn check(&self) -> Result<()> {
        for w in self.neighbors.windows(2) {
            if w[0].distance > w[1].distance {
                return Err(Error::InvalidSpec(
                    "k-NN distances must be non-decreasing".into(),
                ));
            }
        }
        if self.neighbors.iter().any(|nb| nb.distance < 0.0) {
            return Err(Error::InvalidSpec("k-NN distance negative".into()));
        }
        Ok(())
    }
}

impl OutlierResult {
    pub fn new(mut data_idx: Vec<usize>, mut outlier_pairs: Vec<(usize, f64)>) -> Result<Self> {
        data_idx.sort_unstable();
        outlier_pairs.sort_unstable_by_key(|(i, _)| *i);
        let r = Self {
            data_idx,
            outlier_idx: outlier_pairs.iter().map(|(i, _)| *i).collect(),
            outlier_values: outlier_pairs.iter().map(|(_, v)| *v).collect(),
        };
        r.check()?;
        Ok(r)
    }

    fn check(&self) -> Result<()> {
        if self.outlier_idx.len() != self.outlier_values.len() {
            return Err(Error::InvalidSpec(
                "outlier values must parallel outlier indices".into(),
            ));
        }
        let mut seen = self.data_idx.clone();
        seen.extend_from_slice(&self.outlier_idx);
        let before = seen.len();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != before {
            return Err(Error::InvalidSpec(
                "outlier and data index sets must be disjoint".into(),
            ));
        }
        Ok(())
    }
}

impl ResultValue {
    /// Asserts the variant's declared invariant.
    pub fn validate(&self) -> Result<()> {
        match self {
            ResultValue::Mean(r) => {
                MeanResult::new(r.mean.clone(), r.count)?;
            }
            ResultValue::Sorted(r) => r.check()?,
            ResultValue::Extremes(r) => {
                if r.min.lex_cmp(&r.max) == Ordering::Greater {
                    return Err(Error::InvalidSpec("extremes min exceeds max".into()));
                }
            }
            ResultValue::Histogram(r) => r.check()?,
            ResultValue::PValue(r) => {
                PValueResult::new(r.p)?;
            }
            ResultValue::Mle(r) => {
                if r.theta.iter().any(|v| !v.is_finite()) || !r.loglik.is_finite() {
                    return Err(Error::NonfiniteValue("MLE result".into()));
                }
            }
            ResultValue::Knn(r) => r.check()?,
            ResultValue::Outlier(r) => r.check()?,
        }
        Ok(())
    }
}

/// Fixed-length real vector produced by an evaluation function; the space in
/// which viability bias and convergence distances are measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvalVector {
    values: Vec<f64>,
}

impl EvalVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonfiniteValue("evaluation vector entry".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Euclidean distance between two evaluation vectors of equal length.
pub fn eval_distance(a: &EvalVector, b: &EvalVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "evaluation vectors".into(),
            expected: a.len(),
            got: b.len(),
        });
    }
    let sq: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sq.sqrt())
}
