//! Problem approaches and their two-stage combiners.
//!
//! A [`SolutionSpec`] bundles a problem (`rho` plus its parameters), a
//! partitioner, and a repetition count. This module dispatches the per-part
//! map, the first-stage combiner (within a repetition), the second-stage
//! combiner (across repetitions), and the per-problem evaluation function
//! that maps results into a fixed-length real vector.
//!
//! Evaluation vectors per problem:
//! mean `(mean..., count)`; sort `(count, first key, last key, key mean)`;
//! extremes `(min..., max...)`; histogram `(counts...)`; test `(p)`;
//! mle `(theta..., loglik)`; knn `(distances...)` padded to `k` by
//! repeating the last entry when a part ran short; outlier
//! `(count, mean of outlier values or 0)`.

pub mod extremes;
pub mod histogram;
pub mod knn;
pub mod mean;
pub mod mle;
pub mod outlier;
pub mod sort;
pub mod ztest;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, EvalVector, ResultValue};
use crate::numeric::Neumaier;
use crate::partition::{restrict, sample_partition, PartitionScheme, PartitionerSpec};

pub use mle::MleModel;
pub use outlier::OutlierParams;
pub use ztest::PValueAdjust;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestParams {
    pub mu0: f64,
    pub sigma: f64,
    #[serde(default)]
    pub adjust: PValueAdjust,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleParams {
    pub model: MleModel,
    /// Starting point for iterative fits; zeros when omitted.
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_max_iter() -> usize {
    100
}

fn default_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub query: Vec<f64>,
    pub k: usize,
}

/// The problem approach plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum ProblemSpec {
    Mean,
    Sort,
    Extremes,
    Histogram { edges: Vec<f64> },
    Test(TestParams),
    Mle(MleParams),
    Knn(KnnParams),
    Outlier(OutlierParams),
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Mean => "mean",
            ProblemSpec::Sort => "sort",
            ProblemSpec::Extremes => "extremes",
            ProblemSpec::Histogram { .. } => "histogram",
            ProblemSpec::Test(_) => "test",
            ProblemSpec::Mle(_) => "mle",
            ProblemSpec::Knn(_) => "knn",
            ProblemSpec::Outlier(_) => "outlier",
        }
    }
}

/// A full solution: `(rho, P_HL, C2_K o C1_L)` with seeds and counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSpec {
    pub problem: ProblemSpec,
    pub partitioner: PartitionerSpec,
    #[serde(rename = "K")]
    pub repetitions: usize,
}

impl SolutionSpec {
    /// Constraints checkable without seeing the data.
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidSpec(
                "repetition count K must be at least 1".into(),
            ));
        }
        self.partitioner.validate()?;
        match &self.problem {
            ProblemSpec::Mean | ProblemSpec::Extremes => Ok(()),
            ProblemSpec::Sort => match self.partitioner.scheme {
                PartitionScheme::RangeBounded { .. } => Ok(()),
                _ => Err(Error::NonViableCombiner(
                    "sort requires a range-bounded partitioner".into(),
                )),
            },
            ProblemSpec::Histogram { edges } => {
                if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidSpec("histogram edges must ascend".into()));
                }
                Ok(())
            }
            ProblemSpec::Test(p) => {
                if p.sigma <= 0.0 || !p.sigma.is_finite() {
                    return Err(Error::InvalidSpec("test sigma must be positive".into()));
                }
                if !p.mu0.is_finite() {
                    return Err(Error::NonfiniteValue("test mu0".into()));
                }
                Ok(())
            }
            ProblemSpec::Mle(p) => {
                if p.tol <= 0.0 || p.max_iter == 0 {
                    return Err(Error::InvalidSpec(
                        "MLE needs a positive tolerance and at least one iteration".into(),
                    ));
                }
                Ok(())
            }
            ProblemSpec::Knn(p) => {
                if p.k == 0 {
                    return Err(Error::InvalidK(0));
                }
                if p.query.is_empty() {
                    return Err(Error::EmptyInput("k-NN query point"));
                }
                if p.query.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonfiniteValue("k-NN query coordinate".into()));
                }
                Ok(())
            }
            ProblemSpec::Outlier(p) => p.validate(),
        }
    }

    /// Constraints that additionally need the data dimension.
    pub fn validate_for_dim(&self, d: usize) -> Result<()> {
        self.validate()?;
        match &self.problem {
            ProblemSpec::Test(_) | ProblemSpec::Outlier(_) => {
                if d != 1 {
                    return Err(Error::DimensionMismatch {
                        context: format!("{} data", self.problem.name()),
                        expected: 1,
                        got: d,
                    });
                }
            }
            ProblemSpec::Mle(p) => {
                if p.model == MleModel::GaussianMeanVar && d != 1 {
                    return Err(Error::DimensionMismatch {
                        context: "Gaussian MLE data".into(),
                        expected: 1,
                        got: d,
                    });
                }
                if let Some(init) = &p.init {
                    let expected = p.model.param_count(d);
                    if init.len() != expected {
                        return Err(Error::DimensionMismatch {
                            context: "MLE init vector".into(),
                            expected,
                            got: init.len(),
                        });
                    }
                }
            }
            ProblemSpec::Knn(p) if p.query.len() != d && p.query.len() + 1 != d => {
                return Err(Error::DimensionMismatch {
                    context: "k-NN query".into(),
                    expected: d,
                    got: p.query.len(),
                });
            }
            _ => {}
        }
        Ok(())
    }

    /// Declared evaluation-vector length for data of dimension `d`.
    pub fn eval_len(&self, d: usize) -> usize {
        match &self.problem {
            ProblemSpec::Mean => d + 1,
            ProblemSpec::Sort => 4,
            ProblemSpec::Extremes => 2 * d,
            ProblemSpec::Histogram { edges } => edges.len() - 1,
            ProblemSpec::Test(_) => 1,
            ProblemSpec::Mle(p) => p.model.param_count(d) + 1,
            ProblemSpec::Knn(p) => p.k,
            ProblemSpec::Outlier(_) => 2,
        }
    }

    /// Evaluation function: maps a result into R^N for this problem.
    pub fn eval_vector(&self, result: &ResultValue, d: usize) -> Result<EvalVector> {
        let values = match (&self.problem, result) {
            (ProblemSpec::Mean, ResultValue::Mean(r)) => {
                let mut v = r.mean.clone();
                v.push(r.count as f64);
                v
            }
            (ProblemSpec::Sort, ResultValue::Sorted(r)) => {
                let keys: Vec<f64> = r.run.iter().map(|p| p.coords()[0]).collect();
                let mut acc = Neumaier::new();
                for k in &keys {
                    acc.add(*k);
                }
                vec![
                    keys.len() as f64,
                    keys[0],
                    keys[keys.len() - 1],
                    acc.total() / keys.len() as f64,
                ]
            }
            (ProblemSpec::Extremes, ResultValue::Extremes(r)) => {
                let mut v = r.min.coords().to_vec();
                v.extend_from_slice(r.max.coords());
                v
            }
            (ProblemSpec::Histogram { .. }, ResultValue::Histogram(r)) => {
                r.counts.iter().map(|c| *c as f64).collect()
            }
            (ProblemSpec::Test(_), ResultValue::PValue(r)) => vec![r.p],
            (ProblemSpec::Mle(_), ResultValue::Mle(r)) => {
                let mut v = r.theta.clone();
                v.push(r.loglik);
                v
            }
            (ProblemSpec::Knn(p), ResultValue::Knn(r)) => {
                let mut v: Vec<f64> = r.neighbors.iter().map(|nb| nb.distance).collect();
                if v.is_empty() {
                    return Err(Error::EmptyInput("k-NN result has no neighbors"));
                }
                while v.len() < p.k {
                    v.push(*v.last().unwrap());
                }
                v.truncate(p.k);
                v
            }
            (ProblemSpec::Outlier(_), ResultValue::Outlier(r)) => {
                let count = r.outlier_idx.len() as f64;
                let mean = if r.outlier_values.is_empty() {
                    0.0
                } else {
                    let mut acc = Neumaier::new();
                    for v in &r.outlier_values {
                        acc.add(*v);
                    }
                    acc.total() / count
                };
                vec![count, mean]
            }
            _ => {
                return Err(Error::InvalidSpec(format!(
                    "result variant does not match problem {}",
                    self.problem.name()
                )))
            }
        };
        debug_assert_eq!(values.len(), self.eval_len(d));
        EvalVector::new(values)
    }
}

/// Applies the problem approach to one part.
pub fn apply_rho(problem: &ProblemSpec, part: &EmpiricalMeasure) -> Result<ResultValue> {
    Ok(match problem {
        ProblemSpec::Mean => ResultValue::Mean(mean::rho_mean(part)),
        ProblemSpec::Sort => ResultValue::Sorted(sort::rho_sort(part)),
        ProblemSpec::Extremes => ResultValue::Extremes(extremes::rho_extremes(part)),
        ProblemSpec::Histogram { edges } => {
            ResultValue::Histogram(histogram::rho_histogram(part, edges)?)
        }
        ProblemSpec::Test(p) => ResultValue::PValue(ztest::rho_test(part, p.mu0, p.sigma)?),
        ProblemSpec::Mle(p) => {
            let init = p
                .init
                .clone()
                .unwrap_or_else(|| vec![0.0; p.model.param_count(part.dim())]);
            ResultValue::Mle(mle::rho_mle(part, p.model, &init, p.max_iter, p.tol)?)
        }
        ProblemSpec::Knn(p) => ResultValue::Knn(knn::rho_knn(part, &p.query, p.k)?),
        ProblemSpec::Outlier(p) => ResultValue::Outlier(outlier::rho_outlier(part, p.c)?),
    })
}

/// Full-data objective evaluator handed to the MLE combiner.
pub type ObjectiveFn<'a> = &'a dyn Fn(&[f64]) -> Result<f64>;

/// Context handed to the first-stage combiner for problems that need more
/// than the per-part results.
pub struct FirstStageCtx<'a> {
    /// Part sub-measures, in part order (outlier cross-checks).
    pub parts: Option<&'a [EmpiricalMeasure]>,
    /// Full-data objective evaluator (MLE candidate scoring).
    pub full_loglik: Option<ObjectiveFn<'a>>,
    /// Size of the root measure.
    pub n_total: usize,
}

fn unwrap_variant<'a, T>(
    results: &'a [ResultValue],
    extract: impl Fn(&'a ResultValue) -> Option<&'a T>,
    name: &str,
) -> Result<Vec<T>>
where
    T: Clone + 'a,
{
    results
        .iter()
        .map(|r| {
            extract(r)
                .cloned()
                .ok_or_else(|| Error::InvalidSpec(format!("expected {name} results in combiner")))
        })
        .collect()
}

/// First-stage combiner `C1_L`: merges the per-part results of one
/// repetition. Returns the repetition result plus any warnings.
pub fn combine_first(
    spec: &SolutionSpec,
    per_part: &[ResultValue],
    ctx: &FirstStageCtx,
) -> Result<(ResultValue, Vec<String>)> {
    let mut warnings = Vec::new();
    let combined = match &spec.problem {
        ProblemSpec::Mean => {
            let rs = unwrap_variant(
                per_part,
                |r| match r {
                    ResultValue::Mean(m) => Some(m),
                    _ => None,
                },
                "mean",
            )?;
            ResultValue::Mean(mean::combine_mean(&rs)?)
        }
        ProblemSpec::Sort => {
            let rs = unwrap_variant(
                per_part,
                |r| match r {
                    ResultValue::Sorted(s) => Some(s),
                    _ => None,
                },
                "sorted",
            )?;
            let range_bounded = matches!(
                spec.partitioner.scheme,
                PartitionScheme::RangeBounded { .. }
            );
            ResultValue::Sorted(sort::combine_sort(&rs, range_bounded)?)
        }
        ProblemSpec::Extremes => {
            let rs = unwrap_variant(
                per_part,
                |r| match r {
                    ResultValue::Extremes(e) => Some(e),
                    _ => None,
                },
                "extremes",
            )?;
            ResultValue::Extremes(extremes::combine_extremes(&rs)?)
        }
        ProblemSpec::Histogram { .. } => {
            let rs = unwrap_variant(
                per_part,
                |r| match r {
                    ResultValue::Histogram(h) => Some(h),
                    _ => None,
                },
                "histogram",
            )?;
            ResultValue::Histogram(histogram::combine_histograms(&rs)?)
        }
        ProblemSpec::Test(p) => {
            let ps: Vec<f64> = unwrap_variant(
                per_part,
                |r| match r {
                    ResultValue::PValue(v) => Some(v),
                    _ => None,
                },
                "p-value",
            )?
            .iter()
            .map(|v| v.p)
            .collect();
            ResultValue::PValue(crate::measure::PValueResult::new(
                ztest::combine_test_first(&ps, p.adjust)?,
            )?)
        }
        ProblemSpec::Mle(_) => {
            let rs = unwrap_variant(
                per_part,
                |r| match r {
                    ResultValue::Mle(m) => Some(m),
                    _ => None,
                },
                "MLE",
            )?;
            for (l, cand) in rs.iter().enumerate() {
                if !cand.converged {
                    warnings.push(format!("MLE candidate {l} did not converge"));
                }
            }
            let full = ctx.full_loglik.ok_or_else(|| {
                Error::InvalidSpec("MLE combiner needs a full-data objective".into())
            })?;
            let (winner, mut w) = mle::combine_mle(&rs, full)?;
            warnings.append(&mut w);
            ResultValue::Mle(winner)
        }
        ProblemSpec::Knn(p) => {
            let rs = unwrap_variant(
                per_part,
                |r| match r {
                    ResultValue::Knn(k) => Some(k),
                    _ => None,
                },
                "k-NN",
            )?;
            for (l, list) in rs.iter().enumerate() {
                if list.neighbors.len() < p.k {
                    warnings.push(format!(
                        "part {l} returned {} of {} requested neighbors",
                        list.neighbors.len(),
                        p.k
                    ));
                }
            }
            ResultValue::Knn(knn::combine_knn(&rs, p.k)?)
        }
        ProblemSpec::Outlier(p) => {
            let rs = unwrap_variant(
                per_part,
                |r| match r {
                    ResultValue::Outlier(o) => Some(o),
                    _ => None,
                },
                "outlier",
            )?;
            let parts = ctx.parts.ok_or_else(|| {
                Error::InvalidSpec("outlier combiner needs the part measures".into())
            })?;
            ResultValue::Outlier(outlier::combine_outlier_parts(&rs, parts, p, ctx.n_total)?)
        }
    };
    Ok((combined, warnings))
}

/// Second-stage combiner `C2_K`: merges the repetition results.
pub fn combine_second(
    spec: &SolutionSpec,
    per_rep: &[ResultValue],
    n_total: usize,
) -> Result<ResultValue> {
    if per_rep.is_empty() {
        return Err(Error::EmptyInput("no repetition results"));
    }
    // A single repetition is the result; exact problems run with K=1.
    if per_rep.len() == 1 {
        return Ok(per_rep[0].clone());
    }
    Ok(match &spec.problem {
        ProblemSpec::Test(_) => {
            let ps: Vec<f64> = unwrap_variant(
                per_rep,
                |r| match r {
                    ResultValue::PValue(v) => Some(v),
                    _ => None,
                },
                "p-value",
            )?
            .iter()
            .map(|v| v.p)
            .collect();
            ResultValue::PValue(crate::measure::PValueResult::new(
                ztest::combine_test_second(&ps)?,
            )?)
        }
        ProblemSpec::Mle(_) => {
            let rs = unwrap_variant(
                per_rep,
                |r| match r {
                    ResultValue::Mle(m) => Some(m),
                    _ => None,
                },
                "MLE",
            )?;
            ResultValue::Mle(mle::combine_mle_reps(&rs)?)
        }
        ProblemSpec::Outlier(p) => {
            let rs = unwrap_variant(
                per_rep,
                |r| match r {
                    ResultValue::Outlier(o) => Some(o),
                    _ => None,
                },
                "outlier",
            )?;
            ResultValue::Outlier(outlier::combine_outlier_reps(&rs, p.tau, n_total)?)
        }
        // Exact problems are invariant across repetitions of a partition
        // (and degenerate for range bounds); the first repetition stands.
        _ => per_rep[0].clone(),
    })
}

/// Runs one full repetition in memory: sample the assignment, apply `rho`
/// to every part, combine. This is the reference route used by the
/// validation harness; the engine reproduces it out of core.
pub fn solve_repetition(
    spec: &SolutionSpec,
    m: &EmpiricalMeasure,
    repetition_index: u64,
) -> Result<(ResultValue, Vec<String>)> {
    let assignment = sample_partition(&spec.partitioner, m, repetition_index)?;
    let parts: Vec<EmpiricalMeasure> = assignment
        .parts
        .iter()
        .map(|ids| restrict(m, ids))
        .collect::<Result<_>>()?;
    let per_part: Vec<ResultValue> = parts
        .iter()
        .enumerate()
        .map(|(l, part)| {
            apply_rho(&spec.problem, part)
                .map_err(|e| e.annotate(format!("repetition {repetition_index}, part {l}")))
        })
        .collect::<Result<_>>()?;
    let full_loglik = |theta: &[f64]| -> Result<f64> {
        match &spec.problem {
            ProblemSpec::Mle(p) => Ok(mle::total_loglik(p.model, theta, m)),
            _ => Err(Error::InvalidSpec("objective only defined for MLE".into())),
        }
    };
    let ctx = FirstStageCtx {
        parts: Some(&parts),
        full_loglik: Some(&full_loglik),
        n_total: m.len(),
    };
    combine_first(spec, &per_part, &ctx)
}
