//! End-to-end execution of a solution: `K` repetitions of route -> per-part
//! `rho` -> first-stage combine, then the second-stage combine, under a
//! memory budget and a fixed worker count.
//!
//! Determinism: routing folds points in global stream order on the
//! controlling thread; per-part work runs in parallel but results land in
//! part-indexed slots; combiners run single-threaded in part and repetition
//! order. The report is therefore bit-identical for any worker count.

pub mod route;
pub mod source;

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, EvalVector, ResultValue};
use crate::partition::resolve_partitioner;
use crate::solutions::{
    self, extremes::ExtremesAccumulator, histogram::HistogramAccumulator, mean::MeanAccumulator,
    mle, ztest, MleModel, ProblemSpec, SolutionSpec,
};

pub use route::{route_stream, PartStore, RoutePlan, SPILL_DIR_ENV};
pub use source::{load_measure, Chunk, ChunkSource, InMemorySource, MemoryGauge};

/// Default chunk cap; keeps single reads IO-friendly even under huge
/// memory budgets.
const MAX_CHUNK_POINTS: usize = 65_536;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineParams {
    pub workers: usize,
    /// Budget for resident point data, in bytes.
    pub memory_budget: u64,
    /// Points per chunk; derived from the budget when absent.
    pub chunk_size: Option<usize>,
    /// Retain the raw L x K per-part results in the report.
    pub keep_per_part: bool,
}

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            workers: 1,
            memory_budget: 256 * 1024 * 1024,
            chunk_size: None,
            keep_per_part: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub route_ms: u64,
    pub solve_ms: u64,
    pub combine_ms: u64,
    pub total_ms: u64,
}

/// Everything a run produces: the final result, per-repetition results,
/// evaluation traces, warnings, and enough of the spec to re-run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub spec: SolutionSpec,
    pub final_result: Option<ResultValue>,
    pub per_rep: Vec<ResultValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_part: Option<Vec<Vec<ResultValue>>>,
    pub ev_trace: Vec<EvalVector>,
    pub warnings: Vec<String>,
    pub timing: PhaseTiming,
    pub peak_resident_points: usize,
    pub workers: usize,
}

fn point_bytes(d: usize) -> usize {
    (d + 1) * 8
}

fn budget_rows(memory_budget: u64, d: usize) -> usize {
    ((memory_budget as usize) / point_bytes(d)).max(1)
}

fn derive_chunk_points(params: &EngineParams, d: usize) -> usize {
    match params.chunk_size {
        Some(c) => c.max(1),
        None => {
            (budget_rows(params.memory_budget, d) / (params.workers + 1)).clamp(1, MAX_CHUNK_POINTS)
        }
    }
}

fn requires_materialization(problem: &ProblemSpec) -> bool {
    matches!(
        problem,
        ProblemSpec::Sort | ProblemSpec::Knn(_) | ProblemSpec::Mle(_) | ProblemSpec::Outlier(_)
    )
}

enum StreamAcc {
    Mean(MeanAccumulator),
    Extremes(ExtremesAccumulator),
    Histogram(HistogramAccumulator),
    Test {
        sum: crate::numeric::Neumaier,
        count: u64,
    },
}

impl StreamAcc {
    fn new(problem: &ProblemSpec, d: usize) -> Result<Self> {
        Ok(match problem {
            ProblemSpec::Mean => StreamAcc::Mean(MeanAccumulator::new(d)),
            ProblemSpec::Extremes => StreamAcc::Extremes(ExtremesAccumulator::new()),
            ProblemSpec::Histogram { edges } => {
                StreamAcc::Histogram(HistogramAccumulator::new(edges.clone(), 0)?)
            }
            ProblemSpec::Test(_) => StreamAcc::Test {
                sum: crate::numeric::Neumaier::new(),
                count: 0,
            },
            _ => {
                return Err(Error::InvalidSpec(format!(
                    "{} is not a streaming problem",
                    problem.name()
                )))
            }
        })
    }

    fn push(&mut self, point: &[f64]) -> Result<()> {
        match self {
            StreamAcc::Mean(acc) => acc.push(point),
            StreamAcc::Extremes(acc) => acc.push(crate::measure::DataPoint::new(point.to_vec())?),
            StreamAcc::Histogram(acc) => acc.push(point)?,
            StreamAcc::Test { sum, count } => {
                sum.add(point[0]);
                *count += 1;
            }
        }
        Ok(())
    }

    fn finish(self, problem: &ProblemSpec) -> Result<ResultValue> {
        Ok(match (self, problem) {
            (StreamAcc::Mean(acc), _) => ResultValue::Mean(acc.finish()?),
            (StreamAcc::Extremes(acc), _) => ResultValue::Extremes(acc.finish()?),
            (StreamAcc::Histogram(acc), _) => ResultValue::Histogram(acc.finish()),
            (StreamAcc::Test { sum, count }, ProblemSpec::Test(p)) => {
                if count == 0 {
                    return Err(Error::EmptyInput("z-test on zero points"));
                }
                let mean = sum.total() / count as f64;
                ResultValue::PValue(ztest::z_test_p_value(mean, count, p.mu0, p.sigma)?)
            }
            _ => unreachable!("accumulator constructed from the same problem"),
        })
    }
}

/// Streamed full-data objective for one parameter vector, accumulated in
/// fixed chunk order.
pub fn full_pass_evaluate(
    model: MleModel,
    theta: &[f64],
    source: &mut dyn ChunkSource,
    chunk_points: usize,
) -> Result<f64> {
    let values = full_pass_evaluate_many(
        model,
        std::slice::from_ref(&theta.to_vec()),
        source,
        chunk_points,
    )?;
    let v = values[0];
    if !v.is_finite() {
        return Err(Error::NonfiniteValue("full-data log-likelihood".into()));
    }
    Ok(v)
}

/// One pass over the source evaluating several parameter vectors at once.
/// Non-finite totals are returned as-is so the caller can exclude the
/// offending candidate.
pub fn full_pass_evaluate_many(
    model: MleModel,
    thetas: &[Vec<f64>],
    source: &mut dyn ChunkSource,
    chunk_points: usize,
) -> Result<Vec<f64>> {
    let mut accs = vec![crate::numeric::Neumaier::new(); thetas.len()];
    source.reset()?;
    while let Some(chunk) = source.next_chunk(chunk_points)? {
        for i in 0..chunk.len() {
            let point = chunk.point(i);
            for (acc, theta) in accs.iter_mut().zip(thetas) {
                acc.add(mle::point_loglik(model, theta, point));
            }
        }
    }
    Ok(accs.iter().map(|a| a.total()).collect())
}

struct RepOutcome {
    combined: ResultValue,
    per_part: Vec<ResultValue>,
    warnings: Vec<String>,
}

fn annotate(rep: usize, e: Error) -> Error {
    e.annotate(format!("repetition {rep}"))
}

/// Runs one repetition out of core.
#[allow(clippy::too_many_arguments)]
fn run_repetition(
    spec: &SolutionSpec,
    source: &mut dyn ChunkSource,
    rep: usize,
    chunk_points: usize,
    budget: usize,
    gauge: &Arc<MemoryGauge>,
    pool: &rayon::ThreadPool,
    timing: &mut PhaseTiming,
) -> Result<RepOutcome> {
    let n = source.len();
    let d = source.dims();
    let l = spec.partitioner.part_count;
    let resolved =
        resolve_partitioner(&spec.partitioner, n, rep as u64).map_err(|e| annotate(rep, e))?;
    let plan = RoutePlan::from_resolved(resolved);
    let mut warnings = Vec::new();

    let route_start = Instant::now();
    let (per_part, parts_data): (Vec<ResultValue>, Option<Vec<EmpiricalMeasure>>) =
        if requires_materialization(&spec.problem) {
            // Reserve one chunk of headroom inside the budget for the
            // stream buffer itself.
            let store_budget = budget.saturating_sub(chunk_points).max(1);
            let mut store = PartStore::new(l, d, store_budget, gauge.clone());
            let routed = route_stream(source, chunk_points, &plan, gauge, |part, idx, point| {
                store.push(part, idx, point)
            });
            if let Err(e) = routed {
                return Err(fail_with_spill(&mut store, annotate(rep, e)));
            }
            timing.route_ms += route_start.elapsed().as_millis() as u64;

            let solve_start = Instant::now();
            for part in 0..l {
                if store.rows(part) == 0 {
                    return Err(fail_with_spill(
                        &mut store,
                        annotate(rep, Error::EmptyPart { part }),
                    ));
                }
            }
            let outcome = solve_materialized(spec, &mut store, rep, budget, gauge, pool);
            let (results, parts) = match outcome {
                Ok(v) => v,
                Err(e) => return Err(fail_with_spill(&mut store, e)),
            };
            timing.solve_ms += solve_start.elapsed().as_millis() as u64;
            (results, Some(parts))
        } else {
            let mut accs: Vec<StreamAcc> = (0..l)
                .map(|_| StreamAcc::new(&spec.problem, d))
                .collect::<Result<_>>()
                .map_err(|e| annotate(rep, e))?;
            let mut delivered = vec![0u64; l];
            route_stream(source, chunk_points, &plan, gauge, |part, _idx, point| {
                delivered[part] += 1;
                accs[part].push(point)
            })
            .map_err(|e| annotate(rep, e))?;
            timing.route_ms += route_start.elapsed().as_millis() as u64;

            let solve_start = Instant::now();
            for (part, count) in delivered.iter().enumerate() {
                if *count == 0 {
                    return Err(annotate(rep, Error::EmptyPart { part }));
                }
            }
            let results: Vec<ResultValue> = accs
                .into_iter()
                .enumerate()
                .map(|(part, acc)| {
                    acc.finish(&spec.problem)
                        .map_err(|e| annotate(rep, e.annotate(format!("part {part}"))))
                })
                .collect::<Result<_>>()?;
            timing.solve_ms += solve_start.elapsed().as_millis() as u64;
            (results, None)
        };

    // MLE candidate scoring needs one more pass over the full data; all
    // candidates are evaluated in a single pass, in chunk order.
    let combine_start = Instant::now();
    let scored: Option<Vec<(Vec<f64>, f64)>> = if let ProblemSpec::Mle(p) = &spec.problem {
        let thetas: Vec<Vec<f64>> = per_part
            .iter()
            .map(|r| match r {
                ResultValue::Mle(m) => Ok(m.theta.clone()),
                _ => Err(Error::InvalidSpec("expected MLE results".into())),
            })
            .collect::<Result<_>>()
            .map_err(|e| annotate(rep, e))?;
        let values = full_pass_evaluate_many(p.model, &thetas, source, chunk_points)
            .map_err(|e| annotate(rep, e))?;
        Some(thetas.into_iter().zip(values).collect())
    } else {
        None
    };
    let full_loglik = |theta: &[f64]| -> Result<f64> {
        let table = scored
            .as_ref()
            .ok_or_else(|| Error::InvalidSpec("objective only defined for MLE".into()))?;
        table
            .iter()
            .find(|(t, _)| t.as_slice() == theta)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::InvalidSpec("unknown MLE candidate".into()))
    };
    let ctx = solutions::FirstStageCtx {
        parts: parts_data.as_deref(),
        full_loglik: Some(&full_loglik),
        n_total: n,
    };
    let (combined, mut combine_warnings) =
        solutions::combine_first(spec, &per_part, &ctx).map_err(|e| annotate(rep, e))?;
    warnings.extend(
        combine_warnings
            .drain(..)
            .map(|w| format!("repetition {rep}: {w}")),
    );
    if let Some(parts) = parts_data {
        let released: usize = parts.iter().map(|p| p.len()).sum();
        gauge.release(released);
        drop(parts);
    }
    timing.combine_ms += combine_start.elapsed().as_millis() as u64;

    Ok(RepOutcome {
        combined,
        per_part,
        warnings,
    })
}

fn fail_with_spill(store: &mut PartStore, e: Error) -> Error {
    if store.has_spilled() {
        if let Some(path) = store.keep_spill_dir() {
            return e.annotate(format!(
                "spill files retained for debugging at {}",
                path.display()
            ));
        }
    }
    e
}

/// Materializes parts and applies `rho`, in parallel batches whose total
/// size stays within the budget. Returns results and the part measures
/// (the outlier combiner needs them; others drop them immediately).
fn solve_materialized(
    spec: &SolutionSpec,
    store: &mut PartStore,
    rep: usize,
    budget: usize,
    gauge: &Arc<MemoryGauge>,
    pool: &rayon::ThreadPool,
) -> Result<(Vec<ResultValue>, Vec<EmpiricalMeasure>)> {
    let l = store.part_count();
    let keep_parts = matches!(spec.problem, ProblemSpec::Outlier(_));
    for part in 0..l {
        if store.rows(part) > budget {
            let hint = if matches!(spec.problem, ProblemSpec::Sort) {
                "; raising L yields smaller sorted parts"
            } else {
                ""
            };
            return Err(annotate(
                rep,
                Error::InsufficientMemory(format!(
                    "part {part} holds {} points but the budget is {budget}{hint}",
                    store.rows(part)
                )),
            ));
        }
    }
    if keep_parts {
        let total: usize = (0..l).map(|p| store.rows(p)).sum();
        if total > budget {
            return Err(annotate(
                rep,
                Error::InsufficientMemory(format!(
                    "outlier combining holds all {total} points but the budget is {budget}"
                )),
            ));
        }
    }

    let mut results: Vec<Option<ResultValue>> = (0..l).map(|_| None).collect();
    let mut retained: Vec<Option<EmpiricalMeasure>> = (0..l).map(|_| None).collect();
    let mut next = 0usize;
    while next < l {
        // Greedy batch in part order: always at least one part, stop when
        // the materialized batch would exceed the budget.
        let mut batch: Vec<(usize, EmpiricalMeasure)> = Vec::new();
        let mut batch_rows = 0usize;
        while next < l {
            let rows = store.rows(next);
            if !batch.is_empty() && batch_rows + rows > budget {
                break;
            }
            let m = store.materialize(next).map_err(|e| annotate(rep, e))?;
            gauge.acquire(m.len());
            batch_rows += rows;
            batch.push((next, m));
            next += 1;
        }
        let solved: Vec<(usize, Result<ResultValue>, EmpiricalMeasure)> = pool.install(|| {
            batch
                .into_par_iter()
                .map(|(part, m)| {
                    let r = solutions::apply_rho(&spec.problem, &m)
                        .map_err(|e| e.annotate(format!("repetition {rep}, part {part}")));
                    (part, r, m)
                })
                .collect()
        });
        for (part, r, m) in solved {
            results[part] = Some(r?);
            if keep_parts {
                retained[part] = Some(m);
            } else {
                gauge.release(m.len());
                drop(m);
            }
        }
    }
    let results: Vec<ResultValue> = results.into_iter().map(|r| r.unwrap()).collect();
    let parts: Vec<EmpiricalMeasure> = if keep_parts {
        retained.into_iter().map(|m| m.unwrap()).collect()
    } else {
        Vec::new()
    };
    Ok((results, parts))
}

/// Runs the full solution against the source and assembles the report.
/// Output is bit-identical for a fixed `(spec, source)` regardless of
/// `workers`.
pub fn run(
    spec: &SolutionSpec,
    source: &mut dyn ChunkSource,
    params: &EngineParams,
) -> Result<RunReport> {
    let total_start = Instant::now();
    if source.is_empty() {
        return Err(Error::EmptyInput("source has no points"));
    }
    let d = source.dims();
    spec.validate_for_dim(d)?;
    let workers = params.workers.max(1);
    let chunk_points = derive_chunk_points(params, d);
    let budget = budget_rows(params.memory_budget, d);
    let gauge = MemoryGauge::new();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidSpec(format!("worker pool: {e}")))?;

    let mut timing = PhaseTiming::default();
    let mut per_rep = Vec::with_capacity(spec.repetitions);
    let mut per_part_all = Vec::with_capacity(spec.repetitions);
    let mut ev_trace = Vec::with_capacity(spec.repetitions);
    let mut warnings = Vec::new();

    for rep in 0..spec.repetitions {
        let outcome = run_repetition(
            spec,
            source,
            rep,
            chunk_points,
            budget,
            &gauge,
            &pool,
            &mut timing,
        )?;
        ev_trace.push(spec.eval_vector(&outcome.combined, d)?);
        per_rep.push(outcome.combined);
        warnings.extend(outcome.warnings);
        if params.keep_per_part {
            per_part_all.push(outcome.per_part);
        }
    }

    let combine_start = Instant::now();
    let final_result = solutions::combine_second(spec, &per_rep, source.len())?;
    timing.combine_ms += combine_start.elapsed().as_millis() as u64;
    timing.total_ms = total_start.elapsed().as_millis() as u64;

    Ok(RunReport {
        spec: spec.clone(),
        final_result: Some(final_result),
        per_rep,
        per_part: params.keep_per_part.then_some(per_part_all),
        ev_trace,
        warnings,
        timing,
        peak_resident_points: gauge.peak(),
        workers,
    })
}
