//! Statistical test bench: full-data oracles, the Monte Carlo viability
//! estimator, and the convergence harness.
//!
//! The oracle applies the problem approach directly to the whole dataset
//! (desk scale only). Viability compares the expected evaluation vector of
//! first-stage-combined results against the oracle's: the estimator draws
//! independent partitionings, measures per-component bias and standard
//! error, and rules Viable when every component's bias is within three
//! standard errors. The convergence harness extends repetitions one at a
//! time and records the evaluation-space distance to the oracle under a
//! chosen second-stage combiner, including the oracle-referencing argmin
//! combiner used to prove convergence (test-only by nature, since the
//! oracle result is unknown in production).
//!
//! All bias arithmetic happens on deviations `Y_k - target`, so exact
//! combiners report a bias of exactly zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, EvalVector, MleResult, ResultValue};
use crate::numeric::{median, sigmoid, Neumaier};
use crate::solutions::{self, mle, MleModel, ProblemSpec, SolutionSpec};

/// Oracles materialize the full dataset; larger inputs are refused.
pub const MAX_ORACLE_N: usize = 1_000_000;

/// Minimum draw count below which a degenerate-but-biased estimate is
/// reported as inconclusive rather than not viable.
pub const MIN_DRAWS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Viable,
    NotViable,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViabilityReport {
    pub problem: String,
    /// Monte Carlo mean of `ev o C1_L` over the draws.
    pub estimate: EvalVector,
    /// `ev o rho(m)` from the oracle.
    pub target: EvalVector,
    pub bias: Vec<f64>,
    pub se: Vec<f64>,
    pub draws: usize,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondStageCombiner {
    MeanOfEv,
    MedianOfEv,
    OracleArgmin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub combiner: SecondStageCombiner,
    /// `||Z_K - mu||` after each repetition count `K = 1..=K_max`.
    pub distances: Vec<f64>,
}

/// Long-run gradient descent with Armijo backtracking on the logistic
/// objective; the independent route against which the Newton fit is judged.
fn logistic_gd(m: &EmpiricalMeasure, max_iter: usize, tol: f64) -> MleResult {
    let dim = m.dim(); // intercept + (d-1) features
    let neg_loglik =
        |theta: &[f64]| -> f64 { -mle::total_loglik(MleModel::LogisticRegression, theta, m) };
    let grad = |theta: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; dim];
        for row in m.iter_points() {
            let (features, label) = row.split_at(row.len() - 1);
            let mut t = theta[0];
            for (w, x) in theta[1..].iter().zip(features) {
                t += w * x;
            }
            let resid = sigmoid(t) - label[0];
            g[0] += resid;
            for (gj, x) in g[1..].iter_mut().zip(features) {
                *gj += resid * x;
            }
        }
        g
    };
    let mut theta = vec![0.0; dim];
    let mut converged = false;
    for _ in 0..max_iter {
        let g = grad(&theta);
        let gnorm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < tol {
            converged = true;
            break;
        }
        let base = neg_loglik(&theta);
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = theta.iter().zip(&g).map(|(t, gj)| t - step * gj).collect();
            if neg_loglik(&trial) <= base - 0.5 * step * gnorm * gnorm || step < 1e-16 {
                theta = trial;
                break;
            }
            step *= 0.5;
        }
    }
    let loglik = mle::total_loglik(MleModel::LogisticRegression, &theta, m);
    MleResult {
        theta,
        loglik,
        converged,
    }
}

/// Direct full-data computation of the problem approach: `rho(m) = R*`.
pub fn oracle(problem: &ProblemSpec, m: &EmpiricalMeasure) -> Result<ResultValue> {
    if m.len() > MAX_ORACLE_N {
        return Err(Error::TooLargeForOracle {
            n: m.len(),
            max: MAX_ORACLE_N,
        });
    }
    match problem {
        ProblemSpec::Mle(p) if p.model == MleModel::LogisticRegression => {
            Ok(ResultValue::Mle(logistic_gd(m, 200_000, 1e-10)))
        }
        _ => solutions::apply_rho(problem, m),
    }
}

/// One viability draw: the first-stage-combined result of an independent
/// partitioning, evaluated.
fn draw_ev(spec: &SolutionSpec, m: &EmpiricalMeasure, draw: u64) -> Result<EvalVector> {
    let (combined, _) = solutions::solve_repetition(spec, m, draw)?;
    spec.eval_vector(&combined, m.dim())
}

fn with_seed(spec: &SolutionSpec, seed: u64) -> SolutionSpec {
    let mut s = spec.clone();
    s.partitioner.base_seed = seed;
    s
}

/// Monte Carlo estimate of the viability condition: draws `draws`
/// independent partitionings seeded by `seed`, compares the mean evaluation
/// vector of combined results against the oracle target, and issues the
/// three-sigma verdict.
pub fn estimate_viability(
    spec: &SolutionSpec,
    m: &EmpiricalMeasure,
    draws: usize,
    seed: u64,
) -> Result<ViabilityReport> {
    if draws == 0 {
        return Err(Error::EmptyInput("viability needs at least one draw"));
    }
    spec.validate_for_dim(m.dim())?;
    let seeded = with_seed(spec, seed);
    let target_result = oracle(&spec.problem, m)?;
    let target = spec.eval_vector(&target_result, m.dim())?;
    let width = target.len();

    // Deviations from the target, per draw.
    let mut devs: Vec<Vec<f64>> = Vec::with_capacity(draws);
    for k in 0..draws {
        let y = draw_ev(&seeded, m, k as u64)?;
        if y.len() != width {
            return Err(Error::DimensionMismatch {
                context: "viability draw".into(),
                expected: width,
                got: y.len(),
            });
        }
        devs.push(
            y.values()
                .iter()
                .zip(target.values())
                .map(|(a, b)| a - b)
                .collect(),
        );
    }

    let mut bias = Vec::with_capacity(width);
    let mut se = Vec::with_capacity(width);
    for j in 0..width {
        let mut acc = Neumaier::new();
        for dev in &devs {
            acc.add(dev[j]);
        }
        let mean_dev = acc.total() / draws as f64;
        bias.push(mean_dev);
        if draws < 2 {
            se.push(0.0);
        } else {
            let mut sq = Neumaier::new();
            for dev in &devs {
                let c = dev[j] - mean_dev;
                sq.add(c * c);
            }
            let var = sq.total() / (draws - 1) as f64;
            se.push((var / draws as f64).sqrt());
        }
    }

    let all_within = bias
        .iter()
        .zip(&se)
        .all(|(b, s)| s.is_finite() && b.abs() <= 3.0 * s);
    let degenerate_biased = bias.iter().zip(&se).any(|(b, s)| *s == 0.0 && *b != 0.0);
    let verdict = if all_within {
        Verdict::Viable
    } else if degenerate_biased && draws < MIN_DRAWS {
        Verdict::Inconclusive
    } else {
        Verdict::NotViable
    };

    let estimate = EvalVector::new(
        target
            .values()
            .iter()
            .zip(&bias)
            .map(|(t, b)| t + b)
            .collect(),
    )?;
    Ok(ViabilityReport {
        problem: spec.problem.name().to_string(),
        estimate,
        target,
        bias,
        se,
        draws,
        verdict,
    })
}

/// Extends repetitions one at a time up to `k_max`, recording the
/// evaluation-space distance between the combined result and the oracle
/// after each step.
pub fn trace_convergence(
    spec: &SolutionSpec,
    m: &EmpiricalMeasure,
    k_max: usize,
    combiner: SecondStageCombiner,
    seed: u64,
) -> Result<ConvergenceTrace> {
    if k_max == 0 {
        return Err(Error::EmptyInput("convergence trace needs k_max >= 1"));
    }
    spec.validate_for_dim(m.dim())?;
    let seeded = with_seed(spec, seed);
    let target_result = oracle(&spec.problem, m)?;
    let target = spec.eval_vector(&target_result, m.dim())?;
    let width = target.len();

    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut devs: Vec<Vec<f64>> = Vec::with_capacity(k_max);
    let mut distances = Vec::with_capacity(k_max);
    let mut running_min = f64::INFINITY;
    for k in 0..k_max {
        let y = draw_ev(&seeded, m, k as u64)?;
        devs.push(
            y.values()
                .iter()
                .zip(target.values())
                .map(|(a, b)| a - b)
                .collect(),
        );
        let dist = match combiner {
            SecondStageCombiner::MeanOfEv => {
                let mean_dev: Vec<f64> = (0..width)
                    .map(|j| {
                        let mut acc = Neumaier::new();
                        for dev in &devs {
                            acc.add(dev[j]);
                        }
                        acc.total() / devs.len() as f64
                    })
                    .collect();
                norm(&mean_dev)
            }
            SecondStageCombiner::MedianOfEv => {
                let med_dev: Vec<f64> = (0..width)
                    .map(|j| {
                        let col: Vec<f64> = devs.iter().map(|dev| dev[j]).collect();
                        median(&col)
                    })
                    .collect();
                norm(&med_dev)
            }
            SecondStageCombiner::OracleArgmin => {
                running_min = running_min.min(norm(devs.last().unwrap()));
                running_min
            }
        };
        distances.push(dist);
    }
    Ok(ConvergenceTrace {
        combiner,
        distances,
    })
}
