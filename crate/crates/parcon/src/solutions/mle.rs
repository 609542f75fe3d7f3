//! Maximum-likelihood estimation per part, combined by evaluating each
//! candidate against the full-data objective and keeping the argmax.
//!
//! Two models ship: a closed-form Gaussian `(mu, sigma^2)` fit (biased
//! variance) and logistic regression fitted by Newton-Raphson. For logistic
//! data the last coordinate is the 0/1 label and the parameter vector is
//! `[intercept, w_1, ..., w_{d-1}]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, MleResult};
use crate::numeric::{sigmoid, softplus, solve_linear, Neumaier};

/// Variance floor applied when evaluating Gaussian log-likelihoods, so a
/// degenerate all-equal part yields a large finite value instead of +inf.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MleModel {
    GaussianMeanVar,
    LogisticRegression,
}

impl MleModel {
    /// Parameter count given the data dimension.
    pub fn param_count(&self, d: usize) -> usize {
        match self {
            MleModel::GaussianMeanVar => 2,
            MleModel::LogisticRegression => d, // intercept + (d-1) features
        }
    }
}

/// Per-point log-likelihood; summed over a measure it is the model
/// objective. Both the part-level fits and the engine's streamed full pass
/// go through this single definition.
pub fn point_loglik(model: MleModel, theta: &[f64], point: &[f64]) -> f64 {
    match model {
        MleModel::GaussianMeanVar => {
            let mu = theta[0];
            let var = theta[1].max(VARIANCE_FLOOR);
            let x = point[0];
            -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mu) * (x - mu) / var)
        }
        MleModel::LogisticRegression => {
            let (features, label) = point.split_at(point.len() - 1);
            let y = label[0];
            let mut t = theta[0];
            for (w, x) in theta[1..].iter().zip(features) {
                t += w * x;
            }
            y * t - softplus(t)
        }
    }
}

pub fn total_loglik(model: MleModel, theta: &[f64], m: &EmpiricalMeasure) -> f64 {
    let mut acc = Neumaier::new();
    for p in m.iter_points() {
        acc.add(point_loglik(model, theta, p));
    }
    acc.total()
}

fn check_labels(part: &EmpiricalMeasure) -> Result<()> {
    let d = part.dim();
    for i in 0..part.len() {
        let y = part.point(i)[d - 1];
        if y != 0.0 && y != 1.0 {
            return Err(Error::InvalidLabel {
                index: part.parent_index(i),
                value: y,
            });
        }
    }
    Ok(())
}

fn fit_gaussian(part: &EmpiricalMeasure) -> Result<MleResult> {
    if part.dim() != 1 {
        return Err(Error::DimensionMismatch {
            context: "Gaussian MLE data".into(),
            expected: 1,
            got: part.dim(),
        });
    }
    let n = part.len();
    if n < 2 {
        return Err(Error::DegenerateVariance(n));
    }
    let mut sum = Neumaier::new();
    for p in part.iter_points() {
        sum.add(p[0]);
    }
    let mu = sum.total() / n as f64;
    let mut sq = Neumaier::new();
    for p in part.iter_points() {
        let dev = p[0] - mu;
        sq.add(dev * dev);
    }
    let var = sq.total() / n as f64;
    let theta = vec![mu, var];
    let loglik = total_loglik(MleModel::GaussianMeanVar, &theta, part);
    Ok(MleResult {
        theta,
        loglik,
        converged: true,
    })
}

fn fit_logistic(
    part: &EmpiricalMeasure,
    init: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<MleResult> {
    check_labels(part)?;
    let d = part.dim();
    let p = d; // intercept + d-1 features
    if init.len() != p {
        return Err(Error::DimensionMismatch {
            context: "logistic init vector".into(),
            expected: p,
            got: init.len(),
        });
    }
    if part.len() < p {
        return Err(Error::SingularHessian);
    }

    let mut theta = init.to_vec();
    let mut converged = false;
    for _ in 0..max_iter {
        // grad = sum_i x_i (y_i - p_i); hessian = sum_i p_i (1-p_i) x_i x_i^T
        // with x_i augmented by a leading 1.
        let mut grad = vec![0.0; p];
        let mut hess = vec![0.0; p * p];
        for row in part.iter_points() {
            let (features, label) = row.split_at(d - 1);
            let y = label[0];
            let mut t = theta[0];
            for (w, x) in theta[1..].iter().zip(features) {
                t += w * x;
            }
            let prob = sigmoid(t);
            let resid = y - prob;
            let weight = prob * (1.0 - prob);
            let aug = |j: usize| if j == 0 { 1.0 } else { features[j - 1] };
            for j in 0..p {
                grad[j] += aug(j) * resid;
                for k in 0..p {
                    hess[j * p + k] += weight * aug(j) * aug(k);
                }
            }
        }
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < tol {
            converged = true;
            break;
        }
        let mut b = grad.clone();
        let step = solve_linear(&mut hess, &mut b).ok_or(Error::SingularHessian)?;
        for (t, s) in theta.iter_mut().zip(&step) {
            *t += s;
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::SingularHessian);
        }
    }
    let loglik = total_loglik(MleModel::LogisticRegression, &theta, part);
    Ok(MleResult {
        theta,
        loglik,
        converged,
    })
}

pub fn rho_mle(
    part: &EmpiricalMeasure,
    model: MleModel,
    init: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<MleResult> {
    match model {
        MleModel::GaussianMeanVar => fit_gaussian(part),
        MleModel::LogisticRegression => fit_logistic(part, init, max_iter, tol),
    }
}

/// First-stage combiner: evaluates every candidate's parameters against the
/// full objective and returns the argmax (ties go to the lowest index),
/// with the candidate's log-likelihood replaced by its full-data value.
/// Candidates whose evaluation is non-finite are excluded and reported.
pub fn combine_mle<F>(candidates: &[MleResult], full_loglik: F) -> Result<(MleResult, Vec<String>)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no MLE candidates"));
    }
    let mut warnings = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (idx, cand) in candidates.iter().enumerate() {
        let value = match full_loglik(&cand.theta) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => {
                warnings.push(format!(
                    "MLE candidate {idx} excluded: non-finite objective {v}"
                ));
                continue;
            }
            Err(e) => {
                warnings.push(format!("MLE candidate {idx} excluded: {e}"));
                continue;
            }
        };
        match best {
            Some((_, best_value)) if value <= best_value => {}
            _ => best = Some((idx, value)),
        }
    }
    let (idx, value) = best.ok_or(Error::NoViableCandidate(candidates.len()))?;
    let winner = MleResult {
        theta: candidates[idx].theta.clone(),
        loglik: value,
        converged: candidates[idx].converged,
    };
    Ok((winner, warnings))
}

/// Second-stage combiner: argmax over the first-stage winners' stored
/// full-data log-likelihoods (ties go to the lowest repetition index).
pub fn combine_mle_reps(winners: &[MleResult]) -> Result<MleResult> {
    let mut iter = winners.iter();
    let first = iter
        .next()
        .ok_or(Error::EmptyInput("no MLE repetition results"))?;
    let mut best = first;
    for w in iter {
        if w.loglik > best.loglik {
            best = w;
        }
    }
    Ok(best.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{measure_from_points, DataPoint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn measure(rows: &[Vec<f64>]) -> EmpiricalMeasure {
        let pts: Vec<DataPoint> = rows
            .iter()
            .map(|r| DataPoint::new(r.clone()).unwrap())
            .collect();
        measure_from_points(&pts).unwrap()
    }

    #[test]
    fn gaussian_closed_form() {
        let m = measure(&[vec![1.0], vec![2.0], vec![3.0]]);
        let r = rho_mle(&m, MleModel::GaussianMeanVar, &[], 0, 0.0).unwrap();
        assert_eq!(r.theta[0], 2.0);
        assert!((r.theta[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!(r.converged);
    }

    #[test]
    fn gaussian_single_point_degenerate() {
        let m = measure(&[vec![1.0]]);
        assert!(matches!(
            rho_mle(&m, MleModel::GaussianMeanVar, &[], 0, 0.0).unwrap_err(),
            Error::DegenerateVariance(1)
        ));
    }

    #[test]
    fn gaussian_constant_data_floored_loglik_is_finite() {
        let m = measure(&[vec![5.0], vec![5.0], vec![5.0]]);
        let r = rho_mle(&m, MleModel::GaussianMeanVar, &[], 0, 0.0).unwrap();
        assert_eq!(r.theta[1], 0.0);
        assert!(r.loglik.is_finite());
    }

    #[test]
    fn logistic_intercept_only_balanced_labels() {
        // d=1: label-only rows, one 1 and one 0; symmetry forces logit 0.
        let m = measure(&[vec![1.0], vec![0.0]]);
        let r = rho_mle(&m, MleModel::LogisticRegression, &[0.0], 50, 1e-12).unwrap();
        assert!(r.theta[0].abs() < 1e-12, "theta = {:?}", r.theta);
        assert!(r.converged);
    }

    #[test]
    fn logistic_bad_label_rejected() {
        let m = measure(&[vec![1.0, 2.0], vec![0.5, 0.0]]);
        assert!(matches!(
            rho_mle(&m, MleModel::LogisticRegression, &[0.0, 0.0], 50, 1e-12).unwrap_err(),
            Error::InvalidLabel { .. }
        ));
    }

    /// The fixed 50-point synthetic logistic set used across the test suite.
    pub(crate) fn logistic_fixture() -> EmpiricalMeasure {
        let mut rng = ChaCha8Rng::seed_from_u64(90210);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let x: f64 = rng.gen_range(-2.0..2.0);
                let p = sigmoid(0.8 * x - 0.2);
                let y = if rng.gen_range(0.0..1.0) < p {
                    1.0
                } else {
                    0.0
                };
                vec![x, y]
            })
            .collect();
        measure(&rows)
    }

    /// Oracle: long-run gradient descent with backtracking line search on
    /// the same likelihood; shares no code with the Newton path.
    fn logistic_gd_oracle(m: &EmpiricalMeasure, dim: usize) -> Vec<f64> {
        let nll = |theta: &[f64]| -> f64 {
            -m.iter_points()
                .map(|p| point_loglik(MleModel::LogisticRegression, theta, p))
                .sum::<f64>()
        };
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
        for _ in 0..200_000 {
            let g = grad(&theta);
            let gnorm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gnorm < 1e-12 {
                break;
            }
            let base = nll(&theta);
            let mut step = 1.0;
            loop {
                let trial: Vec<f64> = theta.iter().zip(&g).map(|(t, gj)| t - step * gj).collect();
                if nll(&trial) <= base - 0.5 * step * gnorm * gnorm || step < 1e-16 {
                    theta = trial;
                    break;
                }
                step *= 0.5;
            }
        }
        theta
    }

    #[test]
    fn logistic_newton_matches_gradient_descent_oracle() {
        let m = logistic_fixture();
        let newton = rho_mle(&m, MleModel::LogisticRegression, &[0.0, 0.0], 100, 1e-12).unwrap();
        assert!(newton.converged);
        let oracle = logistic_gd_oracle(&m, 2);
        for (a, b) in newton.theta.iter().zip(&oracle) {
            assert!(
                (a - b).abs() < 1e-6,
                "newton {:?} oracle {:?}",
                newton.theta,
                oracle
            );
        }
    }

    #[test]
    fn combine_single_candidate_identity() {
        let cand = MleResult {
            theta: vec![1.0, 2.0],
            loglik: -5.0,
            converged: true,
        };
        let (winner, warnings) = combine_mle(std::slice::from_ref(&cand), |_| Ok(-7.5)).unwrap();
        assert_eq!(winner.theta, cand.theta);
        assert_eq!(winner.loglik, -7.5);
        assert!(warnings.is_empty());
    }

    #[test]
    fn combine_prefers_full_data_mle() {
        // Candidate 0 is the closed-form full-data MLE; it maximizes its
        // own likelihood, so it must win against any other candidate.
        let m = measure(&[vec![1.0], vec![2.0], vec![3.0], vec![6.0]]);
        let full_fit = fit_gaussian(&m).unwrap();
        let other = MleResult {
            theta: vec![0.0, 1.0],
            loglik: 0.0,
            converged: true,
        };
        let eval = |theta: &[f64]| Ok(total_loglik(MleModel::GaussianMeanVar, theta, &m));
        let (winner, _) = combine_mle(&[full_fit.clone(), other], eval).unwrap();
        assert_eq!(winner.theta, full_fit.theta);
    }

    #[test]
    fn combine_argmax_dominates_all_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen_range(-1.0..3.0)]).collect();
        let m = measure(&rows);
        let quarters: Vec<MleResult> = (0..4)
            .map(|q| fit_gaussian(&measure(&rows[q * 50..(q + 1) * 50])).unwrap())
            .collect();
        let eval = |theta: &[f64]| Ok(total_loglik(MleModel::GaussianMeanVar, theta, &m));
        let (winner, warnings) = combine_mle(&quarters, eval).unwrap();
        assert!(warnings.is_empty());
        for cand in &quarters {
            let value = eval(&cand.theta).unwrap();
            assert!(winner.loglik >= value);
        }
    }

    #[test]
    fn combine_excludes_failing_candidates() {
        let good = MleResult {
            theta: vec![0.0, 1.0],
            loglik: 0.0,
            converged: true,
        };
        let bad = MleResult {
            theta: vec![f64::MAX, 1.0],
            loglik: 0.0,
            converged: true,
        };
        let eval = |theta: &[f64]| {
            if theta[0] > 1e300 {
                Ok(f64::NAN)
            } else {
                Ok(-1.0)
            }
        };
        let (winner, warnings) = combine_mle(&[bad.clone(), good.clone()], eval).unwrap();
        assert_eq!(winner.theta, good.theta);
        assert_eq!(warnings.len(), 1);

        let all_failed = combine_mle(&[bad], eval);
        assert!(matches!(
            all_failed.unwrap_err(),
            Error::NoViableCandidate(1)
        ));
    }

    #[test]
    fn rep_combiner_takes_best_loglik() {
        let a = MleResult {
            theta: vec![1.0],
            loglik: -3.0,
            converged: true,
        };
        let b = MleResult {
            theta: vec![2.0],
            loglik: -2.0,
            converged: true,
        };
        let c = MleResult {
            theta: vec![3.0],
            loglik: -2.0,
            converged: true,
        };
        let best = combine_mle_reps(&[a, b.clone(), c]).unwrap();
        assert_eq!(
            best.theta, b.theta,
            "tie goes to the lower repetition index"
        );
    }
}
