//! Two-sided z-test with known sigma, and the conservative p-value
//! combiners: minimum over parts within a repetition (optionally Bonferroni
//! adjusted), median across repetitions.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, PValueResult};
use crate::numeric::{median, Neumaier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueAdjust {
    #[default]
    None,
    Bonferroni,
}

/// Two-sided p-value for `H0: mu = mu0` given known `sigma`:
/// `p = 2 (1 - Phi(|sqrt(n) (xbar - mu0) / sigma|)) = erfc(|z| / sqrt(2))`.
pub fn z_test_p_value(mean: f64, count: u64, mu0: f64, sigma: f64) -> Result<PValueResult> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let z = ((count as f64).sqrt() * (mean - mu0) / sigma).abs();
    let p = erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    PValueResult::new(p)
}

pub fn rho_test(part: &EmpiricalMeasure, mu0: f64, sigma: f64) -> Result<PValueResult> {
    if part.dim() != 1 {
        return Err(Error::DimensionMismatch {
            context: "z-test data".into(),
            expected: 1,
            got: part.dim(),
        });
    }
    let mut acc = Neumaier::new();
    for p in part.iter_points() {
        acc.add(p[0]);
    }
    let mean = acc.total() / part.len() as f64;
    z_test_p_value(mean, part.len() as u64, mu0, sigma)
}

/// First stage: minimum of the `L` per-part p-values, multiplied by `L` and
/// clamped to 1 under Bonferroni adjustment.
pub fn combine_test_first(p_values: &[f64], adjust: PValueAdjust) -> Result<f64> {
    if p_values.is_empty() {
        return Err(Error::EmptyInput("no p-values"));
    }
    if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidSpec("p-value outside [0, 1]".into()));
    }
    let min = p_values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(match adjust {
        PValueAdjust::None => min,
        PValueAdjust::Bonferroni => (min * p_values.len() as f64).min(1.0),
    })
}

/// Second stage: median of the `K` first-stage results (mean of the two
/// middle values for even `K`).
pub fn combine_test_second(first_stage: &[f64]) -> Result<f64> {
    if first_stage.is_empty() {
        return Err(Error::EmptyInput("no repetition p-values"));
    }
    Ok(median(first_stage))
}

/// Full min-then-median pipeline over `K` repetitions of `L` p-values each.
pub fn combine_test(per_rep: &[Vec<f64>], adjust: PValueAdjust) -> Result<PValueResult> {
    let firsts: Vec<f64> = per_rep
        .iter()
        .map(|ps| combine_test_first(ps, adjust))
        .collect::<Result<_>>()?;
    PValueResult::new(combine_test_second(&firsts)?)
}
