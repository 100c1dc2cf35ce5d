//! Central finite-difference check of the stage-1 gradient.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::par::{self, Exec};

use super::loss::{stage1_loss, Sample};
use super::{ModelParams, TaskWeights};

/// Denominator floor so coordinates whose true gradient is (numerically)
/// zero do not produce spurious relative errors.
pub const REL_ERROR_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Index into `params.data ++ [w_pref, w_qual]`.
    pub worst_index: usize,
    pub coordinates: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`, maximised over coordinates. Returns the
/// error and its index.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> (f64, usize) {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_ERROR_FLOOR))
        .enumerate()
        .fold((0.0, 0), |(best, bi), (i, e)| if e > best || e.is_nan() { (e, i) } else { (best, bi) })
}

/// Loss evaluated with a perturbed copy of the parameters.
fn loss_at(params: &ModelParams, weights: &TaskWeights, pref: &[Sample], qual: &[Sample], index: usize, delta: f64) -> Result<f64> {
    let mut p = params.clone();
    let mut w = *weights;
    let n = p.data.len();
    match index {
        i if i < n => p.data[i] += delta,
        i if i == n => w.w_pref += delta,
        _ => w.w_qual += delta,
    }
    Ok(stage1_loss(&p, &w, pref, qual, Exec::Sequential)?.loss)
}

/// Central differences `(L(t+e) - L(t-e)) / 2e` for every parameter followed
/// by both task weights.
pub fn numeric_gradient(
    params: &ModelParams,
    weights: &TaskWeights,
    pref: &[Sample],
    qual: &[Sample],
    eps: f64,
    exec: Exec,
) -> Result<Vec<f64>> {
    let n = params.data.len() + 2;
    par::map_range(exec, n, |i| {
        let up = loss_at(params, weights, pref, qual, i, eps)?;
        let down = loss_at(params, weights, pref, qual, i, -eps)?;
        Ok((up - down) / (2.0 * eps))
    })
    .into_iter()
    .collect()
}

/// Analytic gradient flattened in the same order as [`numeric_gradient`].
pub fn analytic_gradient(params: &ModelParams, weights: &TaskWeights, pref: &[Sample], qual: &[Sample]) -> Result<Vec<f64>> {
    let out = stage1_loss(params, weights, pref, qual, Exec::Sequential)?;
    let mut g = out.grad;
    g.extend_from_slice(&out.grad_w);
    Ok(g)
}

/// Compares the analytic gradient with central differences over every
/// coordinate.
pub fn gradient_check(
    params: &ModelParams,
    weights: &TaskWeights,
    pref: &[Sample],
    qual: &[Sample],
    eps: f64,
    exec: Exec,
) -> Result<GradCheckReport> {
    let analytic = analytic_gradient(params, weights, pref, qual)?;
    let numeric = numeric_gradient(params, weights, pref, qual, eps, exec)?;
    let (max_rel_error, worst_index) = max_relative_error(&analytic, &numeric);
    Ok(GradCheckReport { max_rel_error, worst_index, coordinates: analytic.len() })
}
