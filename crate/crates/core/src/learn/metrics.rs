//! Accuracy metrics of a parameter set on a dataset.

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::objective::predict;
use crate::error::{Error, Result};
use crate::reduce::{EquivalentParams, ReducedNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `(1/E) Σ_m ‖r_m‖²`, summed over scenarios (the training loss).
    pub sq_two_norm_loss: f64,
    /// The same loss divided by the scenario count.
    pub sq_two_norm_loss_mean: f64,
    /// Largest absolute residual over scenarios and ties, per unit.
    pub inf_norm_loss: f64,
    pub per_tie_mae_mw: Vec<f64>,
    pub mae_mw: f64,
    pub scenarios: usize,
    /// Sorted absolute errors (per unit) paired with the fraction of
    /// residuals at or below each.
    pub cumulative_abs_error: Vec<(f64, f64)>,
}

pub fn residuals(rn: &ReducedNetwork, params: &EquivalentParams, data: &Dataset) -> Result<nalgebra::DMatrix<f64>> {
    Ok(predict(rn, params, &data.inputs)? - &data.targets)
}

pub fn evaluate(rn: &ReducedNetwork, params: &EquivalentParams, data: &Dataset, base_mva: f64) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let r = residuals(rn, params, data)?;
    let s = data.len() as f64;
    let sq = r.norm_squared() / rn.tie_count() as f64;
    let per_tie_mae_mw: Vec<f64> = r
        .row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>() / s * base_mva)
        .collect();
    let mut abs: Vec<f64> = r.iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let total = abs.len() as f64;
    let mae_mw = abs.iter().sum::<f64>() / total * base_mva;
    let cumulative_abs_error = abs
        .iter()
        .enumerate()
        .map(|(i, &e)| (e, (i + 1) as f64 / total))
        .collect();
    Ok(Metrics {
        sq_two_norm_loss: sq,
        sq_two_norm_loss_mean: sq / s,
        inf_norm_loss: abs.last().copied().unwrap_or(0.0),
        per_tie_mae_mw,
        mae_mw,
        scenarios: data.len(),
        cumulative_abs_error,
    })
}
