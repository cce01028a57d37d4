//! Squared-error training objective of the reduced DC model and its
//! analytic gradient.
//!
//! With `u = A θ`, residual `r = b ⊙ u + ρ − p_target` and
//! `z = B'⁻¹ Aᵀ (b ⊙ r)`, summed over scenarios:
//!
//! ```text
//! L    = (1/E) Σ ‖r‖²
//! ∂L/∂b = (2/E) Σ u ⊙ (r − A z)
//! ∂L/∂γ = −(2/E) Σ z
//! ∂L/∂ρ = (2/E) Σ r
//! ```

use nalgebra::DMatrix;

use super::dataset::Dataset;
use crate::dcpf::DcModel;
use crate::error::{Error, Result};
use crate::reduce::{EquivalentParams, ReducedNetwork};

/// Model outputs for a whole dataset, one column per scenario.
struct Forward {
    u: DMatrix<f64>,
    residual: DMatrix<f64>,
}

fn forward(model: &DcModel, data: &Dataset) -> Result<Forward> {
    let rn = model.rn;
    let params = &model.params;
    if data.inputs.nrows() != rn.zone_count - 1 || data.targets.nrows() != rn.tie_count() {
        return Err(Error::DimensionMismatch {
            context: "dataset rows",
            expected: rn.zone_count - 1 + rn.tie_count(),
            got: data.inputs.nrows() + data.targets.nrows(),
        });
    }
    let mut rhs = data.inputs.clone();
    for mut col in rhs.column_iter_mut() {
        for (v, g) in col.iter_mut().zip(&params.gamma) {
            *v -= g;
        }
    }
    let theta = model.factor().solve_many(&rhs)?;
    let u = &rn.incidence * theta;
    let mut residual = u.clone();
    for (k, mut row) in residual.row_iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v = params.b[k] * *v + params.rho[k];
        }
    }
    residual -= &data.targets;
    Ok(Forward { u, residual })
}

/// Model flows `p^DC`, `ties x S`.
pub fn predict(rn: &ReducedNetwork, params: &EquivalentParams, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let data = Dataset::new(inputs.clone(), DMatrix::zeros(rn.tie_count(), inputs.ncols()))?;
    let model = DcModel::new(rn, params.clone())?;
    Ok(forward(&model, &data)?.residual)
}

pub fn loss(rn: &ReducedNetwork, params: &EquivalentParams, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let model = DcModel::new(rn, params.clone())?;
    let fw = forward(&model, data)?;
    Ok(fw.residual.norm_squared() / rn.tie_count() as f64)
}

pub fn grad(rn: &ReducedNetwork, params: &EquivalentParams, data: &Dataset) -> Result<EquivalentParams> {
    Ok(loss_and_grad(rn, params, data)?.1)
}

pub fn loss_and_grad(
    rn: &ReducedNetwork,
    params: &EquivalentParams,
    data: &Dataset,
) -> Result<(f64, EquivalentParams)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let model = DcModel::new(rn, params.clone())?;
    let Forward { u, residual } = forward(&model, data)?;
    let e = rn.tie_count() as f64;
    let scale = 2.0 / e;

    let mut weighted = residual.clone();
    for (k, mut row) in weighted.row_iter_mut().enumerate() {
        row *= params.b[k];
    }
    let z = model.factor().solve_many(&(rn.incidence.transpose() * weighted))?;
    let az = &rn.incidence * &z;

    let g_b = (0..rn.tie_count())
        .map(|k| {
            let s: f64 = (0..data.len())
                .map(|m| u[(k, m)] * (residual[(k, m)] - az[(k, m)]))
                .sum();
            scale * s
        })
        .collect();
    let g_gamma = z.row_iter().map(|row| -scale * row.sum()).collect();
    let g_rho = residual.row_iter().map(|row| scale * row.sum()).collect();
    Ok((
        residual.norm_squared() / e,
        EquivalentParams {
            b: g_b,
            gamma: g_gamma,
            rho: g_rho,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduce::TieLine;

    fn tie(a: usize, b: usize) -> TieLine {
        TieLine {
            from_zone: a,
            to_zone: b,
            crossings: vec![],
        }
    }

    #[test]
    fn exact_targets_give_zero_loss_and_gradient() {
        let rn = ReducedNetwork::new(3, 0, vec![tie(0, 1), tie(0, 2), tie(1, 2)]).unwrap();
        let params = EquivalentParams {
            b: vec![4.0, 6.0, 9.0],
            gamma: vec![0.01, -0.03],
            rho: vec![0.002, 0.0, -0.004],
        };
        let inputs = DMatrix::from_row_slice(2, 3, &[0.5, -0.2, 1.0, -0.3, 0.4, 0.1]);
        let targets = predict(&rn, &params, &inputs).unwrap();
        let data = Dataset::new(inputs, targets).unwrap();
        let (l, g) = loss_and_grad(&rn, &params, &data).unwrap();
        assert!(l < 1e-28);
        assert!(g.pack().iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn single_tie_residual() {
        let rn = ReducedNetwork::new(2, 0, vec![tie(0, 1)]).unwrap();
        let params = EquivalentParams {
            b: vec![10.0],
            gamma: vec![0.0],
            rho: vec![0.0],
        };
        // Flow is -P = 0.5; target 0.2 leaves residual 0.3.
        let data = Dataset::new(
            DMatrix::from_row_slice(1, 1, &[-0.5]),
            DMatrix::from_row_slice(1, 1, &[0.2]),
        )
        .unwrap();
        let (l, g) = loss_and_grad(&rn, &params, &data).unwrap();
        assert!((l - 0.09).abs() < 1e-15);
        assert!((g.rho[0] - 0.6).abs() < 1e-15);
        // Radial: flows do not depend on b.
        assert!(g.b[0].abs() < 1e-15);
    }

    #[test]
    fn empty_dataset_rejected() {
        let rn = ReducedNetwork::new(2, 0, vec![tie(0, 1)]).unwrap();
        let data = Dataset::new(DMatrix::zeros(1, 0), DMatrix::zeros(1, 0)).unwrap();
        let params = EquivalentParams {
            b: vec![1.0],
            gamma: vec![0.0],
            rho: vec![0.0],
        };
        assert!(matches!(loss(&rn, &params, &data), Err(Error::EmptyDataset)));
    }
}
