//! DC power flow on a reduced network with coefficient and bias parameters:
//!
//! ```text
//! B' θ = P - γ,          B' = Aᵀ diag(b) A
//! p    = diag(b) A θ + ρ
//! ```
//!
//! [`DcModel`] factorizes `B'` once per parameter vector and is then shared
//! read-only across scenario evaluations.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};
use crate::linalg::PIVOT_RTOL;
use crate::reduce::{EquivalentParams, ReducedNetwork};

#[derive(Debug, Clone, PartialEq)]
pub struct DcFlowResult {
    pub flows: Vec<f64>,
    pub angles: Vec<f64>,
}

pub fn build_bprime(a: &DMatrix<f64>, b: &[f64]) -> DMatrix<f64> {
    let scaled = DMatrix::from_fn(a.nrows(), a.ncols(), |k, j| b[k] * a[(k, j)]);
    a.transpose() * scaled
}

/// LU factors of `B'` with a pivot check relative to the matrix scale.
#[derive(Debug, Clone)]
pub struct BprimeFactor {
    lu: LU<f64, Dyn, Dyn>,
    n: usize,
}

impl BprimeFactor {
    pub fn new(bprime: DMatrix<f64>) -> Result<Self> {
        let n = bprime.nrows();
        if n == 0 {
            return Ok(Self { lu: bprime.lu(), n });
        }
        let scale = bprime.amax();
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::SingularSystem(format!("B' has scale {scale}")));
        }
        let lu = bprime.lu();
        let min_pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
        if min_pivot <= PIVOT_RTOL * scale {
            return Err(Error::SingularSystem(format!(
                "pivot {min_pivot:.3e} below {PIVOT_RTOL:e} of scale {scale:.3e}"
            )));
        }
        Ok(Self { lu, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if self.n == 0 {
            return Ok(DVector::zeros(0));
        }
        self.lu
            .solve(rhs)
            .ok_or_else(|| Error::SingularSystem("LU solve failed".into()))
    }

    pub fn solve_many(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.n == 0 {
            return Ok(DMatrix::zeros(0, rhs.ncols()));
        }
        self.lu
            .solve(rhs)
            .ok_or_else(|| Error::SingularSystem("LU solve failed".into()))
    }
}

/// Solves `B' θ = rhs` without forming an inverse.
pub fn solve_angles(bprime: &DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != bprime.nrows() {
        return Err(Error::DimensionMismatch {
            context: "solve_angles",
            expected: bprime.nrows(),
            got: rhs.len(),
        });
    }
    let f = BprimeFactor::new(bprime.clone())?;
    Ok(f.solve(&DVector::from_column_slice(rhs))?.iter().copied().collect())
}

/// Reduced DC model with a cached factorization for one parameter vector.
#[derive(Debug, Clone)]
pub struct DcModel<'a> {
    pub rn: &'a ReducedNetwork,
    pub params: EquivalentParams,
    factor: BprimeFactor,
}

impl<'a> DcModel<'a> {
    pub fn new(rn: &'a ReducedNetwork, params: EquivalentParams) -> Result<Self> {
        params.check_shape(rn)?;
        let factor = BprimeFactor::new(build_bprime(&rn.incidence, &params.b))?;
        Ok(Self { rn, params, factor })
    }

    pub fn factor(&self) -> &BprimeFactor {
        &self.factor
    }

    pub fn flows(&self, p_r: &[f64]) -> Result<DcFlowResult> {
        let n = self.rn.zone_count - 1;
        if p_r.len() != n {
            return Err(Error::DimensionMismatch {
                context: "dc_flows P_R",
                expected: n,
                got: p_r.len(),
            });
        }
        let rhs = DVector::from_iterator(n, p_r.iter().zip(&self.params.gamma).map(|(p, g)| p - g));
        let theta = self.factor.solve(&rhs)?;
        let diff = &self.rn.incidence * &theta;
        let flows = diff
            .iter()
            .zip(&self.params.b)
            .zip(&self.params.rho)
            .map(|((d, b), r)| b * d + r)
            .collect();
        Ok(DcFlowResult {
            flows,
            angles: theta.iter().copied().collect(),
        })
    }

    /// `Φ = diag(b) A B'⁻¹`, computed as the transpose of `B'⁻¹ Aᵀ diag(b)`.
    pub fn ptdf(&self) -> Result<DMatrix<f64>> {
        let a = &self.rn.incidence;
        let b = &self.params.b;
        let at_b = DMatrix::from_fn(a.ncols(), a.nrows(), |j, k| a[(k, j)] * b[k]);
        Ok(self.factor.solve_many(&at_b)?.transpose())
    }
}

pub fn dc_flows(rn: &ReducedNetwork, params: &EquivalentParams, p_r: &[f64]) -> Result<DcFlowResult> {
    DcModel::new(rn, params.clone())?.flows(p_r)
}

pub fn ptdf_matrix(rn: &ReducedNetwork, b: &[f64]) -> Result<DMatrix<f64>> {
    let params = EquivalentParams {
        b: b.to_vec(),
        ..EquivalentParams::zeros_for(rn)
    };
    DcModel::new(rn, params)?.ptdf()
}
