//! Flow kernel `M(z)` and its linear expansion in the kernel coefficients.
//!
//! `M_ij = (α₀ + α₁zᵢ + α₂zⱼ + α₃zᵢzⱼ)·m_ij + (β₀ + β₁zᵢ + β₂zⱼ + β₃zᵢzⱼ)·t_ij`,
//! so `(M(z)z)ᵢ = Φ(z)ᵢ · κ` with the eight columns of `Φ` below.

use nalgebra::{DMatrix, DVector};

use crate::data::{check_same_regions, FlowPair, KernelCoefficients, MortalityVector};
use crate::error::{Error, Result};

/// `n × 8` expansion. Column `c < 4` pairs the polynomial factor
/// `{1, zᵢ, zⱼ, zᵢzⱼ}[c]` with migration, columns `4..8` with trade:
/// `Φ[i][c] = Σⱼ f_c(zᵢ, zⱼ)·g_c(m_ij, t_ij)·zⱼ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDesign {
    pub phi: DMatrix<f64>,
}

impl FlowDesign {
    pub fn column_names() -> Vec<String> {
        KernelCoefficients::NAMES.iter().map(|s| s.to_string()).collect()
    }

    /// `M(z)z = Φκ`.
    pub fn apply(&self, kernel: &KernelCoefficients) -> DVector<f64> {
        &self.phi * DVector::from_column_slice(&kernel.to_array())
    }
}

pub(crate) fn flow_design_from(z: &DVector<f64>, flows: &FlowPair) -> Result<FlowDesign> {
    let n = z.len();
    if flows.regions().len() != n {
        return Err(Error::Schema(format!(
            "flows cover {} regions, mortality {n}",
            flows.regions().len()
        )));
    }
    let z2 = z.component_mul(z);
    let mut phi = DMatrix::zeros(n, 8);
    for (offset, mat) in [(0, flows.migration()), (4, flows.trade())] {
        let mz = mat * z;
        let mz2 = mat * &z2;
        for i in 0..n {
            phi[(i, offset)] = mz[i];
            phi[(i, offset + 1)] = z[i] * mz[i];
            phi[(i, offset + 2)] = mz2[i];
            phi[(i, offset + 3)] = z[i] * mz2[i];
        }
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("flow design overflowed".into()));
    }
    Ok(FlowDesign { phi })
}

pub fn build_flow_design(z: &MortalityVector, flows: &FlowPair) -> Result<FlowDesign> {
    check_same_regions(z.regions(), flows.regions(), "flow design")?;
    flow_design_from(z.z(), flows)
}

/// Dense `M(z)`.
pub fn flow_operator(z: &DVector<f64>, flows: &FlowPair, kernel: &KernelCoefficients) -> Result<DMatrix<f64>> {
    let n = z.len();
    if flows.regions().len() != n {
        return Err(Error::Schema("flow operator: region count mismatch".into()));
    }
    let (a, b) = (kernel.alpha, kernel.beta);
    let (m, t) = (flows.migration(), flows.trade());
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let (zi, zj) = (z[i], z[j]);
        (a[0] + a[1] * zi + a[2] * zj + a[3] * zi * zj) * m[(i, j)]
            + (b[0] + b[1] * zi + b[2] * zj + b[3] * zi * zj) * t[(i, j)]
    }))
}

/// Jacobian of `z ↦ M(z)z`.
pub fn flow_jacobian(z: &DVector<f64>, flows: &FlowPair, kernel: &KernelCoefficients) -> Result<DMatrix<f64>> {
    let n = z.len();
    if flows.regions().len() != n {
        return Err(Error::Schema("flow jacobian: region count mismatch".into()));
    }
    let (a, b) = (kernel.alpha, kernel.beta);
    let (m, t) = (flows.migration(), flows.trade());
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        let zi = z[i];
        let mut diag = 0.0;
        for k in 0..n {
            let zk = z[k];
            if k != i {
                jac[(i, k)] = (a[0] + a[1] * zi + 2.0 * a[2] * zk + 2.0 * a[3] * zi * zk) * m[(i, k)]
                    + (b[0] + b[1] * zi + 2.0 * b[2] * zk + 2.0 * b[3] * zi * zk) * t[(i, k)];
            }
            diag += (a[1] + a[3] * zk) * m[(i, k)] * zk + (b[1] + b[3] * zk) * t[(i, k)] * zk;
        }
        jac[(i, i)] += diag;
    }
    Ok(jac)
}
