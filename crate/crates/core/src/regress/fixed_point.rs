//! Generative reading of the rectified model: solve `z = Ba + M(z)z`.

use nalgebra::DVector;

use super::flow::{flow_design_from, flow_jacobian};
use crate::data::{FlowPair, KernelCoefficients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Weight of the new iterate: `z ← (1 − δ)z + δ·F(z)`.
    pub damping: f64,
    /// Stop once `‖Δz‖∞` falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub z: DVector<f64>,
    pub iterations: usize,
    /// Spectral radius of the Jacobian of `z ↦ M(z)z` at the solution.
    pub spectral_radius: f64,
}

/// Damped iteration `z ← (1 − δ)z + δ(base + M(z)z)` from `z0`, followed by
/// an a posteriori contraction check at the solution.
pub fn solve_fixed_point(
    base: &DVector<f64>,
    kernel: &KernelCoefficients,
    flows: &FlowPair,
    z0: &DVector<f64>,
    opts: &FixedPointOptions,
) -> Result<FixedPoint> {
    let n = base.len();
    if z0.len() != n || flows.regions().len() != n {
        return Err(Error::Shape(format!(
            "fixed point: base {n}, initial guess {}, flows {}",
            z0.len(),
            flows.regions().len()
        )));
    }
    if kernel.is_zero() || flows.is_zero() {
        return Ok(FixedPoint {
            z: base.clone(),
            iterations: 1,
            spectral_radius: 0.0,
        });
    }
    let kappa = DVector::from_column_slice(&kernel.to_array());
    let damping = opts.damping;
    let mut z = z0.clone();
    let mut converged = None;
    for it in 1..=opts.max_iter {
        let image = base + flow_design_from(&z, flows)?.phi * &kappa;
        let next = &z * (1.0 - damping) + image * damping;
        let step = (&next - &z).amax();
        z = next;
        let norm = z.amax();
        if !norm.is_finite() || norm > 1e12 {
            return Err(Error::NonContraction {
                iterations: it,
                last_norm: norm,
            });
        }
        if step < opts.tol {
            converged = Some(it);
            break;
        }
    }
    let Some(iterations) = converged else {
        return Err(Error::NonContraction {
            iterations: opts.max_iter,
            last_norm: z.amax(),
        });
    };
    let jac = flow_jacobian(&z, flows, kernel)?;
    let spectral_radius = jac
        .schur()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0f64, f64::max);
    if !(spectral_radius < 1.0) {
        return Err(Error::NonContraction {
            iterations,
            last_norm: z.amax(),
        });
    }
    Ok(FixedPoint {
        z,
        iterations,
        spectral_radius,
    })
}
