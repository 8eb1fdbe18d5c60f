//! Regression of standardized log mortality on extracted features: plain OLS,
//! the flow-rectified model fitted jointly by least squares, p-value
//! feature selection, fixed-point prediction, bootstrap comparison and the
//! perturbation robustness protocol.

pub mod bootstrap;
pub mod fixed_point;
pub mod flow;
pub mod robustness;
pub mod stats;

use nalgebra::{DMatrix, DVector};

use crate::data::{check_same_regions, FeatureMatrix, FlowPair, KernelCoefficients, MortalityVector};
use crate::error::{Error, Result};
use crate::linalg::{fmt_f64, least_squares};

pub use bootstrap::{bootstrap_cv, BootstrapResult, MseSummary, Replicate};
pub use fixed_point::{solve_fixed_point, FixedPoint, FixedPointOptions};
pub use flow::{build_flow_design, flow_jacobian, flow_operator, FlowDesign};
pub use robustness::{robustness_test, RobustnessReport, TrialKind, TrialOutcome};

/// Default significance threshold for feature selection.
pub const P_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Columns of the feature matrix this fit used (intercept first).
    pub names: Vec<String>,
    /// One weight per feature-matrix column.
    pub a: DVector<f64>,
    /// Present for the rectified model.
    pub kernel: Option<KernelCoefficients>,
    pub residuals: DVector<f64>,
    /// Two-sided t-test p-value per feature column, intercept excluded.
    pub p_values: Vec<f64>,
    /// p-values of the kernel coefficients (1 for terms with an all-zero design column).
    pub kernel_p_values: Option<Vec<f64>>,
    pub rss: f64,
    pub df: usize,
}

impl FitResult {
    /// `name value` lines: feature weights, then kernel coefficients if present.
    pub fn coefficient_lines(&self) -> Vec<String> {
        let mut lines: Vec<String> = self
            .names
            .iter()
            .zip(self.a.iter())
            .map(|(n, v)| format!("{n} {}", fmt_f64(*v)))
            .collect();
        if let Some(k) = &self.kernel {
            lines.extend(
                KernelCoefficients::NAMES
                    .iter()
                    .zip(k.to_array())
                    .map(|(n, v)| format!("{n} {}", fmt_f64(v))),
            );
        }
        lines
    }
}

/// Two-sided t-test p-values for every design coefficient, with
/// `σ̂² = rss / (n − p)` and standard errors from `σ̂²(DᵀD)⁻¹`.
pub fn coefficient_p_values(
    coefficients: &DVector<f64>,
    unscaled_covariance: &DMatrix<f64>,
    rss: f64,
    n: usize,
) -> Result<Vec<f64>> {
    let p = coefficients.len();
    if n <= p {
        return Err(Error::Domain(format!(
            "p-values need positive residual degrees of freedom ({n} observations, {p} coefficients)"
        )));
    }
    let df = (n - p) as f64;
    let sigma2 = rss / df;
    Ok((0..p)
        .map(|j| {
            let se = (sigma2 * unscaled_covariance[(j, j)]).max(0.0).sqrt();
            let coef = coefficients[j];
            if coef == 0.0 {
                return 1.0;
            }
            if se == 0.0 {
                return 0.0;
            }
            stats::student_t_two_sided(coef / se, df)
        })
        .collect())
}

/// Recomputes the feature p-values of `fit` from the data (intercept excluded).
pub fn p_values(fit: &FitResult, b: &FeatureMatrix, z: &MortalityVector) -> Result<Vec<f64>> {
    let design = b.matrix();
    let ls = least_squares(design, z.z(), b.names())?;
    let all = coefficient_p_values(&fit.a, &ls.unscaled_covariance, fit.rss, design.nrows())?;
    Ok(all[1..].to_vec())
}

fn check_inputs(b: &FeatureMatrix, z: &MortalityVector) -> Result<()> {
    check_same_regions(b.regions(), z.regions(), "regression")?;
    if b.n_regions() <= b.matrix().ncols() {
        return Err(Error::Degenerate(format!(
            "{} regions cannot support {} regression columns",
            b.n_regions(),
            b.matrix().ncols()
        )));
    }
    Ok(())
}

/// `min ‖z − Ba‖₂` by QR.
pub fn ols_fit(b: &FeatureMatrix, z: &MortalityVector) -> Result<FitResult> {
    check_inputs(b, z)?;
    let ls = least_squares(b.matrix(), z.z(), b.names())?;
    let n = b.n_regions();
    let p_all = coefficient_p_values(&ls.coefficients, &ls.unscaled_covariance, ls.rss, n)?;
    Ok(FitResult {
        names: b.names().to_vec(),
        df: n - ls.coefficients.len(),
        a: ls.coefficients,
        kernel: None,
        residuals: ls.residuals,
        p_values: p_all[1..].to_vec(),
        kernel_p_values: None,
        rss: ls.rss,
    })
}

/// Joint design `[B | Φ]` with the all-zero flow columns removed; returns the
/// design and the kernel index of each retained flow column.
pub(crate) fn rectified_design(b: &DMatrix<f64>, phi: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>) {
    let active: Vec<usize> = (0..phi.ncols()).filter(|&c| phi.column(c).iter().any(|&v| v != 0.0)).collect();
    let mut design = DMatrix::zeros(b.nrows(), b.ncols() + active.len());
    design.columns_mut(0, b.ncols()).copy_from(b);
    for (k, &c) in active.iter().enumerate() {
        design.set_column(b.ncols() + k, &phi.column(c));
    }
    (design, active)
}

/// Jointly fits weights and kernel coefficients at the observed `z`:
/// `min ‖z − Ba − Φ(z)κ‖₂`.
pub fn fit_rectified(b: &FeatureMatrix, z: &MortalityVector, flows: &FlowPair) -> Result<FitResult> {
    check_inputs(b, z)?;
    let phi = build_flow_design(z, flows)?;
    let (design, active) = rectified_design(b.matrix(), &phi.phi);
    let mut names = b.names().to_vec();
    names.extend(active.iter().map(|&c| KernelCoefficients::NAMES[c].to_string()));
    let n = b.n_regions();
    if n <= design.ncols() {
        return Err(Error::Degenerate(format!(
            "{n} regions cannot support {} rectified regression columns",
            design.ncols()
        )));
    }
    let ls = least_squares(&design, z.z(), &names)?;
    let p_all = coefficient_p_values(&ls.coefficients, &ls.unscaled_covariance, ls.rss, n)?;
    let k = b.matrix().ncols();
    let mut kappa = [0.0; 8];
    let mut kernel_p = vec![1.0; 8];
    for (idx, &c) in active.iter().enumerate() {
        kappa[c] = ls.coefficients[k + idx];
        kernel_p[c] = p_all[k + idx];
    }
    Ok(FitResult {
        names: b.names().to_vec(),
        a: ls.coefficients.rows(0, k).into_owned(),
        kernel: Some(KernelCoefficients::from_slice(&kappa)?),
        residuals: ls.residuals,
        p_values: p_all[1..k].to_vec(),
        kernel_p_values: Some(kernel_p),
        rss: ls.rss,
        df: n - design.ncols(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub features: FeatureMatrix,
    pub fit: FitResult,
    /// Indices (into the input feature matrix) of the surviving feature columns.
    pub kept: Vec<usize>,
    pub warning: Option<String>,
}

/// Drops feature columns with p-value above `threshold` and refits the same
/// model (rectified when `flows` is given). The intercept always stays.
pub fn select_features(
    b: &FeatureMatrix,
    z: &MortalityVector,
    flows: Option<&FlowPair>,
    fit: &FitResult,
    threshold: f64,
) -> Result<Selection> {
    if fit.p_values.len() != b.n_features() {
        return Err(Error::Shape(format!(
            "fit has {} p-values for {} features",
            fit.p_values.len(),
            b.n_features()
        )));
    }
    let kept: Vec<usize> = fit
        .p_values
        .iter()
        .enumerate()
        .filter(|(_, &p)| p <= threshold)
        .map(|(j, _)| j + 1)
        .collect();
    let warning = kept
        .is_empty()
        .then(|| format!("no feature has p ≤ {threshold}; returning the intercept-only model"));
    let reduced = b.select_columns(&kept)?;
    let refit = match flows {
        Some(f) => fit_rectified(&reduced, z, f)?,
        None => ols_fit(&reduced, z)?,
    };
    Ok(Selection {
        features: reduced,
        fit: refit,
        kept,
        warning,
    })
}

/// Solves `z = Ba + M(z)z` from the initial guess `z0`.
pub fn predict_fixed_point(
    b: &FeatureMatrix,
    a: &DVector<f64>,
    kernel: &KernelCoefficients,
    flows: &FlowPair,
    z0: &DVector<f64>,
    opts: &FixedPointOptions,
) -> Result<FixedPoint> {
    check_same_regions(b.regions(), flows.regions(), "prediction")?;
    if a.len() != b.matrix().ncols() {
        return Err(Error::Shape(format!("{} weights for {} columns", a.len(), b.matrix().ncols())));
    }
    let base = b.matrix() * a;
    solve_fixed_point(&base, kernel, flows, z0, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionContribution {
    pub region: String,
    /// Standardized value per surviving feature (intercept excluded).
    pub values: Vec<f64>,
}

/// Feature values of the requested regions, read off the (standardized) design.
pub fn region_contributions(b: &FeatureMatrix, regions: &[String]) -> Result<Vec<RegionContribution>> {
    regions
        .iter()
        .map(|r| {
            let i = b
                .regions()
                .iter()
                .position(|x| x == r)
                .ok_or_else(|| Error::Lookup(r.clone()))?;
            Ok(RegionContribution {
                region: r.clone(),
                values: b.matrix().row(i).iter().skip(1).copied().collect(),
            })
        })
        .collect()
}
