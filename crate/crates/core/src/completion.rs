//! Low-rank completion of the indicator panel by soft-impute (iterative
//! singular value thresholding with warm starts along a penalty path).

use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::IndicatorPanel;
use crate::error::{Error, Result};

/// Relative singular-value tolerance used to report the rank of a completion.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionConfig {
    /// Strictly descending nuclear-norm penalties. `None` derives the default
    /// path from the data: 10 log-spaced values from 0.5·σ_max to 0.01·σ_max
    /// of the zero-filled observed matrix.
    pub lambda_path: Option<Vec<f64>>,
    pub max_rank: usize,
    pub tol: f64,
    /// Iteration cap per penalty value.
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            lambda_path: None,
            max_rank: usize::MAX,
            tol: 1e-5,
            max_iter: 200,
            seed: 0,
        }
    }
}

impl CompletionConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("completion tol must be positive, got {}", self.tol)));
        }
        if self.max_rank == 0 {
            return Err(Error::Config("completion max_rank must be at least 1".into()));
        }
        if let Some(path) = &self.lambda_path {
            if path.is_empty() || path.iter().any(|l| !(*l > 0.0)) {
                return Err(Error::Config("lambda_path must hold positive values".into()));
            }
            if path.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::Config("lambda_path must be strictly descending".into()));
            }
        }
        Ok(())
    }
}

/// The default penalty path for a zero-filled observed matrix.
pub fn default_lambda_path(observed: &DMatrix<f64>) -> Vec<f64> {
    let smax = observed.singular_values().max();
    let (hi, lo) = (0.5 * smax, 0.01 * smax);
    (0..10)
        .map(|i| hi * (lo / hi).powf(i as f64 / 9.0))
        .collect()
}

#[derive(Debug, Clone)]
pub struct CompletionResult {
    /// Observed entries copied from the input, missing ones from the low-rank fit.
    pub completed: DMatrix<f64>,
    /// The thresholded low-rank estimate itself.
    pub low_rank: DMatrix<f64>,
    /// Numerical rank of `low_rank` at [`RANK_TOL`].
    pub rank: usize,
    pub iterations: usize,
    /// RMSE of `low_rank` over the observed entries.
    pub train_rmse: f64,
    pub converged: bool,
    /// `(λ, objective)` after every iteration, for monotonicity checks.
    pub objective_trace: Vec<(f64, f64)>,
}

/// Number of singular values above `tol · σ_max`.
pub fn numerical_rank(matrix: &DMatrix<f64>, tol: f64) -> usize {
    if matrix.is_empty() {
        return 0;
    }
    let sv = matrix.singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// Singular value thresholding: shrinks every singular value by `lambda`
/// (floored at zero), keeping at most `max_rank` triplets. Returns the
/// reconstruction and its nuclear norm.
pub fn singular_value_threshold(m: &DMatrix<f64>, lambda: f64, max_rank: usize) -> Result<(DMatrix<f64>, f64)> {
    if m.is_empty() {
        return Err(Error::Domain("cannot threshold an empty matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix to threshold has non-finite entries".into()));
    }
    // Singular vectors of the shorter side, from its Gram matrix.
    let wide = m.nrows() < m.ncols();
    let gram = if wide { m * m.transpose() } else { m.transpose() * m };
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut kept = Vec::new();
    let mut nuclear = 0.0;
    for &i in order.iter().take(max_rank) {
        let sigma = eig.eigenvalues[i].max(0.0).sqrt();
        if sigma - lambda <= 0.0 {
            break;
        }
        nuclear += sigma - lambda;
        kept.push((i, (sigma - lambda) / sigma));
    }
    let dim = eig.eigenvalues.len();
    if kept.is_empty() {
        return Ok((DMatrix::zeros(m.nrows(), m.ncols()), 0.0));
    }
    let basis = DMatrix::from_fn(dim, kept.len(), |r, c| eig.eigenvectors[(r, kept[c].0)]);
    let scaled = DMatrix::from_fn(dim, kept.len(), |r, c| basis[(r, c)] * kept[c].1);
    let projector = &scaled * basis.transpose();
    let out = if wide { projector * m } else { m * projector };
    Ok((out, nuclear))
}

/// Soft-impute over the panel's observed entries. The panel is expected to be
/// standardized; observed values enter as given.
pub fn soft_impute(panel: &IndicatorPanel, cfg: &CompletionConfig) -> Result<CompletionResult> {
    cfg.validate()?;
    let mask = panel.mask();
    let observed = panel.values();
    let (n, d) = observed.shape();

    for i in 0..n {
        if !(0..d).any(|j| mask[(i, j)]) {
            return Err(Error::Completion(format!("region {} has no observed entry", panel.regions()[i])));
        }
    }
    for j in 0..d {
        if !(0..n).any(|i| mask[(i, j)]) {
            return Err(Error::Completion(format!(
                "indicator {} has no observed entry",
                panel.indicators()[j]
            )));
        }
    }

    if panel.is_fully_observed() {
        return Ok(CompletionResult {
            completed: observed.clone(),
            low_rank: observed.clone(),
            rank: numerical_rank(observed, RANK_TOL),
            iterations: 1,
            train_rmse: 0.0,
            converged: true,
            objective_trace: Vec::new(),
        });
    }

    let path = match &cfg.lambda_path {
        Some(p) => p.clone(),
        None => default_lambda_path(observed),
    };
    let n_obs = panel.observed_count() as f64;

    let fill = |estimate: &DMatrix<f64>| {
        DMatrix::from_fn(n, d, |i, j| if mask[(i, j)] { observed[(i, j)] } else { estimate[(i, j)] })
    };
    let observed_sq_error = |estimate: &DMatrix<f64>| {
        let mut s = 0.0;
        for j in 0..d {
            for i in 0..n {
                if mask[(i, j)] {
                    s += (observed[(i, j)] - estimate[(i, j)]).powi(2);
                }
            }
        }
        s
    };

    let mut z = DMatrix::zeros(n, d);
    let mut iterations = 0;
    let mut converged = true;
    let mut trace = Vec::new();
    for &lambda in &path {
        let mut lambda_converged = false;
        for _ in 0..cfg.max_iter {
            iterations += 1;
            let (next, nuclear) = singular_value_threshold(&fill(&z), lambda, cfg.max_rank)?;
            let change = (&next - &z).norm();
            let scale = z.norm().max(f64::MIN_POSITIVE);
            z = next;
            trace.push((lambda, 0.5 * observed_sq_error(&z) + lambda * nuclear));
            if change / scale < cfg.tol {
                lambda_converged = true;
                break;
            }
        }
        converged = lambda_converged;
    }

    let rank = numerical_rank(&z, RANK_TOL);
    let train_rmse = (observed_sq_error(&z) / n_obs).sqrt();
    Ok(CompletionResult {
        completed: fill(&z),
        low_rank: z,
        rank,
        iterations,
        train_rmse,
        converged,
        objective_trace: trace,
    })
}

/// Completed panel (all entries observed) carrying the input's labels.
pub fn completed_panel(panel: &IndicatorPanel, result: &CompletionResult) -> Result<IndicatorPanel> {
    IndicatorPanel::fully_observed(
        panel.regions().to_vec(),
        panel.indicators().to_vec(),
        result.completed.clone(),
    )
}
