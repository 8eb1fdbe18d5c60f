//! Linear soft-margin SVM used to check that completed indicators separate
//! developed from developing regions.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::completion::CompletionResult;
use crate::data::{IndicatorPanel, LabelVector};
use crate::error::{Error, Result};
use crate::rng;

/// Required accuracy of the completed arm.
pub const PASS_ACCURACY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub w: DVector<f64>,
    pub b: f64,
    pub lambda: f64,
    /// Training objective of the returned iterate.
    pub objective: f64,
    /// Objective of the averaged iterate after each epoch.
    pub history: Vec<f64>,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        x.iter().zip(self.w.iter()).map(|(a, b)| a * b).sum::<f64>() - self.b
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        if self.decision(x) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

/// `(1/N) Σ max(0, 1 − yᵢ(wᵀxᵢ − b)) + λ‖w‖²`.
pub fn hinge_objective(w: &DVector<f64>, b: f64, x: &DMatrix<f64>, y: &[f64], lambda: f64) -> f64 {
    let n = x.nrows();
    let scores = x * w;
    let hinge: f64 = (0..n).map(|i| (1.0 - y[i] * (scores[i] - b)).max(0.0)).sum();
    hinge / n as f64 + lambda * w.norm_squared()
}

/// Epoch-shuffled stochastic subgradient descent with step `1/(2λt)` (the
/// objective is `2λ`-strongly convex in `w`) and weighted iterate averaging.
/// `w` is projected onto the ball of radius `1/√λ`, which contains the optimum.
pub fn train_svm(x: &DMatrix<f64>, y: &[f64], lambda: f64, epochs: usize, seed: u64) -> Result<LinearModel> {
    let (n, d) = x.shape();
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    if y.len() != n || n == 0 {
        return Err(Error::Shape(format!("{n} rows but {} labels", y.len())));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::Domain("SVM training needs both classes".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("SVM input rows must be finite".into()));
    }
    if epochs == 0 {
        return Err(Error::Domain("epochs must be at least 1".into()));
    }

    let data = rows(x);
    let radius = 1.0 / lambda.sqrt();
    let max_norm = data
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    let bias_bound = 1.0 + radius * max_norm;

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut w_avg = vec![0.0; d];
    let mut b_avg = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(epochs);
    let mut t = 0usize;

    for epoch in 0..epochs {
        let mut shuffle_rng = rng::indexed_stream(seed, "svm-shuffle", epoch as u64);
        order.shuffle(&mut shuffle_rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (2.0 * lambda * t as f64);
            let xi = &data[i];
            let margin = y[i] * (xi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - b);
            let shrink = 1.0 - 2.0 * eta * lambda;
            for v in w.iter_mut() {
                *v *= shrink;
            }
            if margin < 1.0 {
                for (v, a) in w.iter_mut().zip(xi) {
                    *v += eta * y[i] * a;
                }
                b -= eta * y[i];
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                let s = radius / norm;
                for v in w.iter_mut() {
                    *v *= s;
                }
            }
            b = b.clamp(-bias_bound, bias_bound);

            let rho = 2.0 / (t as f64 + 1.0);
            for (a, v) in w_avg.iter_mut().zip(&w) {
                *a += rho * (v - *a);
            }
            b_avg += rho * (b - b_avg);
        }
        let wv = DVector::from_column_slice(&w_avg);
        history.push(hinge_objective(&wv, b_avg, x, y, lambda));
    }

    let w = DVector::from_vec(w_avg);
    let objective = hinge_objective(&w, b_avg, x, y, lambda);
    Ok(LinearModel {
        w,
        b: b_avg,
        lambda,
        objective,
        history,
    })
}

/// Fraction of rows whose predicted sign matches the label; `sign(0) = +1`.
pub fn accuracy(model: &LinearModel, x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::Degenerate("accuracy on an empty evaluation set".into()));
    }
    if y.len() != x.nrows() || x.ncols() != model.w.len() {
        return Err(Error::Shape(format!(
            "evaluation set {:?} with {} labels for a {}-feature model",
            x.shape(),
            y.len(),
            model.w.len()
        )));
    }
    let hits = rows(x)
        .iter()
        .zip(y)
        .filter(|(r, &yi)| model.predict(r) == yi)
        .count();
    Ok(hits as f64 / x.nrows() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of each class held out for evaluation.
    pub holdout_fraction: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            epochs: 50,
            seed: 0,
            holdout_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub acc_raw: f64,
    pub acc_completed: f64,
    pub passed: bool,
    pub n_train: usize,
    pub n_test: usize,
    pub raw_model: LinearModel,
    pub completed_model: LinearModel,
    /// Row indices of the held-out set, ascending.
    pub test_rows: Vec<usize>,
}

/// Stratified train/test split; each class contributes `holdout_fraction` of its rows
/// (at least one) to the test set.
pub fn stratified_split(y: &[f64], holdout_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, class) in [1.0, -1.0].iter().enumerate() {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == *class).collect();
        idx.shuffle(&mut rng::indexed_stream(seed, "svm-split", c as u64));
        let k = ((idx.len() as f64 * holdout_fraction).round() as usize).clamp(1, idx.len().saturating_sub(1).max(1));
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn pick_rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

/// Trains one SVM on the zero-filled raw panel and one on the completed panel
/// (same split, seed and λ) and compares held-out accuracies.
pub fn completion_consistency_check(
    raw: &IndicatorPanel,
    completed: &CompletionResult,
    labels: &LabelVector,
    cfg: &SvmConfig,
) -> Result<ConsistencyReport> {
    if labels.regions() != raw.regions() {
        return Err(Error::Schema("labels and panel list different regions".into()));
    }
    consistency_check_matrices(raw.values(), &completed.completed, labels.y(), cfg)
}

/// As [`completion_consistency_check`] on bare matrices; `raw` is already zero-filled.
pub fn consistency_check_matrices(
    raw: &DMatrix<f64>,
    completed: &DMatrix<f64>,
    y: &[f64],
    cfg: &SvmConfig,
) -> Result<ConsistencyReport> {
    if completed.shape() != raw.shape() {
        return Err(Error::Shape("completed matrix does not match the raw panel".into()));
    }
    if y.len() != raw.nrows() {
        return Err(Error::Shape(format!("{} labels for {} rows", y.len(), raw.nrows())));
    }
    let (train, test) = stratified_split(y, cfg.holdout_fraction, cfg.seed);
    let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let y_test: Vec<f64> = test.iter().map(|&i| y[i]).collect();

    let arm = |x: &DMatrix<f64>| -> Result<(LinearModel, f64)> {
        let model = train_svm(&pick_rows(x, &train), &y_train, cfg.lambda, cfg.epochs, cfg.seed)?;
        let acc = accuracy(&model, &pick_rows(x, &test), &y_test)?;
        Ok((model, acc))
    };
    let (raw_model, acc_raw) = arm(raw)?;
    let (completed_model, acc_completed) = arm(completed)?;
    Ok(ConsistencyReport {
        acc_raw,
        acc_completed,
        passed: acc_completed >= PASS_ACCURACY && acc_completed >= acc_raw,
        n_train: train.len(),
        n_test: test.len(),
        raw_model,
        completed_model,
        test_rows: test,
    })
}
