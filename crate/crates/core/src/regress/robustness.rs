//! Perturbation robustness: append a noise indicator or a synthetic region,
//! rerun the whole chain, and compare the surviving weights.
//!
//! Autoencoder features have no fixed identity across runs, so each baseline
//! feature is matched to the rerun feature whose signed attribution vector
//! has the largest absolute cosine similarity with its own.

use std::collections::HashMap;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{FlowPair, IndicatorPanel, MortalityVector};
use crate::error::{Error, Result};
use crate::pipeline::chain::{run_chain, ChainConfig, ChainOutput};
use crate::rng::indexed_stream;

/// Two candidate matches closer than this in |cosine| make a trial ambiguous.
pub const AMBIGUITY_MARGIN: f64 = 0.05;
pub const NOISE_COLUMN: &str = "robustness_noise";
pub const NOISE_REGION: &str = "ROBUSTNESS_REGION";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialKind {
    NoiseColumn,
    NoiseRegion,
}

impl TrialKind {
    pub fn label(self) -> &'static str {
        match self {
            TrialKind::NoiseColumn => "noise_column",
            TrialKind::NoiseRegion => "noise_region",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatch {
    /// Column index in the baseline feature matrix (intercept = 0).
    pub baseline_column: usize,
    pub trial_column: usize,
    pub cosine: f64,
    /// `|cos|` of the runner-up candidate, if any.
    pub runner_up: Option<f64>,
    pub baseline_weight: f64,
    /// Sign-aligned trial weight.
    pub trial_weight: f64,
    pub relative_change: f64,
}

impl FeatureMatch {
    pub fn ambiguous(&self) -> bool {
        self.runner_up
            .is_some_and(|r| self.cosine.abs() - r < AMBIGUITY_MARGIN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub kind: TrialKind,
    pub index: usize,
    pub matches: Vec<FeatureMatch>,
    /// Largest relative weight change; `None` when any match is ambiguous.
    pub max_perturbation: Option<f64>,
}

impl TrialOutcome {
    pub fn ambiguous(&self) -> bool {
        self.max_perturbation.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub trials: Vec<TrialOutcome>,
    /// Maximum over all matched trials.
    pub max_perturbation: Option<f64>,
}

impl RobustnessReport {
    pub fn lines(&self) -> Vec<String> {
        let mut out = vec!["trial,kind,max_perturbation".to_string()];
        for t in &self.trials {
            let value = t
                .max_perturbation
                .map(crate::linalg::fmt_f64)
                .unwrap_or_else(|| "ambiguous".into());
            out.push(format!("{},{},{value}", t.index, t.kind.label()));
        }
        out
    }
}

fn by_name(names: &[String], v: &DVector<f64>) -> HashMap<String, f64> {
    names.iter().cloned().zip(v.iter().copied()).collect()
}

fn cosine(a: &HashMap<String, f64>, b: &HashMap<String, f64>) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (k, x) in a {
        if let Some(y) = b.get(k) {
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

fn selected_weight(run: &ChainOutput, column: usize) -> f64 {
    match run.selection.kept.iter().position(|&c| c == column) {
        Some(pos) => run.selection.fit.a[pos + 1],
        None => run.fit.a[column],
    }
}

/// Matches every surviving baseline feature to a trial feature and measures
/// the relative change of its selected weight.
pub fn compare_runs(baseline: &ChainOutput, trial: &ChainOutput, kind: TrialKind, index: usize) -> TrialOutcome {
    let base_names = &baseline.extracted.standardize_report.kept;
    let trial_names = &trial.extracted.standardize_report.kept;
    let trial_vecs: Vec<HashMap<String, f64>> = trial
        .extracted
        .signed_attributions
        .iter()
        .map(|v| by_name(trial_names, v))
        .collect();
    let matches: Vec<FeatureMatch> = baseline
        .selection
        .kept
        .iter()
        .enumerate()
        .map(|(pos, &col)| {
            let base_vec = by_name(base_names, &baseline.extracted.signed_attributions[col - 1]);
            let mut scored: Vec<(usize, f64)> = trial_vecs
                .iter()
                .enumerate()
                .map(|(c, v)| (c + 1, cosine(&base_vec, v)))
                .collect();
            scored.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
            let (trial_column, cos) = scored[0];
            let runner_up = scored.get(1).map(|s| s.1.abs());
            let baseline_weight = baseline.selection.fit.a[pos + 1];
            let sign = if cos < 0.0 { -1.0 } else { 1.0 };
            let trial_weight = sign * selected_weight(trial, trial_column);
            FeatureMatch {
                baseline_column: col,
                trial_column,
                cosine: cos,
                runner_up,
                baseline_weight,
                trial_weight,
                relative_change: (trial_weight - baseline_weight).abs() / baseline_weight.abs(),
            }
        })
        .collect();
    let max_perturbation = if matches.iter().any(FeatureMatch::ambiguous) {
        None
    } else {
        Some(matches.iter().map(|m| m.relative_change).fold(0.0, f64::max))
    };
    TrialOutcome {
        kind,
        index,
        matches,
        max_perturbation,
    }
}

/// Panel with one extra fully observed standard-normal indicator.
pub fn with_noise_column(panel: &IndicatorPanel, seed: u64, index: usize) -> Result<IndicatorPanel> {
    let mut rng = indexed_stream(seed, "robustness-column", index as u64);
    let column: Vec<Option<f64>> = (0..panel.n_regions())
        .map(|_| Some(StandardNormal.sample(&mut rng)))
        .collect();
    panel.with_column(NOISE_COLUMN, &column)
}

/// Inputs with one extra region: each kept indicator drawn as
/// `mean + std·N(0, 1)` of its observed values, mortality set to the baseline
/// model's prediction for that row, and no flows into or out of it.
pub fn with_noise_region(
    baseline: &ChainOutput,
    panel: &IndicatorPanel,
    z: &MortalityVector,
    flows: Option<&FlowPair>,
    seed: u64,
    index: usize,
) -> Result<(IndicatorPanel, MortalityVector, Option<FlowPair>)> {
    let rep = &baseline.extracted.standardize_report;
    let mut rng = indexed_stream(seed, "robustness-region", index as u64);
    let mut raw = vec![0.0; panel.n_indicators()];
    let mut row: Vec<Option<f64>> = vec![None; panel.n_indicators()];
    for (c, name) in rep.kept.iter().enumerate() {
        let j = panel
            .indicators()
            .iter()
            .position(|i| i == name)
            .ok_or_else(|| Error::Schema(format!("indicator {name} missing from panel")))?;
        let e: f64 = StandardNormal.sample(&mut rng);
        raw[j] = rep.means[c] + rep.stds[c] * e;
        row[j] = Some(raw[j]);
    }
    let region = format!("{NOISE_REGION}_{index}");
    let new_panel = panel.with_row(&region, &row)?;
    let b_row = baseline.extracted.project_row(panel.indicators(), &raw)?;
    let a = &baseline.fit.a;
    let z_new = b_row.dot(a);
    let mut regions = z.regions().to_vec();
    regions.push(region.clone());
    let zs = z.z().clone().insert_row(z.len(), z_new);
    let new_z = MortalityVector::from_scores(regions, zs)?;
    let new_flows = flows.map(|f| f.with_isolated_region(&region)).transpose()?;
    Ok((new_panel, new_z, new_flows))
}

/// Runs the baseline chain, then `n_trials` noise-column and `n_trials`
/// noise-region reruns, and reports the matched weight perturbations.
pub fn robustness_test(
    cfg: &ChainConfig,
    panel: &IndicatorPanel,
    z: &MortalityVector,
    flows: Option<&FlowPair>,
    n_trials: usize,
    seed: u64,
) -> Result<RobustnessReport> {
    let baseline = run_chain(panel, z, flows, cfg)?;
    robustness_from_baseline(&baseline, cfg, panel, z, flows, n_trials, seed)
}

/// As [`robustness_test`] with an already computed baseline run.
pub fn robustness_from_baseline(
    baseline: &ChainOutput,
    cfg: &ChainConfig,
    panel: &IndicatorPanel,
    z: &MortalityVector,
    flows: Option<&FlowPair>,
    n_trials: usize,
    seed: u64,
) -> Result<RobustnessReport> {
    let mut trials = Vec::with_capacity(2 * n_trials);
    for t in 0..n_trials {
        let p = with_noise_column(panel, seed, t)?;
        let run = run_chain(&p, z, flows, cfg)?;
        trials.push(compare_runs(baseline, &run, TrialKind::NoiseColumn, t));

        let (p, zz, ff) = with_noise_region(baseline, panel, z, flows, seed, t)?;
        let run = run_chain(&p, &zz, ff.as_ref(), cfg)?;
        trials.push(compare_runs(baseline, &run, TrialKind::NoiseRegion, t));
    }
    let max_perturbation = trials
        .iter()
        .filter_map(|t| t.max_perturbation)
        .reduce(f64::max);
    Ok(RobustnessReport {
        trials,
        max_perturbation,
    })
}
