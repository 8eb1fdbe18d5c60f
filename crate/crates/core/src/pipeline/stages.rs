//! Individual pipeline stages. Every stage reads its upstream results from
//! the artifacts already present in the output directory, so a stage can be
//! run alone or reuse cached outputs.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;

use crate::classify::{consistency_check_matrices, ConsistencyReport};
use crate::completion::{completed_panel, soft_impute};
use crate::data::{
    intersect_regions, load_flow_matrix, load_indicator_panel, load_labels, load_mortality, load_weekly,
    normalize_flows, normalize_mortality, standardize_columns, write_panel, write_text, FeatureMatrix, FlowPair,
    IndicatorPanel, LabelVector, MortalityVector, WeeklySeries,
};
use crate::error::{Error, Result};
use crate::linalg::fmt_f64;
use crate::pipeline::chain::{encode_completed, fit_and_select};
use crate::pipeline::config::PipelineConfig;
use crate::regress::{bootstrap_cv, region_contributions, robustness_test, FitResult, RobustnessReport};
use crate::spectral::detect_period;

pub const REGIONS_FILE: &str = "regions.txt";
pub const COMPLETED_FILE: &str = "completed.csv";
pub const COMPLETION_REPORT_FILE: &str = "completion_report.txt";
pub const SPECTRUM_FILE: &str = "spectrum.csv";
pub const PERIOD_FILE: &str = "period.csv";
pub const SVM_FILE: &str = "svm.txt";
pub const SVM_PLOT_FILE: &str = "svm_plot.csv";
pub const MODEL_FILE: &str = "autoencoder.bin";
pub const BIC_FILE: &str = "bic.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const OUT_FILE: &str = "out.txt";
pub const OUT_SELECTED_FILE: &str = "out_selected.txt";
pub const RESIDUAL_FILE: &str = "residual.txt";
pub const PVALUES_FILE: &str = "pvalues.csv";
pub const CONTRIBUTIONS_FILE: &str = "contributions.csv";
pub const BOOTSTRAP_FILE: &str = "bootstrap.csv";
pub const ROBUSTNESS_FILE: &str = "robustness.csv";
pub const REPORT_FILE: &str = "report.txt";
/// Label of the globally summed weekly series.
pub const GLOBAL_SERIES: &str = "GLOBAL";

pub fn feature_file(i: usize) -> String {
    format!("feature_{i}.csv")
}

/// Inputs restricted to the regions present in every region-indexed file.
#[derive(Debug, Clone)]
pub struct LoadedInputs {
    pub regions: Vec<String>,
    pub dropped: Vec<String>,
    pub panel: IndicatorPanel,
    pub z: MortalityVector,
    pub flows: Option<FlowPair>,
    pub weekly: Option<Vec<WeeklySeries>>,
    pub labels: Option<LabelVector>,
}

fn restrict(from: &[String], m: &DMatrix<f64>, to: &[String]) -> Result<DMatrix<f64>> {
    let pos: HashMap<&str, usize> = from.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
    let idx = to
        .iter()
        .map(|r| pos.get(r.as_str()).copied().ok_or_else(|| Error::Lookup(r.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])]))
}

pub fn load_inputs(cfg: &PipelineConfig) -> Result<LoadedInputs> {
    let inp = &cfg.inputs;
    let panel = load_indicator_panel(&inp.indicators)?;
    let raw_rates = load_mortality(&inp.mortality)?;
    let mortality_regions: Vec<String> = raw_rates.iter().map(|(r, _)| r.clone()).collect();
    let flows_raw = match (&inp.migration, &inp.trade) {
        (Some(m), Some(t)) => Some((load_flow_matrix(m)?, load_flow_matrix(t)?)),
        _ => None,
    };
    let mut lists: Vec<&[String]> = vec![panel.regions(), &mortality_regions];
    if let Some(((rm, _), (rt, _))) = &flows_raw {
        lists.push(rm);
        lists.push(rt);
    }
    let (regions, dropped) = intersect_regions(&lists);
    if regions.len() < 3 {
        return Err(Error::Validation(format!(
            "only {} regions are common to all inputs",
            regions.len()
        )));
    }
    let panel = panel.align_to(&regions)?;
    let keep: HashSet<&str> = regions.iter().map(String::as_str).collect();
    let rates: Vec<(String, f64)> = raw_rates.into_iter().filter(|(r, _)| keep.contains(r.as_str())).collect();
    let z = normalize_mortality(&rates, cfg.rate_floor)?.align_to(&regions)?;
    let flows = match flows_raw {
        Some(((rm, m), (rt, t))) => Some(normalize_flows(
            regions.clone(),
            &restrict(&rm, &m, &regions)?,
            &restrict(&rt, &t, &regions)?,
        )?),
        None => None,
    };
    let weekly = inp.weekly.as_ref().map(load_weekly).transpose()?;
    let labels = inp.labels.as_ref().map(load_labels).transpose()?;
    Ok(LoadedInputs {
        regions,
        dropped,
        panel,
        z,
        flows,
        weekly,
        labels,
    })
}

/// `regions.txt`: the kept and dropped regions.
pub fn write_regions(inputs: &LoadedInputs, out: &Path) -> Result<Vec<String>> {
    let lines = vec![
        format!("kept {}", inputs.regions.len()),
        format!("dropped {}", inputs.dropped.join(",")),
    ];
    write_text(out.join(REGIONS_FILE), &lines)?;
    Ok(vec![REGIONS_FILE.into()])
}

/// Completes the standardized panel; writes `completed.csv` and the report.
pub fn impute(cfg: &PipelineConfig, inputs: &LoadedInputs, out: &Path) -> Result<Vec<String>> {
    let (standardized, rep) = standardize_columns(&inputs.panel)?;
    let result = soft_impute(&standardized, &cfg.chain.completion)?;
    write_panel(out.join(COMPLETED_FILE), &completed_panel(&standardized, &result)?)?;
    let lines = vec![
        format!("rank = {}", result.rank),
        format!("train_rmse = {}", fmt_f64(result.train_rmse)),
        format!("iterations = {}", result.iterations),
        format!("converged = {}", result.converged),
        format!("indicators_kept = {}", rep.kept.len()),
        format!("indicators_dropped = {}", rep.dropped.join(",")),
        format!("observed_fraction = {}", fmt_f64(
            inputs.panel.observed_count() as f64 / (inputs.panel.n_regions() * inputs.panel.n_indicators()) as f64,
        )),
    ];
    write_text(out.join(COMPLETION_REPORT_FILE), &lines)?;
    Ok(vec![COMPLETED_FILE.into(), COMPLETION_REPORT_FILE.into()])
}

/// Spectrum of the globally summed series and of the configured regions.
/// `None` without weekly input.
pub fn spectrum(cfg: &PipelineConfig, inputs: &LoadedInputs, out: &Path, global_only: bool) -> Result<Option<Vec<String>>> {
    let Some(weekly) = &inputs.weekly else {
        return Ok(None);
    };
    let mut series = vec![WeeklySeries::new(GLOBAL_SERIES, WeeklySeries::global_sum(weekly)?.activity)?];
    if !global_only {
        for r in &cfg.spectrum_regions {
            let s = weekly
                .iter()
                .find(|s| &s.region == r)
                .ok_or_else(|| Error::Lookup(r.clone()))?;
            series.push(s.clone());
        }
    }
    let mut spec_lines = vec!["region,k,magnitude".to_string()];
    let mut period_lines = vec!["region,period_weeks,peak_k,peak_ratio".to_string()];
    for s in &series {
        let (spec, est) = detect_period(s, cfg.spectrum_min_k)?;
        spec_lines.extend(spec.magnitudes().map(|(k, m)| format!("{},{k},{}", s.region, fmt_f64(m))));
        period_lines.push(format!(
            "{},{},{},{}",
            s.region,
            fmt_f64(est.period_weeks),
            est.peak_k,
            fmt_f64(est.peak_ratio)
        ));
    }
    write_text(out.join(SPECTRUM_FILE), &spec_lines)?;
    write_text(out.join(PERIOD_FILE), &period_lines)?;
    Ok(Some(vec![SPECTRUM_FILE.into(), PERIOD_FILE.into()]))
}

/// SVM consistency check of the completed panel against the zero-filled
/// standardized one. `None` without labels.
pub fn validate(
    cfg: &PipelineConfig,
    inputs: &LoadedInputs,
    out: &Path,
) -> Result<Option<(ConsistencyReport, Vec<String>)>> {
    let Some(labels) = &inputs.labels else {
        return Ok(None);
    };
    let completed = load_indicator_panel(out.join(COMPLETED_FILE))?;
    let (standardized, _) = standardize_columns(&inputs.panel)?;
    if completed.regions() != standardized.regions() || completed.indicators() != standardized.indicators() {
        return Err(Error::Schema(format!(
            "{COMPLETED_FILE} does not match the current inputs; rerun impute"
        )));
    }
    let (regions, _) = intersect_regions(&[&inputs.regions, labels.regions()]);
    let labels = labels.align_to(&regions)?;
    let raw = standardized.align_to(&regions)?;
    let done = completed.align_to(&regions)?;
    let report = consistency_check_matrices(raw.values(), done.values(), labels.y(), &cfg.svm)?;
    let lines = vec![
        format!("acc_raw = {}", fmt_f64(report.acc_raw)),
        format!("acc_completed = {}", fmt_f64(report.acc_completed)),
        format!("passed = {}", report.passed),
        format!("n_train = {}", report.n_train),
        format!("n_test = {}", report.n_test),
    ];
    write_text(out.join(SVM_FILE), &lines)?;
    let test: HashSet<usize> = report.test_rows.iter().copied().collect();
    let mut plot = vec!["region,label,split,decision_raw,decision_completed".to_string()];
    for (i, r) in regions.iter().enumerate() {
        let xr: Vec<f64> = raw.values().row(i).iter().copied().collect();
        let xc: Vec<f64> = done.values().row(i).iter().copied().collect();
        plot.push(format!(
            "{r},{},{},{},{}",
            labels.y()[i],
            if test.contains(&i) { "test" } else { "train" },
            fmt_f64(report.raw_model.decision(&xr)),
            fmt_f64(report.completed_model.decision(&xc))
        ));
    }
    write_text(out.join(SVM_PLOT_FILE), &plot)?;
    Ok(Some((report, vec![SVM_FILE.into(), SVM_PLOT_FILE.into()])))
}

pub fn write_features(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let mut lines = vec![format!("region,{}", features.names().join(","))];
    for (i, r) in features.regions().iter().enumerate() {
        let row: Vec<String> = features.matrix().row(i).iter().map(|v| fmt_f64(*v)).collect();
        lines.push(format!("{r},{}", row.join(",")));
    }
    write_text(path, &lines)
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let panel = load_indicator_panel(path)?;
    if !panel.is_fully_observed() {
        return Err(Error::Schema(format!("{} has empty cells", path.display())));
    }
    FeatureMatrix::new(panel.regions().to_vec(), panel.indicators().to_vec(), panel.values().clone())
}

/// Trains the autoencoder on `completed.csv` and writes the model, the BIC
/// table, the feature matrix and one attribution file per component.
pub fn extract(cfg: &PipelineConfig, out: &Path) -> Result<Vec<String>> {
    let completed = load_indicator_panel(out.join(COMPLETED_FILE))?;
    let enc = encode_completed(completed.regions(), completed.values(), &cfg.chain)?;
    enc.autoencoder.model.save(out.join(MODEL_FILE))?;
    let chosen = enc.autoencoder.model.bottleneck();
    let mut bic_lines = vec!["k,loss,bic,chosen".to_string()];
    bic_lines.extend(enc.bic_table.iter().map(|e| {
        format!("{},{},{},{}", e.k, fmt_f64(e.loss), fmt_f64(e.bic), e.k == chosen)
    }));
    write_text(out.join(BIC_FILE), &bic_lines)?;
    write_features(&out.join(FEATURES_FILE), &enc.features)?;
    let mut files = vec![MODEL_FILE.to_string(), BIC_FILE.into(), FEATURES_FILE.into()];
    let names = completed.indicators();
    for (c, v) in enc.attributions.iter().enumerate() {
        let mut ranked: Vec<(usize, f64)> = v.iter().copied().enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let take = if cfg.top_m == 0 { ranked.len() } else { cfg.top_m };
        let mut lines = vec!["indicator,attribution".to_string()];
        lines.extend(ranked.iter().take(take).map(|(j, w)| format!("{},{}", names[*j], fmt_f64(*w))));
        let file = feature_file(c + 1);
        write_text(out.join(&file), &lines)?;
        files.push(file);
    }
    Ok(files)
}

fn features_for(inputs: &LoadedInputs, out: &Path) -> Result<FeatureMatrix> {
    let features = load_features(&out.join(FEATURES_FILE))?;
    if features.regions() != inputs.regions.as_slice() {
        return Err(Error::Schema(format!(
            "{FEATURES_FILE} does not match the current inputs; rerun extract-features"
        )));
    }
    Ok(features)
}

fn pvalue_lines(fit: &FitResult) -> Vec<String> {
    let mut lines = vec!["name,estimate,p_value".to_string()];
    for (j, p) in fit.p_values.iter().enumerate() {
        lines.push(format!("{},{},{}", fit.names[j + 1], fmt_f64(fit.a[j + 1]), fmt_f64(*p)));
    }
    if let (Some(k), Some(ps)) = (&fit.kernel, &fit.kernel_p_values) {
        for ((name, v), p) in crate::data::KernelCoefficients::NAMES.iter().zip(k.to_array()).zip(ps) {
            lines.push(format!("{name},{},{}", fmt_f64(v), fmt_f64(*p)));
        }
    }
    lines
}

/// Fits the plain or rectified model on `features.csv`, filters by p-value
/// and writes weights, residuals, p-values and per-region contributions.
pub fn fit(cfg: &PipelineConfig, inputs: &LoadedInputs, out: &Path, rectified: bool) -> Result<Vec<String>> {
    let features = features_for(inputs, out)?;
    let mut chain = cfg.chain.clone();
    chain.rectified = rectified;
    let (fit, selection) = fit_and_select(&features, &inputs.z, inputs.flows.as_ref(), &chain)?;
    write_text(out.join(OUT_FILE), &fit.coefficient_lines())?;
    write_text(out.join(OUT_SELECTED_FILE), &selection.fit.coefficient_lines())?;
    let residuals: Vec<String> = inputs
        .regions
        .iter()
        .zip(fit.residuals.iter())
        .map(|(r, e)| format!("{r} {}", fmt_f64(*e)))
        .collect();
    write_text(out.join(RESIDUAL_FILE), &residuals)?;
    write_text(out.join(PVALUES_FILE), &pvalue_lines(&fit))?;
    let mut contrib = vec!["region,feature,value".to_string()];
    let names = selection.features.names();
    for c in region_contributions(&selection.features, &cfg.report_regions)? {
        for (j, v) in c.values.iter().enumerate() {
            contrib.push(format!("{},{},{}", c.region, names[j + 1], fmt_f64(*v)));
        }
    }
    write_text(out.join(CONTRIBUTIONS_FILE), &contrib)?;
    Ok(vec![
        OUT_FILE.into(),
        OUT_SELECTED_FILE.into(),
        RESIDUAL_FILE.into(),
        PVALUES_FILE.into(),
        CONTRIBUTIONS_FILE.into(),
    ])
}

/// Out-of-bag comparison of the plain and rectified models.
pub fn bootstrap(cfg: &PipelineConfig, inputs: &LoadedInputs, out: &Path) -> Result<Vec<String>> {
    let features = features_for(inputs, out)?;
    let flows = inputs
        .flows
        .clone()
        .unwrap_or_else(|| FlowPair::zeros(inputs.regions.clone()));
    let result = bootstrap_cv(&features, &inputs.z, &flows, cfg.bootstrap_replicates, cfg.seed)?;
    write_text(out.join(BOOTSTRAP_FILE), &result.csv_lines())?;
    Ok(vec![BOOTSTRAP_FILE.into()])
}

/// Reruns the whole chain under appended noise and writes `robustness.csv`.
pub fn robustness(cfg: &PipelineConfig, inputs: &LoadedInputs, out: &Path, n_trials: usize) -> Result<RobustnessReport> {
    let report = robustness_test(&cfg.chain, &inputs.panel, &inputs.z, inputs.flows.as_ref(), n_trials, cfg.seed)?;
    write_text(out.join(ROBUSTNESS_FILE), &report.lines())?;
    Ok(report)
}

/// Fixed output files of a stage; `feature_<i>.csv` files are listed by [`existing_feature_files`].
pub fn fixed_outputs(stage: crate::pipeline::config::Stage) -> &'static [&'static str] {
    use crate::pipeline::config::Stage;
    match stage {
        Stage::Impute => &[COMPLETED_FILE, COMPLETION_REPORT_FILE],
        Stage::Spectrum => &[SPECTRUM_FILE, PERIOD_FILE],
        Stage::Validate => &[SVM_FILE, SVM_PLOT_FILE],
        Stage::Extract => &[MODEL_FILE, BIC_FILE, FEATURES_FILE],
        Stage::Fit => &[
            OUT_FILE,
            OUT_SELECTED_FILE,
            RESIDUAL_FILE,
            PVALUES_FILE,
            CONTRIBUTIONS_FILE,
            BOOTSTRAP_FILE,
        ],
        Stage::Report => &[REPORT_FILE],
    }
}

/// `feature_1.csv, feature_2.csv, ...` present in `dir`, stopping at the first gap.
pub fn existing_feature_files(dir: &Path) -> Vec<String> {
    (1..)
        .map(feature_file)
        .take_while(|f| dir.join(f).is_file())
        .collect()
}

