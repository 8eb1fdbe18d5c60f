//! The modelling chain from a raw indicator panel to a selected regression:
//! standardize, complete, encode, orthogonalize, fit, filter.

use nalgebra::{DMatrix, DVector};

use crate::completion::{soft_impute, CompletionConfig, CompletionResult};
use crate::data::{standardize_columns, FeatureMatrix, FlowPair, IndicatorPanel, MortalityVector, StandardizeReport};
use crate::encode::{bic, select_bottleneck, train_autoencoder, AutoencoderTemplate, BicEntry, TrainedAutoencoder};
use crate::error::{Error, Result};
use crate::pca::{attribution_vectors, fit_pca, signed_attribution_vectors, transform, PcaModel};
use crate::regress::{fit_rectified, ols_fit, select_features, FitResult, Selection, P_THRESHOLD};

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub completion: CompletionConfig,
    pub autoencoder: AutoencoderTemplate,
    /// Bottleneck width used when no candidates are given.
    pub bottleneck: usize,
    /// When non-empty, the bottleneck is chosen from these by BIC.
    pub bottleneck_candidates: Vec<usize>,
    /// Train on the whole panel at every step instead of mini-batches.
    pub full_batch: bool,
    pub pca_components: usize,
    pub p_threshold: f64,
    /// Fit the flow-rectified model when flows are supplied.
    pub rectified: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            completion: CompletionConfig::default(),
            autoencoder: AutoencoderTemplate::default(),
            bottleneck: 10,
            bottleneck_candidates: Vec::new(),
            full_batch: false,
            pca_components: 6,
            p_threshold: P_THRESHOLD,
            rectified: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub extracted: ExtractedFeatures,
    pub fit: FitResult,
    pub selection: Selection,
}

/// Autoencoder, BIC table and orthogonalized features of one completed panel.
#[derive(Debug, Clone)]
pub struct EncodedFeatures {
    pub autoencoder: TrainedAutoencoder,
    /// One entry per trained width; a single entry when the width is fixed.
    pub bic_table: Vec<BicEntry>,
    pub pca: PcaModel,
    pub features: FeatureMatrix,
    pub attributions: Vec<DVector<f64>>,
    pub signed_attributions: Vec<DVector<f64>>,
    pub score_scales: Vec<f64>,
}

/// Trains the autoencoder on a complete standardized matrix (rows in
/// `regions` order) and runs PCA on its bottleneck codes.
pub fn encode_completed(regions: &[String], x: &DMatrix<f64>, cfg: &ChainConfig) -> Result<EncodedFeatures> {
    let n = x.nrows();
    let mut template = cfg.autoencoder.clone();
    if cfg.full_batch {
        template.batch_size = n;
    }
    let (autoencoder, bic_table) = if cfg.bottleneck_candidates.is_empty() {
        let spec = template.spec(x.ncols(), cfg.bottleneck)?;
        let trained = train_autoencoder(x, &spec)?;
        let entry = BicEntry {
            k: cfg.bottleneck,
            loss: trained.final_loss,
            bic: bic(n, cfg.bottleneck, trained.final_loss),
        };
        (trained, vec![entry])
    } else {
        let sel = select_bottleneck(x, &cfg.bottleneck_candidates, &template)?;
        (sel.best_model, sel.table)
    };
    let codes = autoencoder.model.encode(x)?;
    let k = cfg.pca_components.min(codes.ncols());
    let pca = fit_pca(&codes, k)?;
    let mut scaled = transform(&pca, &codes)?;
    let mut score_scales = Vec::with_capacity(k);
    for (c, mut col) in scaled.column_iter_mut().enumerate() {
        let var = col.norm_squared() / (n as f64 - 1.0);
        if !(var > 1e-12) {
            return Err(Error::Degenerate(format!(
                "principal component {} of the bottleneck code has no variance",
                c + 1
            )));
        }
        col /= var.sqrt();
        score_scales.push(var.sqrt());
    }
    let features = FeatureMatrix::from_features(regions.to_vec(), &scaled)?;
    let attributions = attribution_vectors(&pca, &autoencoder.model, x)?;
    let signed_attributions = signed_attribution_vectors(&pca, &autoencoder.model, x)?;
    Ok(EncodedFeatures {
        autoencoder,
        bic_table,
        pca,
        features,
        attributions,
        signed_attributions,
        score_scales,
    })
}

/// Standardize → complete → train the autoencoder → PCA on the codes.
pub fn extract_features(panel: &IndicatorPanel, cfg: &ChainConfig) -> Result<ExtractedFeatures> {
    let (standardized, standardize_report) = standardize_columns(panel)?;
    let completion = soft_impute(&standardized, &cfg.completion)?;
    let enc = encode_completed(panel.regions(), &completion.completed, cfg)?;
    Ok(ExtractedFeatures {
        standardized,
        standardize_report,
        completion,
        autoencoder: enc.autoencoder,
        bic_table: enc.bic_table,
        pca: enc.pca,
        features: enc.features,
        attributions: enc.attributions,
        signed_attributions: enc.signed_attributions,
        score_scales: enc.score_scales,
    })
}

#[derive(Debug, Clone)]
pub struct ExtractedFeatures {
    pub standardized: IndicatorPanel,
    pub standardize_report: StandardizeReport,
    pub completion: CompletionResult,
    pub autoencoder: TrainedAutoencoder,
    pub bic_table: Vec<BicEntry>,
    pub pca: PcaModel,
    /// Intercept plus PCA scores scaled to unit sample variance.
    pub features: FeatureMatrix,
    /// Mean absolute input gradient of each component, over the kept indicators.
    pub attributions: Vec<DVector<f64>>,
    /// Mean signed input gradient of each component; used to match features across runs.
    pub signed_attributions: Vec<DVector<f64>>,
    /// Standard deviation of each raw PCA score column.
    pub score_scales: Vec<f64>,
}

impl ExtractedFeatures {
    /// Feature-matrix row (intercept first) of a fully observed raw indicator
    /// row, using the fitted standardization, encoder and PCA.
    pub fn project_row(&self, indicators: &[String], raw: &[f64]) -> Result<DVector<f64>> {
        if indicators.len() != raw.len() {
            return Err(Error::Shape(format!("{} names for {} values", indicators.len(), raw.len())));
        }
        let rep = &self.standardize_report;
        let x = rep
            .kept
            .iter()
            .enumerate()
            .map(|(c, name)| {
                let j = indicators
                    .iter()
                    .position(|i| i == name)
                    .ok_or_else(|| Error::Schema(format!("indicator {name} missing from the row")))?;
                Ok((raw[j] - rep.means[c]) / rep.stds[c])
            })
            .collect::<Result<Vec<f64>>>()?;
        let x = DMatrix::from_row_slice(1, x.len(), &x);
        let code = self.autoencoder.model.encode(&x)?;
        let scores = transform(&self.pca, &code)?;
        let mut row = DVector::from_element(scores.ncols() + 1, 1.0);
        for (c, s) in self.score_scales.iter().enumerate() {
            row[c + 1] = scores[(0, c)] / s;
        }
        Ok(row)
    }
}

/// Fits the configured model on extracted features and filters by p-value.
pub fn fit_and_select(
    features: &FeatureMatrix,
    z: &MortalityVector,
    flows: Option<&FlowPair>,
    cfg: &ChainConfig,
) -> Result<(FitResult, Selection)> {
    let flows = flows.filter(|_| cfg.rectified);
    let fit = match flows {
        Some(f) => fit_rectified(features, z, f)?,
        None => ols_fit(features, z)?,
    };
    let selection = select_features(features, z, flows, &fit, cfg.p_threshold)?;
    Ok((fit, selection))
}

/// The whole chain on one panel.
pub fn run_chain(
    panel: &IndicatorPanel,
    z: &MortalityVector,
    flows: Option<&FlowPair>,
    cfg: &ChainConfig,
) -> Result<ChainOutput> {
    let ex = extract_features(panel, cfg)?;
    let (fit, selection) = fit_and_select(&ex.features, z, flows, cfg)?;
    Ok(ChainOutput {
        extracted: ex,
        fit,
        selection,
    })
}
