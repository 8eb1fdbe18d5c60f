//! Plain-text pipeline configuration: `key = value` lines grouped under
//! `[section]` headers, `#` or `;` comments.
//!
//! ```text
//! seed = 7
//! out = results
//!
//! [inputs]
//! indicators = indicators.csv
//! mortality = mortality.csv
//! migration = migration.csv
//! trade = trade.csv
//!
//! [autoencoder]
//! bottleneck = 10
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::classify::SvmConfig;
use crate::completion::CompletionConfig;
use crate::data::RateFloor;
use crate::encode::{AutoencoderTemplate, LayerPlan};
use crate::error::{Error, Result};
use crate::pipeline::chain::ChainConfig;

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Impute,
    Spectrum,
    Validate,
    Extract,
    Fit,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Impute,
        Stage::Spectrum,
        Stage::Validate,
        Stage::Extract,
        Stage::Fit,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Impute => "impute",
            Stage::Spectrum => "spectrum",
            Stage::Validate => "validate",
            Stage::Extract => "extract",
            Stage::Fit => "fit",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub indicators: PathBuf,
    pub mortality: PathBuf,
    pub migration: Option<PathBuf>,
    pub trade: Option<PathBuf>,
    pub weekly: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

impl Inputs {
    fn all(&self) -> Vec<(&'static str, &PathBuf)> {
        let mut v = vec![("indicators", &self.indicators), ("mortality", &self.mortality)];
        for (k, p) in [
            ("migration", &self.migration),
            ("trade", &self.trade),
            ("weekly", &self.weekly),
            ("labels", &self.labels),
        ] {
            if let Some(p) = p {
                v.push((k, p));
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub inputs: Inputs,
    pub rate_floor: RateFloor,
    pub spectrum_min_k: usize,
    pub spectrum_regions: Vec<String>,
    pub svm: SvmConfig,
    /// Completion, autoencoder, PCA and regression settings.
    pub chain: ChainConfig,
    /// Indicators listed per `feature_<i>.csv`; 0 lists all.
    pub top_m: usize,
    pub bootstrap_replicates: usize,
    pub report_regions: Vec<String>,
    pub skip: BTreeSet<Stage>,
}

/// Raw sections; the empty name holds keys before the first header.
#[derive(Debug, Default)]
struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
    used: BTreeSet<(String, String)>,
}

impl Ini {
    fn parse(text: &str) -> Result<Self> {
        let mut ini = Ini::default();
        let mut section = String::new();
        ini.sections.insert(section.clone(), BTreeMap::new());
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", lineno + 1)))?;
                section = name.trim().to_string();
                ini.sections.entry(section.clone()).or_default();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = k.trim().to_string();
            let entries = ini.sections.get_mut(&section).expect("section exists");
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {key:?} in section [{section}]",
                    lineno + 1
                )));
            }
        }
        Ok(ini)
    }

    fn raw(&mut self, section: &str, key: &str) -> Option<String> {
        let v = self.sections.get(section)?.get(key)?.clone();
        self.used.insert((section.to_string(), key.to_string()));
        Some(v)
    }

    fn get<T: FromStr>(&mut self, section: &str, key: &str) -> Result<Option<T>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                Error::Config(format!("[{section}] {key}: cannot parse {v:?}"))
            }),
        }
    }

    fn list<T: FromStr>(&mut self, section: &str, key: &str) -> Result<Option<Vec<T>>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) if v.is_empty() => Ok(Some(Vec::new())),
            Some(v) => v
                .split(',')
                .map(|item| {
                    item.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse item {item:?}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn unused(&self) -> Vec<String> {
        self.sections
            .iter()
            .flat_map(|(s, kv)| kv.keys().map(move |k| (s.clone(), k.clone())))
            .filter(|sk| !self.used.contains(sk))
            .map(|(s, k)| if s.is_empty() { k } else { format!("[{s}] {k}") })
            .collect()
    }
}

impl PipelineConfig {
    /// Parses configuration text; relative paths are joined onto `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut ini = Ini::parse(text)?;
        let seed: u64 = ini
            .get("", "seed")?
            .ok_or_else(|| Error::Config("seed is mandatory".into()))?;
        let resolve = |p: String| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        let out_dir = resolve(ini.raw("", "out").unwrap_or_else(|| "out".into()));
        let required = |ini: &mut Ini, key: &str| {
            ini.raw("inputs", key)
                .map(resolve)
                .ok_or_else(|| Error::Config(format!("[inputs] {key} is required")))
        };
        let inputs = Inputs {
            indicators: required(&mut ini, "indicators")?,
            mortality: required(&mut ini, "mortality")?,
            migration: ini.raw("inputs", "migration").map(resolve),
            trade: ini.raw("inputs", "trade").map(resolve),
            weekly: ini.raw("inputs", "weekly").map(resolve),
            labels: ini.raw("inputs", "labels").map(resolve),
        };
        if inputs.migration.is_some() != inputs.trade.is_some() {
            return Err(Error::Config("migration and trade must be given together".into()));
        }

        let rate_floor = match ini.get::<bool>("mortality", "rate_floor")?.unwrap_or(false) {
            true => RateFloor::HalfMinPositive,
            false => RateFloor::Disabled,
        };

        let dc = CompletionConfig::default();
        let completion = CompletionConfig {
            lambda_path: ini.list("completion", "lambda_path")?,
            max_rank: ini.get("completion", "max_rank")?.unwrap_or(dc.max_rank),
            tol: ini.get("completion", "tol")?.unwrap_or(dc.tol),
            max_iter: ini.get("completion", "max_iter")?.unwrap_or(dc.max_iter),
            seed,
        };

        let spectrum_min_k = ini.get("spectrum", "min_k")?.unwrap_or(1);
        let spectrum_regions = ini.list("spectrum", "regions")?.unwrap_or_default();

        let ds = SvmConfig::default();
        let svm = SvmConfig {
            lambda: ini.get("svm", "lambda")?.unwrap_or(ds.lambda),
            epochs: ini.get("svm", "epochs")?.unwrap_or(ds.epochs),
            seed,
            holdout_fraction: ini.get("svm", "holdout")?.unwrap_or(ds.holdout_fraction),
        };

        let da = AutoencoderTemplate::default();
        let plan = match (
            ini.list::<usize>("autoencoder", "hidden")?,
            ini.get::<usize>("autoencoder", "hidden_layers")?,
        ) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "[autoencoder] give either hidden or hidden_layers, not both".into(),
                ))
            }
            (Some(h), None) => LayerPlan::Explicit(h),
            (None, Some(n)) => LayerPlan::Geometric { n_hidden: n },
            (None, None) => da.plan.clone(),
        };
        let autoencoder = AutoencoderTemplate {
            plan,
            seed,
            epochs: ini.get("autoencoder", "epochs")?.unwrap_or(da.epochs),
            batch_size: ini.get("autoencoder", "batch_size")?.unwrap_or(da.batch_size),
            learning_rate: ini.get("autoencoder", "learning_rate")?.unwrap_or(da.learning_rate),
        };
        let dch = ChainConfig::default();
        let chain = ChainConfig {
            completion,
            autoencoder,
            bottleneck: ini.get("autoencoder", "bottleneck")?.unwrap_or(dch.bottleneck),
            bottleneck_candidates: ini.list("autoencoder", "candidates")?.unwrap_or_default(),
            full_batch: ini.get("autoencoder", "full_batch")?.unwrap_or(dch.full_batch),
            pca_components: ini.get("pca", "components")?.unwrap_or(dch.pca_components),
            p_threshold: ini.get("regression", "p_threshold")?.unwrap_or(dch.p_threshold),
            rectified: ini.get("regression", "rectified")?.unwrap_or(dch.rectified),
        };
        let top_m = ini.get("pca", "top_m")?.unwrap_or(0);
        let bootstrap_replicates = ini.get("bootstrap", "replicates")?.unwrap_or(200);
        let report_regions = ini.list("report", "regions")?.unwrap_or_default();
        let mut skip = BTreeSet::new();
        for stage in Stage::ALL {
            if ini.get::<bool>("skip", stage.name())?.unwrap_or(false) {
                skip.insert(stage);
            }
        }
        let unused = ini.unused();
        if !unused.is_empty() {
            return Err(Error::Config(format!("unknown configuration keys: {}", unused.join(", "))));
        }
        if !(0.0..1.0).contains(&chain.p_threshold) || chain.p_threshold == 0.0 {
            return Err(Error::Config(format!("p_threshold {} outside (0, 1)", chain.p_threshold)));
        }
        Ok(Self {
            seed,
            out_dir,
            inputs,
            rate_floor,
            spectrum_min_k,
            spectrum_regions,
            svm,
            chain,
            top_m,
            bootstrap_replicates,
            report_regions,
            skip,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Replaces the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.chain.completion.seed = seed;
        self.chain.autoencoder.seed = seed;
        self.svm.seed = seed;
        self
    }

    /// Every referenced input must exist before any stage runs.
    pub fn validate(&self) -> Result<()> {
        let missing: Vec<String> = self
            .inputs
            .all()
            .into_iter()
            .filter(|(_, p)| !p.is_file())
            .map(|(k, p)| format!("{k} ({})", p.display()))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(format!("missing input files: {}", missing.join(", "))))
        }
    }
}

/// Configuration text for the file set written by `PlantedWorld::write_files`,
/// with every other setting at its default.
/// Drops a comment that starts the line or follows whitespace.
fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &c) in bytes.iter().enumerate() {
        if (c == b'#' || c == b';') && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

pub fn world_config_text(seed: u64, out: &str) -> String {
    format!(
        "seed = {seed}\nout = {out}\n\n[inputs]\nindicators = indicators.csv\nmortality = mortality.csv\n\
         migration = migration.csv\ntrade = trade.csv\nweekly = weekly.csv\nlabels = labels.csv\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "seed = 3\n[inputs]\nindicators = a.csv\nmortality = b.csv\n";

    #[test]
    fn minimal_config_defaults() {
        let c = PipelineConfig::parse(MINIMAL, Path::new("/data")).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.inputs.indicators, PathBuf::from("/data/a.csv"));
        assert_eq!(c.out_dir, PathBuf::from("/data/out"));
        assert_eq!(c.chain.bottleneck, 10);
        assert_eq!(c.chain.pca_components, 6);
        assert_eq!(c.chain.autoencoder.seed, 3);
        assert!(c.skip.is_empty());
    }

    #[test]
    fn inline_comments_are_ignored() {
        let text = "seed = 3 ; fixed\n[inputs]\nindicators = a#b.csv # panel\nmortality = b.csv\n";
        let c = PipelineConfig::parse(text, Path::new("/d")).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.inputs.indicators, PathBuf::from("/d/a#b.csv"));
    }

    #[test]
    fn seed_is_mandatory() {
        let text = "[inputs]\nindicators = a.csv\nmortality = b.csv\n";
        assert!(matches!(PipelineConfig::parse(text, Path::new(".")), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        let typo = format!("{MINIMAL}[autoencoder]\nbotleneck = 4\n");
        assert!(PipelineConfig::parse(&typo, Path::new(".")).is_err());
        let bad = format!("{MINIMAL}[autoencoder]\nbottleneck = four\n");
        assert!(PipelineConfig::parse(&bad, Path::new(".")).is_err());
        let dup = format!("{MINIMAL}[pca]\ncomponents = 2\ncomponents = 3\n");
        assert!(PipelineConfig::parse(&dup, Path::new(".")).is_err());
    }

    #[test]
    fn sections_lists_and_skips() {
        let text = format!(
            "{MINIMAL}[skip]\nimpute = true\nfit = true\nextract = false\n[autoencoder]\nhidden = 20, 8\ncandidates = 1,2,3\n# note\n[report]\nregions = JPN, USA\n"
        );
        let c = PipelineConfig::parse(&text, Path::new(".")).unwrap();
        assert_eq!(c.chain.autoencoder.plan, LayerPlan::Explicit(vec![20, 8]));
        assert_eq!(c.chain.bottleneck_candidates, vec![1, 2, 3]);
        assert_eq!(c.report_regions, vec!["JPN".to_string(), "USA".to_string()]);
        assert_eq!(c.skip.iter().copied().collect::<Vec<_>>(), vec![Stage::Impute, Stage::Fit]);
    }

    #[test]
    fn world_config_parses() {
        let c = PipelineConfig::parse(&world_config_text(5, "res"), Path::new("/w")).unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.out_dir, PathBuf::from("/w/res"));
        assert_eq!(c.inputs.labels, Some(PathBuf::from("/w/labels.csv")));
    }

    #[test]
    fn missing_inputs_fail_validation() {
        let c = PipelineConfig::parse(MINIMAL, Path::new("/nonexistent-dir")).unwrap();
        assert!(matches!(c.validate(), Err(Error::Validation(_))));
    }
}
