//! Pipeline orchestration: stage sequencing, artifact manifest and report.

pub mod chain;
pub mod config;
pub mod report;
pub mod stages;

use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::data::write_text;
use crate::error::{Error, Result};

pub use config::{PipelineConfig, Stage};
pub use report::emit_report;

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryStatus {
    Fresh,
    /// Skipped stage whose earlier outputs were reused.
    Cached,
    /// Stage not applicable to the configured inputs.
    Absent,
}

impl EntryStatus {
    fn label(self) -> &'static str {
        match self {
            EntryStatus::Fresh => "fresh",
            EntryStatus::Cached => "cached",
            EntryStatus::Absent => "absent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Stage name, or `align` for the region bookkeeping file.
    pub stage: String,
    /// File name relative to the output directory; `None` for absent stages.
    pub file: Option<String>,
    pub sha256: Option<String>,
    pub status: EntryStatus,
}

impl fmt::Display for ManifestEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {}",
            self.stage,
            self.file.as_deref().unwrap_or("-"),
            self.sha256.as_deref().unwrap_or("-"),
            self.status.label()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl Manifest {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            entries: Vec::new(),
        }
    }

    fn record(&mut self, stage: &str, files: &[String], status: EntryStatus) -> Result<()> {
        for file in files {
            let hash = sha256_file(&self.dir.join(file))?;
            self.entries.push(ManifestEntry {
                stage: stage.to_string(),
                file: Some(file.clone()),
                sha256: Some(hash),
                status,
            });
        }
        Ok(())
    }

    fn record_absent(&mut self, stage: Stage) {
        self.entries.push(ManifestEntry {
            stage: stage.name().to_string(),
            file: None,
            sha256: None,
            status: EntryStatus::Absent,
        });
    }

    pub fn entry(&self, file: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.file.as_deref() == Some(file))
    }

    /// Files listed in the manifest, in order.
    pub fn files(&self) -> Vec<&str> {
        self.entries.iter().filter_map(|e| e.file.as_deref()).collect()
    }

    /// `(file, hash)` pairs; independent of the fresh/cached status.
    pub fn hashes(&self) -> Vec<(String, String)> {
        self.entries
            .iter()
            .filter_map(|e| Some((e.file.clone()?, e.sha256.clone()?)))
            .collect()
    }

    pub fn lines(&self) -> Vec<String> {
        self.entries.iter().map(ToString::to_string).collect()
    }

    pub fn write(&self) -> Result<()> {
        write_text(self.dir.join(MANIFEST_FILE), &self.lines())
    }

    pub fn load(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Schema(format!("{}: malformed line {}", path.display(), i + 1));
            let [stage, file, hash, status] = parts[..] else {
                return Err(bad());
            };
            let status = match status {
                "fresh" => EntryStatus::Fresh,
                "cached" => EntryStatus::Cached,
                "absent" => EntryStatus::Absent,
                _ => return Err(bad()),
            };
            let opt = |s: &str| (s != "-").then(|| s.to_string());
            entries.push(ManifestEntry {
                stage: stage.to_string(),
                file: opt(file),
                sha256: opt(hash),
                status,
            });
        }
        Ok(Self { dir, entries })
    }
}

/// Outputs of a skipped stage, which must all exist already.
fn cached_outputs(stage: Stage, out: &Path) -> Result<Vec<String>> {
    let mut files: Vec<String> = stages::fixed_outputs(stage).iter().map(|f| f.to_string()).collect();
    if stage == Stage::Extract {
        files.extend(stages::existing_feature_files(out));
    }
    match files.iter().find(|f| !out.join(f).is_file()) {
        Some(missing) => Err(Error::Validation(format!(
            "stage {stage} is skipped but its output {missing} does not exist"
        ))),
        None => Ok(files),
    }
}

/// Runs every stage in order, writes `manifest.txt` and returns the manifest.
/// Input files are checked before any stage runs; stage errors carry the
/// stage name.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    let out = cfg.out_dir.as_path();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let inputs = stages::load_inputs(cfg).map_err(|e| e.in_stage("inputs"))?;
    let mut manifest = Manifest::new(out);
    let files = stages::write_regions(&inputs, out)?;
    manifest.record("align", &files, EntryStatus::Fresh)?;

    for stage in Stage::ALL {
        let applicable = match stage {
            Stage::Spectrum => inputs.weekly.is_some(),
            Stage::Validate => inputs.labels.is_some(),
            _ => true,
        };
        if !applicable {
            manifest.record_absent(stage);
            continue;
        }
        if cfg.skip.contains(&stage) {
            let files = cached_outputs(stage, out).map_err(|e| e.in_stage(stage.name()))?;
            manifest.record(stage.name(), &files, EntryStatus::Cached)?;
            continue;
        }
        let run = || -> Result<Vec<String>> {
            Ok(match stage {
                Stage::Impute => stages::impute(cfg, &inputs, out)?,
                Stage::Spectrum => stages::spectrum(cfg, &inputs, out, false)?.unwrap_or_default(),
                Stage::Validate => stages::validate(cfg, &inputs, out)?.map(|v| v.1).unwrap_or_default(),
                Stage::Extract => stages::extract(cfg, out)?,
                Stage::Fit => {
                    let rectified = cfg.chain.rectified && inputs.flows.is_some();
                    let mut files = stages::fit(cfg, &inputs, out, rectified)?;
                    files.extend(stages::bootstrap(cfg, &inputs, out)?);
                    files
                }
                Stage::Report => {
                    let text = emit_report(&manifest);
                    std::fs::write(out.join(stages::REPORT_FILE), text)
                        .map_err(|e| Error::io(out.join(stages::REPORT_FILE), e))?;
                    vec![stages::REPORT_FILE.to_string()]
                }
            })
        };
        let files = run().map_err(|e| e.in_stage(stage.name()))?;
        manifest.record(stage.name(), &files, EntryStatus::Fresh)?;
    }
    manifest.write()?;
    Ok(manifest)
}
