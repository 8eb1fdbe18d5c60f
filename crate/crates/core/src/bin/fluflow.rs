use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fluflow::pipeline::config::world_config_text;
use fluflow::pipeline::{emit_report, run_pipeline, stages, Manifest, PipelineConfig, MANIFEST_FILE};
use fluflow::synth::{gen_planted_world, PlantedConfig};
use fluflow::{Error, Result};

#[derive(Parser)]
#[command(name = "fluflow", version, about = "Influenza mortality regression pipeline")]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complete the indicator panel.
    Impute,
    /// Spectrum and dominant period of the weekly activity.
    Spectrum {
        /// Only the globally summed series.
        #[arg(long)]
        global: bool,
    },
    /// SVM check that completion preserves the development split.
    ValidateSvm {
        /// `region,label` file; overrides the configured labels.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Train the autoencoder and write the orthogonalized features.
    ExtractFeatures {
        /// Bottleneck width; overrides the configured one.
        #[arg(long)]
        bottleneck: Option<usize>,
    },
    /// Plain regression on the extracted features.
    Fit,
    /// Flow-rectified regression on the extracted features.
    FitRectified,
    /// Out-of-bag comparison of the plain and rectified models.
    Bootstrap {
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Weight stability under an appended noise indicator and region.
    Robustness {
        #[arg(long, default_value_t = 5)]
        trials: usize,
    },
    /// Write a planted synthetic world with its configuration file.
    Synth {
        #[arg(long, default_value_t = 183)]
        regions: usize,
        #[arg(long, default_value_t = 60)]
        indicators: usize,
        /// Features with nonzero weight.
        #[arg(long, default_value_t = 3)]
        features: usize,
        /// Features with zero weight.
        #[arg(long, default_value_t = 0)]
        null_features: usize,
        #[arg(long, default_value_t = 0.02)]
        kernel_scale: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.3)]
        missing: f64,
    },
    /// Every stage in order, with a manifest.
    Run,
    /// Print the summary of a finished run.
    Report,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::Io {
        path: cfg.out_dir.clone(),
        source: e,
    })?;
    Ok(cfg)
}

fn print_files(dir: &Path, files: &[String]) {
    for f in files {
        println!("wrote {}", dir.join(f).display());
    }
}

fn run(cli: Cli) -> Result<u8> {
    match &cli.command {
        Command::Synth {
            regions,
            indicators,
            features,
            null_features,
            kernel_scale,
            noise,
            missing,
        } => {
            let seed = cli
                .seed
                .ok_or_else(|| Error::Config("synth needs an explicit --seed".into()))?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("world"));
            let world = gen_planted_world(&PlantedConfig {
                n: *regions,
                d: *indicators,
                k_features: *features,
                n_null: *null_features,
                kernel_scale: *kernel_scale,
                noise_sigma: *noise,
                missing_frac: *missing,
                seed,
                ..Default::default()
            })?;
            world.write_files(&out)?;
            let cfg_path = out.join("fluflow.ini");
            std::fs::write(&cfg_path, world_config_text(seed, "out")).map_err(|e| Error::Io {
                path: cfg_path.clone(),
                source: e,
            })?;
            println!("wrote planted world to {}", out.display());
            println!("config: {}", cfg_path.display());
            Ok(0)
        }
        Command::Report => {
            let dir = match (&cli.out, &cli.config) {
                (Some(out), _) => out.clone(),
                (None, Some(_)) => load_config(&cli)?.out_dir,
                (None, None) => return Err(Error::Config("report needs --out or --config".into())),
            };
            let manifest = Manifest::load(&dir)?;
            print!("{}", emit_report(&manifest));
            Ok(0)
        }
        Command::Run => {
            let cfg = load_config(&cli)?;
            let manifest = run_pipeline(&cfg)?;
            for line in manifest.lines() {
                println!("{line}");
            }
            println!("manifest: {}", cfg.out_dir.join(MANIFEST_FILE).display());
            Ok(0)
        }
        cmd => {
            let mut cfg = load_config(&cli)?;
            match cmd {
                Command::ValidateSvm { labels: Some(l) } => cfg.inputs.labels = Some(l.clone()),
                Command::ExtractFeatures { bottleneck: Some(k) } => {
                    cfg.chain.bottleneck = *k;
                    cfg.chain.bottleneck_candidates.clear();
                }
                Command::Bootstrap { replicates: Some(r) } => cfg.bootstrap_replicates = *r,
                _ => {}
            }
            cfg.validate()?;
            let out = cfg.out_dir.clone();
            let inputs = stages::load_inputs(&cfg)?;
            let files = match cmd {
                Command::Impute => stages::impute(&cfg, &inputs, &out)?,
                Command::Spectrum { global } => stages::spectrum(&cfg, &inputs, &out, *global)?
                    .ok_or_else(|| Error::Config("no weekly input configured".into()))?,
                Command::ValidateSvm { .. } => {
                    let (report, files) = stages::validate(&cfg, &inputs, &out)?
                        .ok_or_else(|| Error::Config("no labels given".into()))?;
                    print_files(&out, &files);
                    println!("acc_raw {:.6}", report.acc_raw);
                    println!("acc_completed {:.6}", report.acc_completed);
                    println!("{}", if report.passed { "pass" } else { "fail" });
                    return Ok(if report.passed { 0 } else { 1 });
                }
                Command::ExtractFeatures { .. } => stages::extract(&cfg, &out)?,
                Command::Fit => stages::fit(&cfg, &inputs, &out, false)?,
                Command::FitRectified => {
                    if inputs.flows.is_none() {
                        return Err(Error::Config("fit-rectified needs migration and trade inputs".into()));
                    }
                    stages::fit(&cfg, &inputs, &out, true)?
                }
                Command::Bootstrap { .. } => stages::bootstrap(&cfg, &inputs, &out)?,
                Command::Robustness { trials } => {
                    let report = stages::robustness(&cfg, &inputs, &out, *trials)?;
                    for line in report.lines() {
                        println!("{line}");
                    }
                    vec![stages::ROBUSTNESS_FILE.to_string()]
                }
                Command::Synth { .. } | Command::Run | Command::Report => unreachable!(),
            };
            print_files(&out, &files);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
