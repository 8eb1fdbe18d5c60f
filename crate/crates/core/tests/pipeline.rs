use std::path::Path;

use fluflow::data::IndicatorPanel;
use fluflow::pipeline::chain::{run_chain, ChainConfig};
use fluflow::pipeline::config::world_config_text;
use fluflow::pipeline::{emit_report, run_pipeline, EntryStatus, Manifest, PipelineConfig};
use fluflow::regress::robustness::compare_runs;
use fluflow::regress::TrialKind;
use fluflow::synth::{gen_planted_world, PlantedConfig, PlantedWorld};
use fluflow::Error;

fn small_world(seed: u64, flow_density: f64) -> PlantedWorld {
    gen_planted_world(&PlantedConfig {
        n: 60,
        d: 20,
        flow_density,
        noise_sigma: 0.05,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn config(dir: &Path, text: &str) -> PipelineConfig {
    PipelineConfig::parse(text, dir).unwrap()
}

const SMALL_CHAIN: &str = "\n[autoencoder]\nbottleneck = 4\nepochs = 150\n\n[pca]\ncomponents = 3\n\n[bootstrap]\nreplicates = 100\n";

fn world_dir(seed: u64, flow_density: f64) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    small_world(seed, flow_density).write_files(dir.path()).unwrap();
    dir
}

#[test]
fn run_writes_every_stage_output() {
    let dir = world_dir(1, 0.1);
    let cfg = config(dir.path(), &(world_config_text(1, "out") + SMALL_CHAIN));
    let manifest = run_pipeline(&cfg).unwrap();
    let expected = [
        "regions.txt",
        "completed.csv",
        "completion_report.txt",
        "spectrum.csv",
        "period.csv",
        "svm.txt",
        "svm_plot.csv",
        "autoencoder.bin",
        "bic.csv",
        "features.csv",
        "feature_1.csv",
        "out.txt",
        "out_selected.txt",
        "residual.txt",
        "pvalues.csv",
        "contributions.csv",
        "bootstrap.csv",
        "report.txt",
    ];
    for f in expected {
        let entry = manifest.entry(f).unwrap_or_else(|| panic!("{f} missing from manifest"));
        assert_eq!(entry.status, EntryStatus::Fresh);
        assert!(cfg.out_dir.join(f).is_file(), "{f} not on disk");
    }
    let reloaded = Manifest::load(&cfg.out_dir).unwrap();
    assert_eq!(reloaded.hashes(), manifest.hashes());
    let report = std::fs::read_to_string(cfg.out_dir.join("report.txt")).unwrap();
    assert!(report.contains("== bootstrap comparison =="));
    assert!(!report.contains("[gap:"), "{report}");
}

#[test]
fn missing_input_fails_before_any_stage() {
    let dir = world_dir(2, 0.1);
    std::fs::remove_file(dir.path().join("trade.csv")).unwrap();
    let cfg = config(dir.path(), &world_config_text(2, "out"));
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, Error::Validation(_)), "{err}");
    assert!(err.to_string().contains("trade.csv"));
    assert!(!cfg.out_dir.join("completed.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = world_dir(3, 0.1);
    let a = run_pipeline(&config(dir.path(), &(world_config_text(3, "a") + SMALL_CHAIN))).unwrap();
    let b = run_pipeline(&config(dir.path(), &(world_config_text(3, "b") + SMALL_CHAIN))).unwrap();
    assert_eq!(a.hashes(), b.hashes());
    let other = run_pipeline(&config(dir.path(), &(world_config_text(4, "c") + SMALL_CHAIN))).unwrap();
    let hash = |m: &Manifest| m.entry("features.csv").unwrap().sha256.clone();
    assert_ne!(hash(&a), hash(&other));
}

#[test]
fn skipped_stages_reuse_cached_outputs() {
    let dir = world_dir(5, 0.1);
    let text = world_config_text(5, "out") + SMALL_CHAIN;
    let first = run_pipeline(&config(dir.path(), &text)).unwrap();
    let skipped = text.clone() + "\n[skip]\nimpute = true\nextract = true\n";
    let second = run_pipeline(&config(dir.path(), &skipped)).unwrap();
    assert_eq!(second.entry("completed.csv").unwrap().status, EntryStatus::Cached);
    assert_eq!(second.entry("features.csv").unwrap().status, EntryStatus::Cached);
    assert_eq!(second.entry("out.txt").unwrap().status, EntryStatus::Fresh);
    assert_eq!(first.hashes(), second.hashes());

    let fresh = tempfile::tempdir().unwrap();
    small_world(5, 0.1).write_files(fresh.path()).unwrap();
    let err = run_pipeline(&config(fresh.path(), &skipped)).unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
}

#[test]
fn optional_inputs_are_marked_absent() {
    let dir = world_dir(6, 0.1);
    let text = "seed = 6\n[inputs]\nindicators = indicators.csv\nmortality = mortality.csv\n".to_string() + SMALL_CHAIN;
    let cfg = config(dir.path(), &text);
    let manifest = run_pipeline(&cfg).unwrap();
    for stage in ["spectrum", "validate"] {
        let e = manifest.entries.iter().find(|e| e.stage == stage).unwrap();
        assert_eq!(e.status, EntryStatus::Absent);
        assert!(e.file.is_none());
    }
    let report = emit_report(&manifest);
    assert!(report.contains("no flow effect"), "{report}");
    assert!(report.contains("[gap: period.csv not available]"));
}

#[test]
fn zero_flow_world_reports_no_flow_effect() {
    let dir = world_dir(7, 0.0);
    let cfg = config(dir.path(), &(world_config_text(7, "out") + SMALL_CHAIN));
    run_pipeline(&cfg).unwrap();
    let report = std::fs::read_to_string(cfg.out_dir.join("report.txt")).unwrap();
    let kernel = report.split("== flow kernel ==").nth(1).unwrap();
    assert!(kernel.trim_start().starts_with("no flow effect"), "{report}");
}

#[test]
fn appended_constant_column_leaves_weights_unchanged() {
    let world = small_world(8, 0.1);
    let mut cfg = ChainConfig {
        bottleneck: 4,
        pca_components: 3,
        ..Default::default()
    };
    cfg.autoencoder.epochs = 150;
    let base = run_chain(&world.panel, &world.z_observed, Some(&world.flows), &cfg).unwrap();
    let zeros: Vec<Option<f64>> = vec![Some(0.0); world.panel.n_regions()];
    let panel: IndicatorPanel = world.panel.with_column("constant", &zeros).unwrap();
    let trial = run_chain(&panel, &world.z_observed, Some(&world.flows), &cfg).unwrap();
    let outcome = compare_runs(&base, &trial, TrialKind::NoiseColumn, 0);
    assert_eq!(outcome.max_perturbation, Some(0.0));
}
