use std::path::Path;
use std::process::{Command, Output};

fn fluflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fluflow"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path) {
    let o = fluflow(
        dir,
        &["synth", "--seed", "3", "--out", "world", "--regions", "50", "--indicators", "16", "--noise", "0.05"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ini = dir.join("world/fluflow.ini");
    let mut text = std::fs::read_to_string(&ini).unwrap();
    text.push_str("\n[autoencoder]\nbottleneck = 3\nepochs = 100\n\n[pca]\ncomponents = 3\n\n[bootstrap]\nreplicates = 100\n");
    std::fs::write(ini, text).unwrap();
}

#[test]
fn synth_needs_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = fluflow(dir.path(), &["synth"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fluflow(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(fluflow(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fluflow(dir.path(), &["run", "--config", "nope.ini"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn single_stages_chain_through_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let cfg = ["--config", "world/fluflow.ini"];
    let run = |cmd: &[&str]| {
        let args: Vec<&str> = cmd.iter().chain(cfg.iter()).copied().collect();
        fluflow(dir.path(), &args)
    };

    let o = run(&["extract-features"]);
    assert_ne!(o.status.code(), Some(0), "extract needs a completed panel first");

    assert!(run(&["impute"]).status.success());
    let report = std::fs::read_to_string(dir.path().join("world/out/completion_report.txt")).unwrap();
    assert!(report.contains("rank = "));

    let o = run(&["spectrum", "--global"]);
    assert!(o.status.success());
    let period = std::fs::read_to_string(dir.path().join("world/out/period.csv")).unwrap();
    assert_eq!(period.lines().count(), 2);
    assert!(period.lines().nth(1).unwrap().starts_with("GLOBAL,"));

    let o = run(&["validate-svm"]);
    assert!(stdout(&o).contains("acc_completed"));

    assert!(run(&["extract-features", "--bottleneck", "2"]).status.success());
    let bic = std::fs::read_to_string(dir.path().join("world/out/bic.csv")).unwrap();
    assert!(bic.lines().nth(1).unwrap().starts_with("2,"));

    assert!(run(&["fit"]).status.success());
    let plain = std::fs::read_to_string(dir.path().join("world/out/out.txt")).unwrap();
    assert!(!plain.contains("alpha_0"));
    assert!(run(&["fit-rectified"]).status.success());
    let rect = std::fs::read_to_string(dir.path().join("world/out/out.txt")).unwrap();
    assert!(rect.contains("alpha_0"));

    assert!(run(&["bootstrap", "--replicates", "100"]).status.success());
    let boot = std::fs::read_to_string(dir.path().join("world/out/bootstrap.csv")).unwrap();
    assert_eq!(boot.lines().count(), 101);
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let o = fluflow(dir.path(), &["run", "--config", "world/fluflow.ini", "--out", "run1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = stdout(&o);
    assert!(lines.lines().any(|l| l.starts_with("impute completed.csv ") && l.ends_with(" fresh")));
    let o = fluflow(dir.path(), &["report", "--out", "run1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("== surviving features =="));
    assert_eq!(text, std::fs::read_to_string(dir.path().join("run1/report.txt")).unwrap());
}
