use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn grangernet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grangernet"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL: &str = r#"
jobs = 1

[synth]
subjects_per_class = 5
t_len = 30

[model]
hidden = 4
heads = 2

[train]
epochs = 1
batch_size = 5

[cv]
folds = 2
val_fraction = 0.25

[rank]
per_subject = 2
"#;

#[test]
fn synth_cv_rank_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), SMALL).unwrap();
    assert_ok(&grangernet(&["synth", "-c", "run.toml", "-o", "data"], d));
    assert_ok(&grangernet(
        &["cv", "-c", "run.toml", "--data", "data/manifest.csv", "-o", "cv", "--alpha-sweep", "0.1,0.01"],
        d,
    ));
    let table = fs::read_to_string(d.join("cv/summary.txt")).unwrap();
    assert!(table.starts_with("Method"));
    assert_eq!(fs::read_to_string(d.join("cv/alpha_sweep.csv")).unwrap().lines().count(), 3);
    let effective = fs::read_to_string(d.join("cv/effective_config.toml")).unwrap();
    assert!(effective.contains("data/manifest.csv"), "{effective}");

    let out = grangernet(&["rank", "-c", "run.toml", "--data", "data/manifest.csv", "--cv-dir", "cv", "-o", "ranked"], d);
    assert_ok(&out);
    assert!(d.join("ranked/rank_asd.csv").exists());
    assert!(d.join("ranked/rank_control.csv").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), SMALL).unwrap();
    assert_ok(&grangernet(&["synth", "-c", "run.toml", "--subjects-per-class", "6", "--seed", "3", "-o", "data"], d));
    let effective = fs::read_to_string(d.join("data/effective_config.toml")).unwrap();
    assert!(effective.contains("subjects_per_class = 6"), "{effective}");
    assert!(effective.contains("seed = 3"), "{effective}");
    assert_eq!(fs::read_dir(d.join("data/subjects")).unwrap().count(), 12);
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "[synth.design]\nmax_radius = 1.5\n").unwrap();
    let out = grangernet(&["synth", "-c", "bad.toml", "-o", "data"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    fs::write(d.join("typo.toml"), "[train]\nepoch = 3\n").unwrap();
    let out = grangernet(&["synth", "-c", "typo.toml", "-o", "data"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch"));

    fs::write(d.join("run.toml"), SMALL).unwrap();
    assert_ok(&grangernet(&["synth", "-c", "run.toml", "-o", "data"], d));
    let out = grangernet(
        &["rank", "-c", "run.toml", "--data", "data/manifest.csv", "--checkpoint", "missing.json"],
        d,
    );
    assert!(!out.status.success());
}

#[test]
fn gradcheck_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = grangernet(&["gradcheck"], dir.path());
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("max relative error"));
}

#[test]
fn baseline_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), SMALL).unwrap();
    assert_ok(&grangernet(&["synth", "-c", "run.toml", "-o", "data"], d));
    assert_ok(&grangernet(&["baseline", "var", "-c", "run.toml", "--data", "data/manifest.csv", "-o", "var"], d));
    assert!(d.join("var/var_predictability.csv").exists());
    let out = grangernet(&["baseline", "cpm", "-c", "run.toml", "--data", "data/manifest.csv", "-o", "cpm"], d);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("Method"));
}
