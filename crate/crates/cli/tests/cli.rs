use std::path::Path;
use std::process::{Command, Output};

use reguider::embeddings::EmbeddingFile;

const SMALL: &[&str] = &[
    "--dataset",
    "synth:length=500",
    "--lookback",
    "24",
    "--horizons",
    "12",
    "--epochs",
    "2",
    "--teacher_epochs",
    "2",
    "--d_f",
    "8",
    "--d_g",
    "6",
    "--teacher_hidden",
    "6",
    "--teacher_patch_len",
    "12",
];

fn reguider(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reguider")).args(args).output().unwrap()
}

fn with_small<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(SMALL).chain(tail).copied().collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gradcheck_passes_and_fails_with_exit_codes() {
    let ok = reguider(&["gradcheck"]);
    assert!(ok.status.success(), "{}", stderr(&ok));
    let text = String::from_utf8_lossy(&ok.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 6);

    let strict = reguider(&["gradcheck", "--tol", "1e-15"]);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn configuration_errors_exit_with_2() {
    for args in [
        vec!["train", "--no_such_key", "1"],
        vec!["train", "--dataset", "/definitely/missing.csv"],
        vec!["train", "--lookback", "abc"],
        vec!["report", "/definitely/missing"],
    ] {
        let out = reguider(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn train_refuses_existing_runs_unless_overwriting() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = with_small(&["train"], &["--out", out, "--seeds", "0"]);
    let first = reguider(&args);
    assert!(first.status.success(), "{}", stderr(&first));
    for name in ["base_T12_seed0", "reguider-euclidean_T12_seed0"] {
        for file in ["config.txt", "record.csv", "summary.csv", "student.rgm"] {
            assert!(dir.path().join(name).join(file).exists(), "{name}/{file}");
        }
    }
    assert!(dir.path().join("teacher_T12.rgm").exists());

    let again = reguider(&args);
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("--overwrite"));

    // The flag is honoured after overrides too.
    let mut forced = args.clone();
    forced.push("--overwrite");
    let forced = reguider(&forced);
    assert!(forced.status.success(), "{}", stderr(&forced));
}

#[test]
fn base_only_runs_need_no_teacher() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = with_small(
        &["train"],
        &[
            "--out",
            out,
            "--variants",
            "base",
            "--teacher",
            "checkpoint",
            "--teacher_path",
            "/missing.rgm",
        ],
    );
    let run = reguider(&args);
    assert!(run.status.success(), "{}", stderr(&run));
    assert!(!dir.path().join("teacher_T12.rgm").exists());
}

#[test]
fn teacher_pretraining_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.rgm");
    let b = dir.path().join("b.rgm");
    for path in [&a, &b] {
        let args = with_small(&["pretrain-teacher", "--to", path.to_str().unwrap()], &[]);
        let out = reguider(&args);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(dir.path().join("a.log.csv").exists());
}

fn train_and_report(dir: &Path, metrics: &str) -> String {
    let out = dir.to_str().unwrap();
    let args = with_small(&["train"], &["--out", out, "--seeds", "0,1", "--metrics", metrics, "--jobs", "2"]);
    let run = reguider(&args);
    assert!(run.status.success(), "{}", stderr(&run));
    let report = reguider(&["report", out]);
    assert!(report.status.success(), "{}", stderr(&report));
    String::from_utf8_lossy(&report.stdout).into_owned()
}

#[test]
fn report_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let printed = train_and_report(dir.path(), "euclidean,kl");
    let main = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(main.lines().count(), 2);
    assert!(main.starts_with("dataset,T,base_mse"));
    let by_metric = std::fs::read_to_string(dir.path().join("report_metrics.csv")).unwrap();
    assert_eq!(by_metric.lines().count(), 3);
    assert!(printed.contains(main.lines().nth(1).unwrap()));
}

#[test]
fn parallel_and_serial_runs_agree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    train_and_report(a.path(), "euclidean");
    let out = b.path().to_str().unwrap();
    let serial = reguider(&with_small(&["train"], &["--out", out, "--seeds", "0,1", "--jobs", "1"]));
    assert!(serial.status.success());
    for run in ["base_T12_seed1", "reguider-euclidean_T12_seed0"] {
        let read = |d: &Path| std::fs::read(d.join(run).join("student.rgm")).unwrap();
        assert_eq!(read(a.path()), read(b.path()), "{run}");
    }
}

#[test]
fn export_and_evaluate_from_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = reguider(&with_small(&["train"], &["--out", out, "--seeds", "0"]));
    assert!(run.status.success(), "{}", stderr(&run));
    let student = dir.path().join("reguider-euclidean_T12_seed0/student.rgm");
    let teacher = dir.path().join("teacher_T12.rgm");
    let emb = dir.path().join("emb/test.rge");

    let export = reguider(&[
        "export-embeddings",
        "--out",
        emb.to_str().unwrap(),
        "--dataset",
        "synth:length=500",
        "--checkpoint",
        student.to_str().unwrap(),
        "--teacher",
        "checkpoint",
        "--teacher_path",
        teacher.to_str().unwrap(),
    ]);
    assert!(export.status.success(), "{}", stderr(&export));
    let file = EmbeddingFile::load(&emb).unwrap();
    assert_eq!((file.d_f, file.d_g), (8, 6));
    assert!(!file.records.is_empty());

    let eval = reguider(&[
        "evaluate",
        "--dataset",
        "synth:length=500",
        "--checkpoint",
        student.to_str().unwrap(),
    ]);
    assert!(eval.status.success(), "{}", stderr(&eval));
    let summary = std::fs::read_to_string(dir.path().join("reguider-euclidean_T12_seed0/summary.csv")).unwrap();
    let mse: f64 = summary.lines().nth(1).unwrap().split(',').nth(5).unwrap().parse().unwrap();
    assert!(String::from_utf8_lossy(&eval.stdout).contains(&format!("{:016x}", mse.to_bits())));

    let missing = reguider(&["evaluate", "--checkpoint", "/missing.rgm"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn every_horizon_and_seed_gets_a_run_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = with_small(&["train"], &["--out", out, "--horizons", "6,12", "--seeds", "0,1", "--epochs", "1"]);
    let run = reguider(&args);
    assert!(run.status.success(), "{}", stderr(&run));
    let mut runs: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    runs.sort();
    assert_eq!(runs.iter().filter(|r| r.starts_with("base_")).count(), 4);
    assert_eq!(runs.iter().filter(|r| r.starts_with("reguider-euclidean_")).count(), 4);
    assert!(dir.path().join("teacher_T6.rgm").exists() && dir.path().join("teacher_T12.rgm").exists());
}

#[test]
fn divergent_training_aborts_naming_the_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = with_small(&["train"], &["--out", out, "--variants", "base", "--learning_rate", "1e200"]);
    let run = reguider(&args);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("epoch"), "{}", stderr(&run));
}
