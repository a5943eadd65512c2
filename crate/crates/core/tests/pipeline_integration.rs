//! End-to-end checks of the `mindstate` binary: every subcommand is exercised
//! through its real CLI surface against a small synthesized corpus.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use mindstate::FeatureMatrix;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mindstate")
}

fn scratch() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("pipeline_integration");
    fs::create_dir_all(&dir).expect("create scratch dir");
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn mindstate")
}

fn expect_ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn expect_err(out: &Output) -> String {
    assert!(!out.status.success(), "command unexpectedly succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small shared corpus: 2 subjects x 3 trials of 30 minutes at 64 Hz. With the
/// default drop of the first two trials per subject, one trial each survives.
fn corpus_dir() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = scratch().join("corpus");
        let out = run(&[
            "synth",
            "--out",
            dir.to_str().unwrap(),
            "--subjects",
            "2",
            "--trials",
            "3",
            "--minutes",
            "30",
            "--fs",
            "64",
            "--seed",
            "7",
        ]);
        let stdout = expect_ok(&out);
        assert!(stdout.contains("wrote 6 recordings"), "stdout: {stdout}");
        dir
    })
}

/// Default-parameter features for the shared corpus (1798 rows x 252 columns).
fn features_path() -> &'static Path {
    static PATH: OnceLock<PathBuf> = OnceLock::new();
    PATH.get_or_init(|| {
        let path = scratch().join("default.features");
        let manifest = corpus_dir().join("manifest.csv");
        let out = run(&[
            "featurize",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            path.to_str().unwrap(),
        ]);
        let stdout = expect_ok(&out);
        assert!(stdout.contains("1798 rows x 252 features"), "stdout: {stdout}");
        path
    })
}

#[test]
fn synth_is_deterministic_and_validates_duration() {
    let args = |dir: &Path| {
        vec![
            "synth".to_string(),
            "--out".into(),
            dir.display().to_string(),
            "--subjects".into(),
            "2".into(),
            "--trials".into(),
            "2".into(),
            "--minutes".into(),
            "30".into(),
            "--fs".into(),
            "64".into(),
            "--seed".into(),
            "11".into(),
        ]
    };
    let dir_a = scratch().join("synth_a");
    let dir_b = scratch().join("synth_b");
    for d in [&dir_a, &dir_b] {
        let _ = fs::remove_dir_all(d);
        let argv = args(d);
        let argv: Vec<&str> = argv.iter().map(|s| s.as_str()).collect();
        expect_ok(&run(&argv));
    }

    let manifest_a = fs::read(dir_a.join("manifest.csv")).unwrap();
    let manifest_b = fs::read(dir_b.join("manifest.csv")).unwrap();
    assert_eq!(manifest_a, manifest_b, "manifest bytes differ between identical runs");

    let mut rec_names: Vec<String> = fs::read_dir(dir_a.join("recordings"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    rec_names.sort();
    assert_eq!(rec_names.len(), 4, "2 subjects x 2 trials");
    for name in &rec_names {
        let a = fs::read(dir_a.join("recordings").join(name)).unwrap();
        let b = fs::read(dir_b.join("recordings").join(name)).unwrap();
        assert_eq!(a, b, "recording {name} differs between identical runs");
    }

    // Trials must be at least 30 minutes.
    let out = run(&[
        "synth",
        "--out",
        scratch().join("synth_short").to_str().unwrap(),
        "--minutes",
        "15",
    ]);
    let stderr = expect_err(&out);
    assert!(stderr.contains("30"), "stderr: {stderr}");
}

#[test]
fn featurize_feature_widths_and_errors() {
    // Default montage: 7 channels x 36 bands.
    let fm = FeatureMatrix::read(features_path()).unwrap();
    assert_eq!(fm.num_features(), 252);
    assert_eq!(fm.num_rows(), 1798);
    assert!(
        fm.feature_names[0].starts_with("ch:F3|band:0"),
        "unexpected first feature name {}",
        fm.feature_names[0]
    );

    // A 3-channel subset keeps 3 x 36 = 108 columns.
    let manifest = corpus_dir().join("manifest.csv");
    let narrow = scratch().join("narrow.features");
    let out = run(&[
        "featurize",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        narrow.to_str().unwrap(),
        "--channels",
        "Fz,F3,Pz",
    ]);
    let stdout = expect_ok(&out);
    assert!(stdout.contains("x 108 features"), "stdout: {stdout}");

    // w_l = 3 s gives 1/3 Hz resolution, incompatible with 0.5 Hz bins.
    let out = run(&[
        "featurize",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        scratch().join("bad.features").to_str().unwrap(),
        "--w-l",
        "3",
    ]);
    let stderr = expect_err(&out);
    assert!(stderr.contains("bin size"), "stderr: {stderr}");

    // Unknown channel is rejected.
    let out = run(&[
        "featurize",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        scratch().join("bad2.features").to_str().unwrap(),
        "--channels",
        "Oz",
    ]);
    let stderr = expect_err(&out);
    assert!(stderr.contains("Oz"), "stderr: {stderr}");
}

#[test]
fn train_reports_heldout_subject_and_rejects_single_class() {
    let features = features_path();
    let report = scratch().join("loo_report.txt");
    let out = run(&[
        "train",
        "--features",
        features.to_str().unwrap(),
        "--paradigm",
        "leave-one-out",
        "--subject",
        "s02",
        "--model",
        "svm",
        "--svm-epochs",
        "5",
        "--out-report",
        report.to_str().unwrap(),
    ]);
    expect_ok(&out);
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.contains("paradigm=leave-one-out:s02"), "report: {text}");
    assert!(text.contains("test_subjects=s02\n"), "report: {text}");

    // A file holding only one class cannot be split, let alone trained on.
    let fm = FeatureMatrix::read(features).unwrap();
    let focused: Vec<usize> =
        (0..fm.num_rows()).filter(|&i| fm.labels[i] == mindstate::StateLabel::Focused).collect();
    let single = fm.subset(&focused);
    let single_path = scratch().join("single_class.features");
    single.write(&single_path, &[]).unwrap();
    let out = run(&["train", "--features", single_path.to_str().unwrap()]);
    let stderr = expect_err(&out);
    assert!(stderr.contains("absent from the rows being split"), "stderr: {stderr}");

    // Paradigms that hold out a subject require one.
    let out = run(&[
        "train",
        "--features",
        features.to_str().unwrap(),
        "--paradigm",
        "subject-specific",
    ]);
    let stderr = expect_err(&out);
    assert!(stderr.contains("--subject"), "stderr: {stderr}");

    let out = run(&[
        "train",
        "--features",
        features.to_str().unwrap(),
        "--paradigm",
        "bogus",
    ]);
    let stderr = expect_err(&out);
    assert!(stderr.contains("common-subject"), "stderr: {stderr}");
}

#[test]
fn train_eval_round_trip_with_saved_model() {
    let features = features_path();
    let model = scratch().join("svm.model");
    let report1 = scratch().join("train_report.txt");
    let out = run(&[
        "train",
        "--features",
        features.to_str().unwrap(),
        "--model",
        "svm",
        "--svm-epochs",
        "5",
        "--seed",
        "3",
        "--out-model",
        model.to_str().unwrap(),
        "--out-report",
        report1.to_str().unwrap(),
    ]);
    let stdout = expect_ok(&out);
    assert!(stdout.contains("model saved to"), "stdout: {stdout}");
    let head = fs::read_to_string(&model).unwrap();
    assert!(head.starts_with("mindstate-model v1\n"), "model file magic missing");

    let report2 = scratch().join("eval_report.txt");
    let out = run(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--features",
        features.to_str().unwrap(),
        "--out-report",
        report2.to_str().unwrap(),
    ]);
    let stdout = expect_ok(&out);
    assert!(stdout.contains("balanced_accuracy="), "stdout: {stdout}");
    let text = fs::read_to_string(&report2).unwrap();
    assert!(text.contains("classifier=svm"), "report: {text}");
    assert!(text.contains("paradigm=held-out-file"), "report: {text}");
    assert!(text.contains("test_rows=1798"), "report: {text}");
    assert!(text.contains("model_sha256="), "report: {text}");
}

#[test]
fn config_file_defaults_and_flag_precedence() {
    let manifest = corpus_dir().join("manifest.csv");
    let cfg = scratch().join("run.cfg");
    fs::write(&cfg, "# run defaults\nw_s = 256\nseed = 9\n").unwrap();

    // Config value applies: shift 256 halves the frame count (900 rows).
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "featurize",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        scratch().join("cfg.features").to_str().unwrap(),
    ]);
    let stdout = expect_ok(&out);
    assert!(stdout.contains("900 rows x 252 features"), "stdout: {stdout}");

    // An explicit flag beats the config file.
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "featurize",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        scratch().join("cfg_flag.features").to_str().unwrap(),
        "--w-s",
        "128",
    ]);
    let stdout = expect_ok(&out);
    assert!(stdout.contains("1798 rows x 252 features"), "stdout: {stdout}");

    // Unknown keys are rejected with a line number.
    let bad = scratch().join("bad.cfg");
    fs::write(&bad, "w_s = 256\nvolume = 11\n").unwrap();
    let out = run(&[
        "--config",
        bad.to_str().unwrap(),
        "featurize",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        scratch().join("never.features").to_str().unwrap(),
    ]);
    let stderr = expect_err(&out);
    assert!(stderr.contains("volume") && stderr.contains('2'), "stderr: {stderr}");
}

#[test]
fn sweep_cli_worker_invariance_and_reporting() {
    let manifest = corpus_dir().join("manifest.csv");
    let grid = scratch().join("small.grid");
    fs::write(
        &grid,
        "d_l = 20\nw_l = 4\nw_s = 128, 256\nclassifiers = svm\n\
         paradigms = common-subject\nseeds = 0, 1\nsvm_epochs = 4\n",
    )
    .unwrap();

    let out1 = scratch().join("sweep_w1");
    let out2 = scratch().join("sweep_w3");
    for (dir, workers) in [(&out1, "1"), (&out2, "3")] {
        let _ = fs::remove_dir_all(dir);
        let out = run(&[
            "sweep",
            "--manifest",
            manifest.to_str().unwrap(),
            "--grid",
            grid.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        let stdout = expect_ok(&out);
        assert!(stdout.contains("4 records, 0 errors"), "stdout: {stdout}");
    }
    let bytes1 = fs::read(out1.join("results.csv")).unwrap();
    let bytes2 = fs::read(out2.join("results.csv")).unwrap();
    assert_eq!(bytes1, bytes2, "results depend on worker count");

    // Aggregate by shift: two grouped rows plus the header.
    let table = scratch().join("by_shift.csv");
    let out = run(&[
        "report",
        "--results",
        out1.join("results.csv").to_str().unwrap(),
        "--group-by",
        "w_s",
        "--out",
        table.to_str().unwrap(),
    ]);
    expect_ok(&out);
    let text = fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "table: {text}");
    assert!(lines[0].starts_with("w_s,n,mean_balanced_accuracy"), "table: {text}");
    assert!(lines[1].starts_with("128,2,"), "table: {text}");
    assert!(lines[2].starts_with("256,2,"), "table: {text}");
    assert!(table.with_extension("provenance.json").exists());

    // Unknown grouping axis is rejected by name.
    let out = run(&[
        "report",
        "--results",
        out1.join("results.csv").to_str().unwrap(),
        "--group-by",
        "volume",
        "--out",
        scratch().join("never.csv").to_str().unwrap(),
    ]);
    let stderr = expect_err(&out);
    assert!(stderr.contains("volume"), "stderr: {stderr}");

    // Malformed grid lines are reported with their line number.
    let bad = scratch().join("bad.grid");
    fs::write(&bad, "w_l = 4\nw_s 128\n").unwrap();
    let out = run(&[
        "sweep",
        "--manifest",
        manifest.to_str().unwrap(),
        "--grid",
        bad.to_str().unwrap(),
        "--out",
        scratch().join("never_sweep").to_str().unwrap(),
    ]);
    let stderr = expect_err(&out);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
}
