use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "synth.pairs_per_category=200",
    "classifier.train_samples=400",
    "classifier.test_samples_per_category=40",
    "classifier.ngram.buckets=4096",
    "classifier.bow.epochs=5",
    "classifier.ngram.epochs=3",
    "pivots.samples_per_category=200",
    "generator.dim=16",
    "generator.ffn_dim=32",
    "generator.layers=1",
    "generator.epochs=1",
    "generator.train_pairs_per_category=30",
    "generator.test_posts_per_category=25",
    "metrics.trials_per_category=10",
];

fn genderpair(out: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_genderpair"));
    cmd.arg("--out-dir").arg(out);
    for kv in TINY {
        cmd.args(["--set", kv]);
    }
    cmd.args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn stage_without_its_inputs_names_the_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let o = genderpair(dir.path(), &["synth"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = genderpair(dir.path(), &["eval-clf"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("requires artifact model-"), "{}", stderr(&o));
    assert!(stderr(&o).contains("train-clf"), "{}", stderr(&o));

    let empty = tempfile::tempdir().unwrap();
    let o = genderpair(empty.path(), &["train-clf"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("corpus.jsonl"), "{}", stderr(&o));
}

#[test]
fn invalid_configs_exit_with_one_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = genderpair(dir.path(), &["--set", "synth.lambda=1.5", "synth"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("synth.lambda"), "{}", stderr(&o));

    let o = genderpair(dir.path(), &["--set", "synth.no_such_knob=3", "synth"]);
    assert_eq!(o.status.code(), Some(1));

    let file = dir.path().join("bad.toml");
    fs::write(&file, "seed = 1\n[pivots]\nseed = 4\n").unwrap();
    let o = genderpair(dir.path(), &["--config", file.to_str().unwrap(), "synth"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));

    let o = genderpair(dir.path(), &["no-such-command"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("corpus.jsonl").exists());
}

#[test]
fn printed_config_reloads_to_the_same_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = genderpair(dir.path(), &["--seed", "9", "--scheme", "3way", "print-config"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("seed = 9"), "{text}");
    assert!(text.contains("schemes = [\"3way\"]"), "{text}");
    let file = dir.path().join("c.toml");
    fs::write(&file, &text).unwrap();
    let again = Command::new(env!("CARGO_BIN_EXE_genderpair"))
        .args(["--config", file.to_str().unwrap(), "print-config"])
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn help_and_version_exit_zero() {
    for flag in ["--help", "--version"] {
        let o = Command::new(env!("CARGO_BIN_EXE_genderpair")).arg(flag).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{flag}");
    }
}

#[test]
fn classifier_only_run_reports_generation_sections_missing() {
    let dir = tempfile::tempdir().unwrap();
    for stage in ["synth", "train-clf", "eval-clf", "pivots", "attack", "report"] {
        let o = genderpair(dir.path(), &[stage]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let s = &report["sections"];
    assert_eq!(s["table1_classifier_f1"]["status"], "ok");
    assert_eq!(s["figure2_confusion"]["status"], "ok");
    assert_eq!(s["table3_pivot_free_classification"]["status"], "ok");
    assert_eq!(s["table4_generation"]["status"], "missing");
    assert_eq!(s["table5_cross_pwr"]["status"], "missing");
    assert!(dir.path().join("csv/table1_classifier_f1.csv").exists());
    assert!(!dir.path().join("csv/table4_generation.csv").exists());
    let text = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(text.contains("missing: requires"), "{text}");
}

#[test]
fn scheme_flag_limits_the_stages_and_all_finishes_a_tiny_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = genderpair(dir.path(), &["--scheme", "2way", "all"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("model-2way/ngram.bin").exists());
    assert!(!dir.path().join("model-4way").exists());
    assert!(!dir.path().join("attack").exists());
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("gen/model-1/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["responses"], 50);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["sections"]["table4_generation"]["status"], "ok");

    // Re-running one stage leaves the other artifacts untouched.
    let corpus = fs::read(dir.path().join("corpus.jsonl")).unwrap();
    let o = genderpair(dir.path(), &["--scheme", "2way", "eval-gen"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(dir.path().join("corpus.jsonl")).unwrap(), corpus);
}
