use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clap::CommandFactory;
use tempfile::TempDir;

use agreesim::cli::Cli;

fn agreesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agreesim"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const HEADER: &str = r#"{"scheme": {"labels": [[-1, "Clearly Non-Controversial"], [0, "Possibly Non-Controversial"], [1, "Controversial"], [2, "Very Controversial"]], "positive_threshold": 0.5}}"#;

fn small_dataset(dir: &TempDir) -> PathBuf {
    let mut text = String::from(HEADER);
    text.push('\n');
    let sets = [
        "[2, 2, 1]",
        "[-1, -1, 0]",
        "[1, 2, 2]",
        "[0, -1, -1]",
        "[2, 1, 1]",
        "[-1, 0, 0]",
        "[2, 2, 2]",
        "[-1, -1, -1]",
        "[1, 0, 2]",
        "[0, 0, -1]",
    ];
    for (i, labels) in sets.iter().enumerate() {
        text.push_str(&format!("{{\"doc_id\": \"d{i}\", \"labels\": {labels}}}\n"));
    }
    write(dir, "data.jsonl", &text)
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(&dir);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = agreesim(&[
            "simulate",
            s(&data),
            "--system",
            "sample",
            "--truth",
            "average",
            "--trials",
            "300",
            "--seed",
            "42",
            "--out",
            s(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("p50="));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert_eq!(
        report["n_valid"].as_u64().unwrap() + report["n_undefined"].as_u64().unwrap(),
        300
    );
}

#[test]
fn zero_trials_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(&dir);
    let o = agreesim(&[
        "simulate",
        s(&data),
        "--system",
        "sample",
        "--truth",
        "average",
        "--trials",
        "0",
        "--seed",
        "1",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn seed_is_mandatory() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(&dir);
    let o = agreesim(&[
        "simulate",
        s(&data),
        "--system",
        "sample",
        "--truth",
        "average",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn conflation_needs_pairs_without_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{HEADER}\n{{\"doc_id\": \"a\", \"labels\": [1]}}\n{{\"doc_id\": \"b\", \"labels\": [-1]}}\n");
    let data = write(&dir, "single.jsonl", &text);
    let o = agreesim(&[
        "simulate",
        s(&data),
        "--system",
        "conflate(sample)",
        "--truth",
        "sample",
        "--trials",
        "10",
        "--seed",
        "1",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--matrix"), "{}", stderr(&o));

    let o = agreesim(&["conflation", s(&data)]);
    assert!(!o.status.success());
    assert!(
        stderr(&o).contains("conflation unlearnable"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn model_syntax_errors_name_the_token() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(&dir);
    let o = agreesim(&[
        "simulate",
        s(&data),
        "--system",
        "flip(0.5, smaple)",
        "--truth",
        "average",
        "--seed",
        "1",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("smaple"), "{}", stderr(&o));
}

#[test]
fn empty_suite_config_prints_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(&dir);
    let config = write(&dir, "suite.json", "[]");
    let o = agreesim(&["suite", s(&data), "--config", s(&config), "--seed", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("| # | System Model | Truth Model |"));
    assert_eq!(out.lines().count(), 2);
}

#[test]
fn suite_config_rows_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(&dir);
    let config = write(
        &dir,
        "suite.json",
        r#"[{"system": "sample", "truth": "average"}, {"system": "conflate(sample)", "truth": "sample", "metric": "accuracy"}]"#,
    );
    let samples = dir.path().join("samples");
    let md = dir.path().join("table.md");
    let o = agreesim(&[
        "suite",
        s(&data),
        "--config",
        s(&config),
        "--seed",
        "3",
        "--trials",
        "200",
        "--markdown",
        s(&md),
        "--samples-dir",
        s(&samples),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), fs::read_to_string(&md).unwrap());
    assert!(samples.join("row1.samples").exists());
    assert!(samples.join("row2.samples").exists());
}

#[test]
fn unknown_preset_lists_valid_ones() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(&dir);
    let o = agreesim(&["suite", s(&data), "--preset", "table9", "--seed", "1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("table2"), "{}", stderr(&o));
}

#[test]
fn failing_suite_row_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(&dir);
    let config = write(
        &dir,
        "suite.json",
        r#"[{"system": "sample", "truth": "average"}, {"system": "conflate(average)", "truth": "sample"}]"#,
    );
    let out = dir.path().join("reports.json");
    let md = dir.path().join("table.md");
    let o = agreesim(&[
        "suite",
        s(&data),
        "--config",
        s(&config),
        "--seed",
        "3",
        "--trials",
        "50",
        "--out",
        s(&out),
        "--markdown",
        s(&md),
    ]);
    assert!(!o.status.success());
    assert!(stdout(&o).contains("n/a"));
    assert!(stderr(&o).contains("row 2"));
    assert!(!out.exists());
    assert!(!md.exists());
}

#[test]
fn agreement_of_unanimous_dataset_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{HEADER}\n{{\"doc_id\": \"a\", \"labels\": [2, 2]}}\n{{\"doc_id\": \"b\", \"labels\": [0, 0, 0]}}\n");
    let data = write(&dir, "u.jsonl", &text);
    let o = agreesim(&["agreement", s(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim().parse::<f64>().unwrap(), 1.0);
}

#[test]
fn tabular_input_with_sidecar_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let scheme = write(
        &dir,
        "scheme.json",
        r#"{"labels": [[0, "no"], [1, "yes"]], "positive_threshold": 0.5}"#,
    );
    let data = write(&dir, "data.tsv", "a\t1\t1\nb\t1\t0\n");
    let o = agreesim(&["agreement", s(&data), "--scheme", s(&scheme)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim().parse::<f64>().unwrap(), 0.5);

    let o = agreesim(&["agreement", s(&data)]);
    assert!(!o.status.success());
}

#[test]
fn conflation_table_and_matrix_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(&dir);
    let matrix = dir.path().join("m.json");
    let o = agreesim(&["conflation", s(&data), "--out", s(&matrix)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("agreement:"));
    let m = agreesim::ConflationMatrix::from_json_file(&matrix).unwrap();
    assert_eq!(m.total(), 60);

    // the written matrix is accepted back by simulate
    let o = agreesim(&[
        "simulate",
        s(&data),
        "--system",
        "conflate(sample)",
        "--truth",
        "sample",
        "--trials",
        "50",
        "--seed",
        "1",
        "--matrix",
        s(&matrix),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn assess_places_scores() {
    let dir = tempfile::tempdir().unwrap();
    let samples = write(
        &dir,
        "s.samples",
        &(1..=100)
            .map(|i| format!("{}\n", f64::from(i) / 100.0))
            .collect::<String>(),
    );
    let verdict = |score: &str| {
        let o = agreesim(&["assess", "--score", score, "--samples", s(&samples)]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    assert!(verdict("0.5").contains("verdict=within_band"));
    assert!(verdict("0.01").contains("verdict=below_band"));
    assert!(verdict("-0.3").contains("verdict=below_band"));
    assert!(verdict("0.999").contains("verdict=above_band"));

    let json = dir.path().join("v.json");
    let o = agreesim(&[
        "assess",
        "--score",
        "0.856",
        "--samples",
        s(&samples),
        "--out",
        s(&json),
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&json).unwrap()).unwrap();
    assert_eq!(v["verdict"], "within_band");
}

#[test]
fn synth_outputs_loadable_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("synth.jsonl");
    let o = agreesim(&[
        "synth",
        "--seed",
        "9",
        "--docs",
        "40",
        "--annotators",
        "2-4",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let d = agreesim::label::load_dataset_file(&out, agreesim::DatasetFormat::Jsonl, None).unwrap();
    assert_eq!(d.len(), 40);
    assert!(d
        .documents()
        .iter()
        .all(|doc| (2..=4).contains(&doc.labels.len())));

    let o = agreesim(&[
        "synth",
        "--seed",
        "9",
        "--docs",
        "5",
        "--mode",
        "dirichlet",
        "--alpha",
        "1,1,1,1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 6);

    let o = agreesim(&["synth", "--seed", "9", "--annotators", "0"]);
    assert!(!o.status.success());
}

#[test]
fn failed_run_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(&dir);
    let out = dir.path().join("never.json");
    let o = agreesim(&[
        "simulate",
        s(&data),
        "--system",
        "conflate(average)",
        "--truth",
        "sample",
        "--trials",
        "10",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert!(!o.status.success());
    assert!(!out.exists());
}

#[test]
fn every_argument_is_documented() {
    let mut root = Cli::command();
    root.build();
    for sub in root.get_subcommands().filter(|c| c.get_name() != "help") {
        assert!(sub.get_about().is_some(), "{} has no about", sub.get_name());
        let help = agreesim(&[sub.get_name(), "--help"]);
        assert!(help.status.success(), "{} --help failed", sub.get_name());
        let text = stdout(&help);
        for arg in sub.get_arguments() {
            let id = arg.get_id().as_str();
            if id == "help" {
                continue;
            }
            assert!(
                arg.get_help().is_some(),
                "{} {id} has no help",
                sub.get_name()
            );
            let shown = match arg.get_long() {
                Some(long) => format!("--{long}"),
                None => id.to_uppercase(),
            };
            assert!(
                text.contains(&shown),
                "{} help lacks {shown}",
                sub.get_name()
            );
        }
    }
}
