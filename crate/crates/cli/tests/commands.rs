//! The `tutor` binary's batch subcommands, end to end on a small simulated run.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tutor_cli::config::ServeConfig;
use tutor_core::sim::PopulationSpec;

fn tutor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tutor")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = tutor(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("config").join(name).display().to_string()
}

#[test]
fn shipped_config_files_parse() {
    let text = std::fs::read_to_string(config("population.toml")).unwrap();
    assert_eq!(PopulationSpec::from_toml(&text).unwrap(), PopulationSpec::paper_population(2024));
    let serve = ServeConfig::load(Path::new(&config("serve.toml"))).unwrap();
    assert_eq!(serve.tutor, tutor_core::service::TutorConfig { seed: 1, ..Default::default() });
    assert!(serve.log_dir.unwrap().ends_with("config/logs"));
}

#[test]
fn simulate_then_analyze_grade_classify_train() {
    let dir = tempfile::tempdir().unwrap();
    let pop = dir.path().join("pop.toml");
    std::fs::write(
        &pop,
        r#"
        seed = 1
        [[cohorts]]
        policy = "Rote"
        count = 12
        condition = "Experimental"
        [[cohorts]]
        policy = "Dabbler"
        count = 12
        condition = "Control"
        [[cohorts]]
        policy = "Selective"
        count = 12
        condition = "SelectiveOriginal"
        "#,
    )
    .unwrap();
    let out = dir.path().join("run");
    let (pop, out_s) = (pop.to_str().unwrap(), out.to_str().unwrap());
    let msg = ok(&["simulate", "--population", pop, "--seed", "9", "--out", out_s]);
    assert!(msg.starts_with("36 sessions"), "{msg}");
    let jsonl = std::fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "jsonl");
    assert_eq!(jsonl.count(), 36);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 9);

    // Analyzing the written logs reproduces the simulator's own report.
    let labels = out.join("labels.json");
    let analysis: Value = serde_json::from_str(&ok(&[
        "analyze",
        "--logs",
        out_s,
        "--phase",
        "training",
        "--groups",
        labels.to_str().unwrap(),
    ]))
    .unwrap();
    assert_eq!(analysis, report["training"]);
    let post: Value = serde_json::from_str(&ok(&["analyze", "--logs", out_s, "--phase", "posttest"])).unwrap();
    assert_eq!(post, report["posttest"]);

    let grades: Vec<Value> = serde_json::from_str(&ok(&["grade", "--logs", out_s])).unwrap();
    assert_eq!(grades.len(), 36);
    for (g, r) in grades.iter().zip(report["reports"].as_array().unwrap()) {
        assert_eq!(g["session_id"], r["session_id"]);
        assert_eq!(g["scores"], r["scores"]);
        assert_eq!(g["nlg"], r["nlg"]);
    }

    let groups: BTreeMap<String, String> =
        serde_json::from_str(&std::fs::read_to_string(out.join("groups.json")).unwrap()).unwrap();
    let baseline: Vec<Value> = serde_json::from_str(&ok(&["classify", "--pretest-logs", out_s])).unwrap();
    let hits = baseline.iter().filter(|c| groups[c["session_id"].as_str().unwrap()] == c["label"]).count();
    assert!(hits >= 33, "baseline matched {hits}/36");
    assert!(baseline[0].get("probabilities").is_none());

    let model = dir.path().join("forest.json");
    ok(&[
        "train-forest",
        "--logs",
        out_s,
        "--groups",
        out.join("groups.json").to_str().unwrap(),
        "--seed",
        "4",
        "--trees",
        "25",
        "--out",
        model.to_str().unwrap(),
    ]);
    let one = out.join(format!("{}.jsonl", baseline[0]["session_id"].as_str().unwrap()));
    let forest: Vec<Value> = serde_json::from_str(&ok(&[
        "classify",
        "--pretest-logs",
        one.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
    ]))
    .unwrap();
    assert_eq!(forest.len(), 1);
    let p: f64 = forest[0]["probabilities"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((p - 1.0).abs() < 1e-9);
}

#[test]
fn validate_reports_and_fails_on_bad_corpus() {
    let text = ok(&["validate"]);
    assert!(text.ends_with("28 problems, 0 failed\n"), "{text}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let corpus = tutor_core::curriculum::DEFAULT_CURRICULUM.replacen("reference_length = 2", "reference_length = 7", 1);
    std::fs::write(&bad, corpus).unwrap();
    let out = tutor(&["validate", "--curriculum", bad.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout.contains("pre-1  FAIL fc=2   bc=3   reference_length 7 but the prover finds 2;"), "{stdout}");
    assert!(stdout.ends_with("28 problems, 1 failed\n"));

    // Unsound problems are refused at load time.
    let unsound = dir.path().join("unsound.toml");
    let corpus = tutor_core::curriculum::DEFAULT_CURRICULUM.replacen("conclusion = \"~p\"", "conclusion = \"p\"", 1);
    std::fs::write(&unsound, corpus).unwrap();
    let out = tutor(&["validate", "--curriculum", unsound.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("do not entail"));
}

#[test]
fn bad_inputs_exit_nonzero_with_a_message() {
    let out = tutor(&["grade", "--logs", "/nonexistent/logs"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = tutor(&["analyze", "--logs", ".", "--phase", "lunch"]);
    assert!(!out.status.success());
}
