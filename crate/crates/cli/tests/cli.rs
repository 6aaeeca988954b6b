use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn refscore(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_refscore"))
        .args(args)
        .current_dir(cwd)
        .env_remove("REFSCORE_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CONFIG: &str = r#"seed = 3
models = ["rfc:trees=20"]
groups = ["G1"]

[corpus]
path = "corpus.jsonl"
cutoff_year = 2021

[split]
iterations = 2

[strategy]
trials = 2
"#;

fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = refscore(&["synth", "--n", "400", "--groups", "2", "--seed", "4", "-o", "corpus.jsonl"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn synth_writes_requested_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.jsonl", "b.jsonl"] {
        let o = refscore(&["synth", "--n", "2000", "--signal", "0.8", "--seed", "7", "-o", name], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("measured rank correlation"));
    }
    let a = fs::read_to_string(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a.lines().count(), 2000);
    assert_eq!(a, fs::read_to_string(dir.path().join("b.jsonl")).unwrap());
}

#[test]
fn out_of_range_signal_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = refscore(&["synth", "--signal", "1.5", "-o", "x.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("outside [0, 1]"));
    assert!(!dir.path().join("x.jsonl").exists());
}

#[test]
fn ingest_check_reports_rejected_lines() {
    let dir = prepared();
    let o = refscore(&["ingest-check", "corpus.jsonl"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("400 articles accepted"));

    let mut text = fs::read_to_string(dir.path().join("corpus.jsonl")).unwrap();
    text.push_str("{\"article_id\": \"broken\"}\n");
    fs::write(dir.path().join("bad.jsonl"), text).unwrap();
    let o = refscore(&["ingest-check", "bad.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("line 401"));
}

#[test]
fn missing_corpus_fails_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    let o = refscore(&["run", "run.toml", "-o", "out"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("corpus.jsonl"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn run_then_report_one_group() {
    let dir = prepared();
    let o = refscore(&["run", "run.toml", "-o", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut expected: Vec<String> = refscore::pipeline::OUTPUT_FILES.iter().map(|s| s.to_string()).collect();
    expected.sort();
    assert_eq!(names, expected);

    let o = refscore(&["report", "out", "--csv", "plots"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("G1"));
    assert!(!text.contains("G2"));
    assert!(dir.path().join("plots/group_metrics.csv").exists());

    // Printed values match the JSON they came from.
    let experiments: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("experiments.json")).unwrap()).unwrap();
    let mean = experiments[0]["above_baseline"]["mean"].as_f64().unwrap();
    assert!(text.contains(&format!("{mean:.4}")));

    let summary = fs::read(out.join("summary.json")).unwrap();
    fs::write(out.join("summary.json"), &summary[..summary.len() / 2]).unwrap();
    let o = refscore(&["report", "out"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("summary.json"));
}

#[test]
fn output_directory_falls_back_to_environment() {
    let dir = prepared();
    let o = Command::new(env!("CARGO_BIN_EXE_refscore"))
        .args(["run", "run.toml"])
        .current_dir(dir.path())
        .env("REFSCORE_OUTPUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("from-env/manifest.json").exists());
}

#[test]
fn report_on_missing_directory_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = refscore(&["report", "nowhere"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
