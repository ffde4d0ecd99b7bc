use std::path::Path;
use std::process::{Command, Output};

fn mafig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mafig")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn run_twice_gives_identical_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        stdout(&mafig(&["run", "--scenario", "port", "--count", "25", "--seed", "5", "--out", p(out)]));
    }
    let ca = std::fs::read(a.join("summary.csv")).unwrap();
    assert_eq!(ca, std::fs::read(b.join("summary.csv")).unwrap());
    assert!(String::from_utf8(ca).unwrap().starts_with("Task,Method,Total Time (s),Avg Time (s),Success Rate\n"));
    let report = stdout(&mafig(&["report", "--latency", p(&a), p(&b)]));
    assert_eq!(report.lines().count(), 4);
    assert!(report.contains("Perception Time (s)"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "scenario = \"warehouse\"\ncount = 12\ntau = 0.5\n").unwrap();
    let out = dir.path().join("out");
    stdout(&mafig(&["run", "--config", p(&cfg), "--count", "8", "--out", p(&out)]));
    let episodes = std::fs::read_to_string(out.join("episodes.jsonl")).unwrap();
    assert_eq!(episodes.lines().count(), 8);
    assert!(std::fs::read_to_string(out.join("summary.txt")).unwrap().contains("Warehousing"));

    std::fs::write(&cfg, "tau = 2.0\n").unwrap();
    assert!(!mafig(&["run", "--config", p(&cfg)]).status.success());
}

#[test]
fn remote_backend_without_endpoint_fails_cleanly() {
    if std::env::var("MAFIG_REMOTE_ENDPOINT").is_ok() {
        return;
    }
    let o = Command::new(env!("CARGO_BIN_EXE_mafig"))
        .args(["run", "--backend", "remote", "--count", "2"])
        .env_remove("MAFIG_REMOTE_KEY")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("MAFIG_REMOTE_ENDPOINT"));
}

#[test]
fn sfl_commands() {
    let loss = stdout(&mafig(&["sfl", "loss", "--logprobs=-0.1,-2.0,-1.0,-3.0", "--weights", "1,5,5,0"]));
    let v: f64 = loss.trim().parse().unwrap();
    assert!((v - 15.1 / 11.0).abs() < 1e-12);
    let w = stdout(&mafig(&["sfl", "weights", "--target", "a<<EDIT_START>>x<<EDIT_END>>", "--padded-len", "6"]));
    assert_eq!(w.trim(), "[1.0,5.0,5.0,5.0,0.0,0.0]");
    assert!(!mafig(&["sfl", "loss", "--logprobs=-1", "--weights", "0"]).status.success());

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("port.jsonl");
    stdout(&mafig(&["sfl", "build", "--scenario", "port", "--out", p(&out)]));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 80);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["meta"]["tokenizer_id"], "word-punct-v1");
    assert_eq!(first["meta"]["lambda_edit"], 5.0);
}

#[test]
fn library_commands() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("lib");
    stdout(&mafig(&["lib", "export", "--scenario", "deck", "--dir", p(&lib)]));
    let v = stdout(&mafig(&["lib", "validate", "--scenario", "deck", "--dir", p(&lib)]));
    assert!(v.contains("25 functions"));
    let list = stdout(&mafig(&["lib", "show", "--scenario", "port"]));
    assert!(list.contains("8 functions"));
    let one = stdout(&mafig(&["lib", "show", "--scenario", "deck", "vehicle_usable"]));
    assert!(one.contains("fn vehicle_usable("));
    assert!(!mafig(&["lib", "show", "--scenario", "deck", "nope"]).status.success());
}

#[test]
fn corpus_and_localization_files() {
    let dir = tempfile::tempdir().unwrap();
    let cases = dir.path().join("cases.jsonl");
    stdout(&mafig(&["gen-cases", "--scenario", "deck", "--per-category", "1", "--out", p(&cases)]));
    assert_eq!(std::fs::read_to_string(&cases).unwrap().lines().count(), 15);
    let loc = dir.path().join("loc.jsonl");
    stdout(&mafig(&["loc-dataset", "--scenario", "deck", "--cases", p(&cases), "--out", p(&loc)]));
    assert!(std::fs::read_to_string(&loc).unwrap().lines().count() <= 15);
    let out = dir.path().join("run");
    stdout(&mafig(&["run", "--scenario", "deck", "--cases", p(&cases), "--out", p(&out)]));
    assert_eq!(std::fs::read_to_string(out.join("episodes.jsonl")).unwrap().lines().count(), 15);
}
