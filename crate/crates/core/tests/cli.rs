mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::FakeSidecar;
use ponte::harness::{ClusterReport, CstsReport, TemplateSearchReport};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn ponte(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ponte"))
        .args(args)
        .env_remove("PONTE_CACHE_DIR")
        .env_remove("PONTE_BACKEND_URL")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn only_file(dir: &Path, ext: &str) -> PathBuf {
    let files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    assert_eq!(files.len(), 1, "{files:?}");
    files[0].clone()
}

#[test]
fn embed_prints_vector_json() {
    let o = ponte(&[
        "embed",
        "--backend-url",
        "mock:12:3",
        "--generate-words",
        "--text",
        "Best fish I have ever had.",
        "--condition",
        "the emotion",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["dim"], 12);
    assert_eq!(v["embedding"].as_array().unwrap().len(), 12);
    assert_eq!(v["model_id"], "mock-d12-s3");
    assert!(v["rendered"].as_str().unwrap().ends_with("in terms of the emotion: \""));
    assert_eq!(v["generated_word"].as_str().unwrap().len(), 8);
}

#[test]
fn csts_eval_writes_report_and_tsv() {
    let out = tempfile::tempdir().unwrap();
    let o = ponte(&[
        "csts-eval",
        "--dataset",
        fixture("contrast_pairs.jsonl").to_str().unwrap(),
        "--template",
        "t9",
        "--out",
        out.path().to_str().unwrap(),
        "--tsv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json = only_file(out.path(), "json");
    let name = json.file_name().unwrap().to_str().unwrap();
    assert!(name.starts_with("csts-contrast_pairs-T9-"), "{name}");
    let report = CstsReport::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report.summary.n, 4);
    assert!(report.is_consistent().unwrap());
    let tsv = std::fs::read_to_string(only_file(out.path(), "tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 5);
    assert!(stderr(&o).contains("spearman"));
}

#[test]
fn split_filter_and_stdout_report() {
    let o = ponte(&[
        "csts-eval",
        "--dataset",
        fixture("csts_small.csv").to_str().unwrap(),
        "--split",
        "validation",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = CstsReport::from_json(&stdout(&o)).unwrap();
    assert_eq!(report.summary.n, 2);
}

#[test]
fn cluster_eval_and_condition_search() {
    let data = fixture("tweet_emotion.jsonl");
    let o = ponte(&[
        "cluster-eval",
        "--dataset",
        data.to_str().unwrap(),
        "--condition",
        "the emotion",
        "--seeds",
        "0,1,2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = ClusterReport::from_json(&stdout(&o)).unwrap();
    assert_eq!(report.condition.as_deref(), Some("the emotion"));
    assert_eq!(report.config.seeds, vec![0, 1, 2]);
    assert_eq!(report.summary.k, 4);

    let o = ponte(&[
        "condition-search",
        "--dataset",
        data.to_str().unwrap(),
        "--condition",
        "the emotion",
        "--condition",
        "the topic",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stderr(&o).lines().filter(|l| l.ends_with('*')).count(), 1);
}

#[test]
fn cluster_eval_takes_one_condition() {
    let o = ponte(&[
        "cluster-eval",
        "--dataset",
        fixture("emotions_small.csv").to_str().unwrap(),
        "--condition",
        "a",
        "--condition",
        "b",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn template_search_over_candidates() {
    let o = ponte(&[
        "template-search",
        "--dataset",
        fixture("contrast_pairs.jsonl").to_str().unwrap(),
        "--candidates",
        "T1,T9,PromptEOL",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = TemplateSearchReport::from_json(&stdout(&o)).unwrap();
    assert_eq!(report.summary.ranking.len(), 3);
    assert_eq!(report.summary.ranking.iter().filter(|r| r.selected).count(), 1);
}

#[test]
fn custom_templates_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("extra.tsv");
    std::fs::write(&file, "# mine\nX1\tIn one word, \"{text}\" regarding {condition} is: \"\n").unwrap();
    let o = ponte(&[
        "embed",
        "--templates-file",
        file.to_str().unwrap(),
        "--template",
        "X1",
        "--text",
        "hello",
        "--condition",
        "the tone",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("regarding the tone is:"));
}

#[test]
fn input_errors_exit_two() {
    let cases: Vec<Vec<String>> = vec![
        vec!["csts-eval".into(), "--dataset".into(), fixture("csts_bad_score.csv").display().to_string()],
        vec!["csts-eval".into(), "--dataset".into(), fixture("csts_constant_gold.csv").display().to_string()],
        vec!["csts-eval".into(), "--dataset".into(), "/nonexistent/file.csv".into()],
        vec!["csts-eval".into(), "--dataset".into(), fixture("csts_small.csv").display().to_string(), "--template".into(), "T99".into()],
        vec!["embed".into(), "--text".into(), "x".into()],
        vec!["embed".into(), "--text".into(), "x".into(), "--backend-url".into(), "mock:1".into(), "--condition".into(), "c".into()],
        vec!["embed".into(), "--backend-url".into(), "http://127.0.0.1:9".into(), "--text".into(), "x".into(), "--condition".into(), "c".into()],
        vec!["no-such-command".into()],
    ];
    for args in cases {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = ponte(&refs);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn backend_failures_exit_three() {
    let o = ponte(&[
        "embed",
        "--backend-url",
        "http://127.0.0.1:9",
        "--model-id",
        "m",
        "--timeout",
        "2",
        "--text",
        "x",
        "--condition",
        "c",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let server = FakeSidecar::start(|_| (503, r#"{"error":"model still loading"}"#.into()));
    let o = ponte(&[
        "csts-eval",
        "--backend-url",
        &server.url,
        "--model-id",
        "m",
        "--dataset",
        fixture("csts_small.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("model still loading"));
}

#[test]
fn sidecar_backed_run_with_cache() {
    let server = FakeSidecar::echo("tiny", 24);
    let cache = tempfile::tempdir().unwrap();
    let data = fixture("contrast_pairs.jsonl");
    let args = [
        "csts-eval",
        "--backend-url",
        &server.url,
        "--model-id",
        "tiny",
        "--generate-words",
        "--cache-dir",
        cache.path().to_str().unwrap(),
        "--dataset",
        data.to_str().unwrap(),
    ];
    let first = ponte(&args);
    assert!(first.status.success(), "{}", stderr(&first));
    // conditions differ per row, so all eight prompts are distinct
    assert_eq!(server.count(), 8);
    let second = ponte(&args);
    assert!(second.status.success());
    assert_eq!(server.count(), 8);

    let a = CstsReport::from_json(&stdout(&first)).unwrap();
    let b = CstsReport::from_json(&stdout(&second)).unwrap();
    assert_eq!(a.items, b.items);
    assert_eq!(a.summary, b.summary);

    let stats = ponte(&["cache", "--cache-dir", cache.path().to_str().unwrap(), "stats"]);
    assert!(stdout(&stats).starts_with("entries\t8\n"), "{}", stdout(&stats));
    let clear = ponte(&["cache", "--cache-dir", cache.path().to_str().unwrap(), "clear"]);
    assert_eq!(stdout(&clear), "removed\t8\n");
}

#[test]
fn project_writes_tsv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = dir.path().join("out/points.tsv");
    let svg = dir.path().join("out/points.svg");
    let o = ponte(&[
        "project",
        "--dataset",
        fixture("tweet_emotion.jsonl").to_str().unwrap(),
        "--condition",
        "the emotion",
        "--condition",
        "the topic",
        "--iters",
        "300",
        "--generate-words",
        "--out",
        tsv.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let body = std::fs::read_to_string(&tsv).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], "x\ty\tlabel\tgenerated_word\tcondition");
    assert_eq!(lines.len(), 1 + 24);
    assert!(lines[1..].iter().all(|l| l.split('\t').count() == 5));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}
