use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kgwalk::policy::mock::{MockPolicyServer, MockReply};
use serde_json::Value;

const G1_TSV: &str = "A\tfriend\tB\nB\tchild\tC\nB\tchild\tD\nA\tfriend\tE\nE\tchild\tF\n";
const Q1: &str = r#"{"qid":"q1","question":"Who are the children of A's friends?","seeds":["A"],"answers":["C","D","F"]}"#;

fn kgwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgwalk"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn kgwalk")
}

fn ok(args: &[&str]) -> Output {
    let out = kgwalk(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("g1.tsv"), G1_TSV).unwrap();
        fs::write(dir.path().join("q.jsonl"), format!("{Q1}\n")).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

fn lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let out = kgwalk(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_subcommand_or_flag_exits_2() {
    assert_eq!(kgwalk(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(kgwalk(&["mine", "--bogus"]).status.code(), Some(2));
    assert_eq!(kgwalk(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_required_input_is_usage_error() {
    let out = kgwalk(&["mine", "--lmax", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
}

#[test]
fn mine_smoke() {
    let fx = Fixture::new();
    ok(&[
        "mine", "--kg", &fx.arg("g1.tsv"), "--questions", &fx.arg("q.jsonl"), "--lmax", "2",
        "--out", &fx.arg("sft.jsonl"),
    ]);
    let v = lines(&fx.path("sft.jsonl"));
    assert_eq!(v.len(), 3);
    assert_eq!(v[0]["l_max"], 2);
    assert_eq!(v[1]["depth"], 0);
    assert_eq!(v[2]["gold_action"]["answers"], serde_json::json!(["C", "D", "F"]));
}

#[test]
fn runtime_error_exits_1() {
    let fx = Fixture::new();
    let out = kgwalk(&[
        "mine", "--kg", &fx.arg("missing.tsv"), "--questions", &fx.arg("q.jsonl"), "--out",
        &fx.arg("sft.jsonl"),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn split_six_four_deterministic() {
    let fx = Fixture::new();
    let text: String = (0..10)
        .map(|i| format!(r#"{{"qid":"q{i}","question":"?","seeds":["A"],"answers":["C"]}}"#) + "\n")
        .collect();
    fs::write(fx.path("ten.jsonl"), text).unwrap();
    let run = |tag: &str| {
        ok(&[
            "split", "--questions", &fx.arg("ten.jsonl"), "--ratio", "0.6", "--seed", "7",
            "--sft-out", &fx.arg(&format!("sft{tag}.jsonl")), "--rl-out",
            &fx.arg(&format!("rl{tag}.jsonl")),
        ]);
        (
            fs::read_to_string(fx.path(&format!("sft{tag}.jsonl"))).unwrap(),
            fs::read_to_string(fx.path(&format!("rl{tag}.jsonl"))).unwrap(),
        )
    };
    let (a1, b1) = run("1");
    let (a2, b2) = run("2");
    assert_eq!((a1.lines().count(), b1.lines().count()), (6, 4));
    assert_eq!((&a1, &b1), (&a2, &b2));
    let mut all: Vec<&str> = a1.lines().chain(b1.lines()).collect();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), 10);

    assert_eq!(
        kgwalk(&["split", "--questions", &fx.arg("ten.jsonl"), "--ratio", "1.5", "--sft-out", "x", "--rl-out", "y"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn pipeline_oracle_explore_score_eval() {
    let fx = Fixture::new();
    let kg = fx.arg("g1.tsv");
    let q = fx.arg("q.jsonl");
    ok(&["mine", "--kg", &kg, "--questions", &q, "--lmax", "2", "--out", &fx.arg("sft.jsonl")]);
    ok(&[
        "explore", "--kg", &kg, "--questions", &q, "--policy", "oracle", "--gold", &fx.arg("sft.jsonl"),
        "--dmax", "2", "--out", &fx.arg("pred.jsonl"), "--trace-out", &fx.arg("trace.jsonl"),
    ]);
    let pred = lines(&fx.path("pred.jsonl"));
    assert_eq!(pred[0]["answers"], serde_json::json!(["C", "D", "F"]));
    assert_eq!(lines(&fx.path("trace.jsonl")).len(), 2);

    ok(&[
        "score", "--trace", &fx.arg("trace.jsonl"), "--gold", &fx.arg("sft.jsonl"), "--kg", &kg,
        "--out", &fx.arg("scores.jsonl"),
    ]);
    let scores = lines(&fx.path("scores.jsonl"));
    assert_eq!(scores.len(), 2);
    for s in &scores {
        assert_eq!(s["total"], 3.0);
        assert_eq!(s["episode_total"], 6.0);
    }

    ok(&[
        "eval", "--pred", &fx.arg("pred.jsonl"), "--questions", &q, "--kg", &kg, "--khop", "2",
        "--out", &fx.arg("report.json"),
    ]);
    let report: Value = serde_json::from_str(&fs::read_to_string(fx.path("report.json")).unwrap()).unwrap();
    assert_eq!(report["f1_pct"], 100.0);
    assert_eq!(report["hit_ub"], 100.0);
    assert_eq!(report["averaging"], "macro");
    assert_eq!(report["khop"]["hit_pct"], 100.0);
    assert!((report["khop"]["precision_pct"].as_f64().unwrap() - 60.0).abs() < 1e-9);
}

#[test]
fn explore_on_the_fly_oracle_matches_gold_file_and_jobs_are_deterministic() {
    let fx = Fixture::new();
    let mut qs = String::new();
    for (i, (seed, answers)) in [("A", r#"["C","D","F"]"#), ("B", r#"["E"]"#), ("E", r#"["B","C"]"#), ("C", r#"["D"]"#)]
        .iter()
        .enumerate()
    {
        qs.push_str(&format!(r#"{{"qid":"q{i}","question":"?","seeds":["{seed}"],"answers":{answers}}}"#));
        qs.push('\n');
    }
    fs::write(fx.path("qs.jsonl"), qs).unwrap();
    let kg = fx.arg("g1.tsv");
    let q = fx.arg("qs.jsonl");
    ok(&["mine", "--kg", &kg, "--questions", &q, "--lmax", "3", "--out", &fx.arg("sft.jsonl")]);
    let run = |tag: &str, extra: &[&str]| {
        let mut args = vec![
            "explore", "--kg", &kg, "--questions", &q, "--lmax", "3", "--dmax", "3",
        ];
        args.extend_from_slice(extra);
        let pred = fx.arg(&format!("pred-{tag}.jsonl"));
        let trace = fx.arg(&format!("trace-{tag}.jsonl"));
        args.extend_from_slice(&["--out", &pred, "--trace-out", &trace]);
        ok(&args);
        (fs::read(&pred).unwrap(), fs::read(&trace).unwrap())
    };
    let gold = fx.arg("sft.jsonl");
    let base = run("file", &["--gold", &gold]);
    assert_eq!(run("fly", &[]), base);
    assert_eq!(run("jobs", &["--jobs", "3"]), base);
    assert_eq!(run("file-jobs", &["--gold", &gold, "--jobs", "2"]), base);

    // random policy: seeded, so reruns are byte-identical
    let r1 = run("r1", &["--policy", "random:2", "--seed", "5", "--samples", "3"]);
    let r2 = run("r2", &["--policy", "random:2", "--seed", "5", "--samples", "3", "--jobs", "2"]);
    assert_eq!(r1, r2);
    assert_eq!(lines(&fx.path("pred-r1.jsonl")).len(), 12);
}

#[test]
fn config_file_precedence_and_validation() {
    let fx = Fixture::new();
    fs::write(
        fx.path("run.cfg"),
        format!(
            "kg_path = {}\nquestions_path = {}\nd_max = 1\nl_max = 2\n",
            fx.arg("g1.tsv"),
            fx.arg("q.jsonl")
        ),
    )
    .unwrap();
    let cfg = fx.arg("run.cfg");
    ok(&["explore", "--config", &cfg, "--out", &fx.arg("p1.jsonl")]);
    assert_eq!(lines(&fx.path("p1.jsonl"))[0]["answers"], serde_json::json!([]));
    ok(&["explore", "--config", &cfg, "--dmax", "2", "--out", &fx.arg("p2.jsonl")]);
    assert_eq!(
        lines(&fx.path("p2.jsonl"))[0]["answers"],
        serde_json::json!(["C", "D", "F"])
    );

    fs::write(fx.path("bad.cfg"), "beta = -1\n").unwrap();
    let out = kgwalk(&["score", "--config", &fx.arg("bad.cfg"), "--trace", "t", "--gold", "g"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));

    let out = kgwalk(&["explore", "--config", &cfg, "--policy", "gpt", "--out", &fx.arg("p3.jsonl")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn export_sft_renders_prompts() {
    let fx = Fixture::new();
    ok(&[
        "mine", "--kg", &fx.arg("g1.tsv"), "--questions", &fx.arg("q.jsonl"), "--lmax", "2",
        "--out", &fx.arg("sft.jsonl"),
    ]);
    ok(&["export-sft", "--gold", &fx.arg("sft.jsonl"), "--out", &fx.arg("prompts.jsonl")]);
    let v = lines(&fx.path("prompts.jsonl"));
    assert_eq!(v.len(), 2);
    let prompt = v[0]["prompt"].as_str().unwrap();
    assert!(prompt.contains(r#"["A","friend","B"]"#));
    assert!(prompt.contains(r#"{"answers": [], "exploration_paths": []}"#));
    let completion: Value = serde_json::from_str(v[1]["completion"].as_str().unwrap()).unwrap();
    assert_eq!(completion["answers"], serde_json::json!(["C", "D", "F"]));
}

#[test]
fn build_kg_reports_sizes() {
    let fx = Fixture::new();
    ok(&["build-kg", "--kg", &fx.arg("g1.tsv"), "--questions", &fx.arg("q.jsonl"), "--out", &fx.arg("stats.json")]);
    let v: Value = serde_json::from_str(&fs::read_to_string(fx.path("stats.json")).unwrap()).unwrap();
    assert_eq!((v["entities"].clone(), v["edges"].clone()), (6.into(), 10.into()));
    assert_eq!(v["questions"]["max_hops_observed"], 2);
    ok(&["build-kg", "--no-augment", "--kg", &fx.arg("g1.tsv"), "--out", &fx.arg("raw.json")]);
    let v: Value = serde_json::from_str(&fs::read_to_string(fx.path("raw.json")).unwrap()).unwrap();
    assert_eq!(v["edges"], 5);
}

#[test]
fn external_policy_over_http() {
    let fx = Fixture::new();
    let server = MockPolicyServer::start(vec![
        MockReply::Body(r#"{"answers": [], "exploration_paths": [["A","friend","B"]]}"#.into()),
        MockReply::Body(r#"ok: {"answers": ["C"], "exploration_paths": []}"#.into()),
    ])
    .unwrap();
    let policy = format!("external:{}", server.url());
    ok(&[
        "explore", "--kg", &fx.arg("g1.tsv"), "--questions", &fx.arg("q.jsonl"), "--policy", &policy,
        "--dmax", "2", "--out", &fx.arg("pred.jsonl"), "--trace-out", &fx.arg("trace.jsonl"),
    ]);
    assert_eq!(lines(&fx.path("pred.jsonl"))[0]["answers"], serde_json::json!(["C"]));
    let sent: Value = serde_json::from_str(&server.received()[0]).unwrap();
    assert_eq!(sent["qid"], "q1");
    assert!(sent["prompt"].as_str().unwrap().contains("question:"));

    let dead = MockPolicyServer::start(vec![MockReply::Status(503), MockReply::Status(503)]).unwrap();
    let out = kgwalk(&[
        "explore", "--kg", &fx.arg("g1.tsv"), "--questions", &fx.arg("q.jsonl"), "--policy",
        &format!("external:{}", dead.url()), "--policy-retries", "1", "--out", &fx.arg("dead.jsonl"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let pred = lines(&fx.path("dead.jsonl"));
    assert_eq!(pred[0]["termination"]["kind"], "aborted");
}
