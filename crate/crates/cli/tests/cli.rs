use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pluralism_core::annotate::mock::{MockResponse, MockServer};
use pluralism_core::io::{load_cases, CaseFormat};
use serde_json::Value;

const FAST_CONFIG: &str = "\
[stack]
folds = 3
[stack.meta]
n_rounds = 10
max_depth = 3
[stack.learners.forest]
n_trees = 20
[stack.learners.boost]
n_rounds = 10
[stack.learners.linear]
epochs = 5
";

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pluralism"));
    cmd.env_remove("ETHICS_LLM_TOKEN");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Generates a 150-case synthetic fixture and a fast config in `dir`.
fn fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let gen = dir.join("gen");
    let out = run(&["generate", "--out", s(&gen), "--per-class", "10", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let config = dir.join("fast.toml");
    std::fs::write(&config, FAST_CONFIG).unwrap();
    (gen.join("cases.jsonl"), gen.join("embeddings.jsonl"), config)
}

#[test]
fn ingest_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (cases, _, _) = fixture(dir.path());
    let ok = run(&["ingest", "--data", s(&cases)]);
    assert_eq!(ok.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(doc["report"]["balanced"], true);
    assert_eq!(doc["report"]["n_cases"], 150);

    let text = std::fs::read_to_string(&cases).unwrap();
    let first = text.lines().next().unwrap();
    let dup = dir.path().join("dup.jsonl");
    std::fs::write(&dup, format!("{first}\n{first}\n")).unwrap();
    assert_eq!(run(&["ingest", "--data", s(&dup)]).status.code(), Some(1));

    let missing = dir.path().join("nope.csv");
    assert_eq!(run(&["ingest", "--data", s(&missing)]).status.code(), Some(2));
    assert_eq!(run(&["ingest"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn train_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let (cases, embeds, config) = fixture(dir.path());
    let out = dir.path().join("run");
    let args = ["train", "--config", s(&config), "--data", s(&cases), "--embeddings", s(&embeds), "--out", s(&out)];
    let res = run(&args);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["run.json", "model.json", "report.json", "predictions.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report = read(&out.join("report.json"));
    let acc = report["report"]["exact_match_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(report["leak_free"], true);
    assert_eq!(read(&out.join("run.json"))["seed"], 42);

    // Same seed again: identical metrics and model payload.
    let out2 = dir.path().join("run2");
    let mut args2 = args;
    args2[8] = s(&out2);
    assert_eq!(run(&args2).status.code(), Some(0));
    assert_eq!(report["report"], read(&out2.join("report.json"))["report"]);
    assert_eq!(read(&out.join("model.json"))["payload"], read(&out2.join("model.json"))["payload"]);

    let res = run(&["analyze", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let analytics = read(&out.join("analytics.json"));
    let h = &analytics["entropy"];
    assert!(h["mean_calibrated"].as_f64().unwrap() <= h["mean_raw"].as_f64().unwrap());
    assert_eq!(analytics["projection"]["source"], "supervector");

    let rows = |f: &str| std::fs::read_to_string(out.join(f)).unwrap().lines().count() - 1;
    let test_size = report["test_size"].as_u64().unwrap() as usize;
    assert_eq!(rows("simplex_points.csv"), test_size);
    assert_eq!(rows("projection_2d.csv"), test_size);
    assert!(rows("overlap.csv") <= 105);
    assert_eq!(rows("confidence_strata.csv"), 10);

    let coverage: f64 = csv::Reader::from_path(out.join("confidence_strata.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap()[2].parse::<f64>().unwrap())
        .sum();
    assert!((coverage - 1.0).abs() < 1e-12);

    // External coordinates replace PCA.
    let coords = dir.path().join("coords.csv");
    let mut text = String::from("case_id,x,y\n");
    for p in read(&out.join("predictions.json"))["predictions"].as_array().unwrap() {
        text.push_str(&format!("{},1.5,-2\n", p["case_id"].as_str().unwrap()));
    }
    std::fs::write(&coords, text).unwrap();
    assert_eq!(run(&["analyze", "--out", s(&out), "--coords", s(&coords)]).status.code(), Some(0));
    assert_eq!(read(&out.join("analytics.json"))["projection"]["source"], "external");

    let empty = dir.path().join("empty");
    assert_eq!(run(&["analyze", "--out", s(&empty)]).status.code(), Some(2));
}

#[test]
fn evaluate_both_modes_share_the_split() {
    let dir = tempfile::tempdir().unwrap();
    let (cases, embeds, config) = fixture(dir.path());
    let out = dir.path().join("abl");
    let mut ids = Vec::new();
    for (mode, names) in [
        ("features", ["Full", "SV+C", "N+P+SV", "SV"]),
        ("transformers", ["All", "\u{2212}E1", "\u{2212}E2", "\u{2212}E3"]),
    ] {
        let res = run(&[
            "evaluate", "--ablation", mode, "--config", s(&config), "--data", s(&cases), "--embeddings",
            s(&embeds), "--out", s(&out),
        ]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
        let stdout = String::from_utf8(res.stdout).unwrap();
        let doc = read(&out.join(format!("ablation_{mode}.json")));
        let rows = doc["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 4);
        for (row, name) in rows.iter().zip(names) {
            assert_eq!(row["name"], name);
            assert!(stdout.contains(name));
            ids.push(row["test_ids"].clone());
        }
    }
    assert!(ids.windows(2).all(|w| w[0] == w[1]));

    let bad = run(&["evaluate", "--ablation", "colours", "--data", s(&cases), "--embeddings", "hash"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn annotate_with_mock_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (cases, _, _) = fixture(dir.path());
    let five = dir.path().join("five.jsonl");
    let text = std::fs::read_to_string(&cases).unwrap();
    std::fs::write(&five, text.lines().take(5).collect::<Vec<_>>().join("\n") + "\n").unwrap();

    let poison = load_cases(&five, CaseFormat::Jsonl).unwrap()[3].summary.clone();
    let server = MockServer::start(move |req| {
        if req.user_message().unwrap_or_default().contains(&poison) {
            MockResponse::chat("cannot say")
        } else {
            MockResponse::chat(r#"{"alpha":0.2,"beta":0.2,"gamma":0.6}"#)
        }
    })
    .unwrap();

    let out = dir.path().join("ann");
    let base = ["annotate", "--data", s(&five), "--out", s(&out), "--endpoint"];
    let no_token = bin().args(base).arg(server.url()).output().unwrap();
    assert_eq!(no_token.status.code(), Some(2));
    assert!(server.requests().is_empty());

    let ok = bin()
        .args(base)
        .arg(server.url())
        .args(["--rate", "0"])
        .env("ETHICS_LLM_TOKEN", "tok-123")
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let annotated = load_cases(&out.join("annotated.jsonl"), CaseFormat::Jsonl).unwrap();
    assert_eq!(annotated.len(), 5);
    let filled = annotated.iter().filter(|c| c.prior.map(|p| p.components()) == Some([0.2, 0.2, 0.6])).count();
    let failures = read(&out.join("annotate_failures.json"));
    let failures = failures["failures"].as_array().unwrap();
    assert_eq!(filled, 4);
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0]["case_id"], annotated[3].case_id.as_str());
    let combined = [ok.stdout, ok.stderr].concat();
    assert!(!String::from_utf8_lossy(&combined).contains("tok-123"));
    assert!(!std::fs::read_to_string(out.join("run.json")).unwrap().contains("tok-123"));
}

#[test]
fn annotate_all_failed_is_a_domain_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one.jsonl");
    let (cases, _, _) = fixture(dir.path());
    let first = std::fs::read_to_string(&cases).unwrap().lines().next().unwrap().to_string();
    std::fs::write(&data, first + "\n").unwrap();
    let server = MockServer::start(|_| MockResponse::status(500)).unwrap();
    let config = dir.path().join("ann.toml");
    std::fs::write(&config, "[annotation]\nmax_retries = 0\nretry_backoff_ms = 0\n").unwrap();
    let res = bin()
        .args(["annotate", "--config", s(&config), "--data", s(&data), "--out", s(&dir.path().join("o")), "--endpoint"])
        .arg(server.url())
        .env("ETHICS_LLM_TOKEN", "x")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
}
