use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

#[path = "../../core/tests/common/stub.rs"]
mod stub;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn sample_config() -> PathBuf {
    repo().join("data/sample/leitsatz.toml")
}

fn leitsatz(out: &Path, args: &[&str]) -> Output {
    leitsatz_env(out, args, &[])
}

fn leitsatz_env(out: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_leitsatz"));
    cmd.arg("--config")
        .arg(sample_config())
        .arg("--set")
        .arg(format!("paths.output={:?}", out.display().to_string()))
        .args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = leitsatz(out, args);
    let stderr = String::from_utf8_lossy(&o.stderr).to_string();
    assert!(o.status.success(), "{args:?} failed: {stderr}");
    stderr
}

fn offline_chain(out: &Path) {
    for step in [
        &["ingest"][..],
        &["split"],
        &["stats"],
        &["enrich"],
        &["summarize", "--approach", "lexrank"],
        &["score"],
        &["assign"],
    ] {
        ok(out, step);
    }
}

/// Every file below `dir` except the manifest, which carries timestamps.
fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                files.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    files
}

#[test]
fn stats_table_has_one_row_per_text_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&out, &["ingest"]);
    ok(&out, &["split"]);
    ok(&out, &["stats"]);
    let csv = fs::read_to_string(out.join("tables/lengths.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "text,split,count,min,mean,max,std");
    assert_eq!(lines.len(), 9);
    let keys: Vec<String> = lines[1..].iter().map(|l| l.split(',').take(2).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(
        keys,
        [
            "reasons,all", "reasons,train", "reasons,valid", "reasons,test",
            "guiding_principles,all", "guiding_principles,train", "guiding_principles,valid", "guiding_principles,test",
        ]
    );
    // 5 judgments split 0.7/0.15/0.15 → 3/1/1 (largest remainder).
    let counts: Vec<&str> = lines[1..5].iter().map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(counts, ["5", "3", "1", "1"]);
    for l in &lines[1..] {
        assert_eq!(l.split(',').count(), 7);
    }
}

#[test]
fn lexrank_gives_two_sentence_summaries_for_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&out, &["ingest"]);
    ok(&out, &["summarize", "--approach", "lexrank"]);
    let raw = fs::read_to_string(out.join("summaries/lexrank.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = raw.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 5);
    let reasons = fs::read_to_string(out.join("reasons.jsonl")).unwrap();
    for r in &records {
        assert_eq!(r["approach"], "lexrank");
        assert_eq!(r["sentence_count"], 2);
        assert!(r.get("failure").is_none());
        // Extractive: every sentence occurs verbatim in the reasons text.
        let text = r["text"].as_str().unwrap();
        assert!(!text.is_empty());
        let id = r["judgment_id"].as_str().unwrap();
        let source: serde_json::Value = reasons
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .find(|v| v["id"] == id)
            .unwrap();
        let source = source["reasons"].as_str().unwrap();
        let first_period = text.find(". ").map(|i| &text[..=i]).unwrap_or(text);
        assert!(source.contains(first_period), "{id}: {first_period:?}");
    }
}

#[test]
fn report_reproduces_hand_computed_fulfillment_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&out, &["ingest"]);
    ok(&out, &["summarize", "--approach", "lexrank"]);
    let fixture = repo().join("data/fixtures/verdicts_4x2x3.jsonl");
    ok(&out, &["--set", &format!("paths.verdicts={:?}", fixture.display().to_string()), "report"]);
    let csv = fs::read_to_string(out.join("tables/fulfillment.csv")).unwrap();
    assert_eq!(
        csv,
        "approach,judgments,class_1,class_2,class_3,class_4,class_5,class_6,class_7,mean_classes\n\
         lexrank,4,0.5000,0.7500,0.2500,0.0000,0.2500,0.5000,0.0000,2.2500\n\
         model_enriched,4,1.0000,0.7500,0.7500,0.5000,0.7500,0.5000,0.2500,4.5000\n"
    );
    let pairwise: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("tables/pairwise.json")).unwrap()).unwrap();
    assert!(pairwise["unit"].as_str().unwrap().contains("(summary, class)"));
    let per_class = fs::read_to_string(out.join("tables/per_class.csv")).unwrap();
    for line in per_class.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let (yes, no): (usize, usize) = (cols[7].parse().unwrap(), cols[8].parse().unwrap());
        assert_eq!(yes + no, 24, "{line}");
    }
    // No metrics were scored, so no correlation table.
    assert!(!out.join("tables/correlations.csv").exists());
    assert!(out.join("tables/hallucinations.csv").exists());
}

#[test]
fn exit_codes_separate_config_data_and_external_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let code = |o: Output| o.status.code().unwrap();

    assert_eq!(code(leitsatz(&out, &["--set", "split.sede=3", "split"])), 2);
    assert_eq!(code(leitsatz(&out, &["--set", "split.train=0.9", "split"])), 2);
    assert_eq!(code(leitsatz(&out, &["frobnicate"])), 2);
    assert_eq!(code(leitsatz(&out, &["summarize", "--approach", "model_plain"])), 2);

    assert_eq!(code(leitsatz(&out, &["split"])), 3, "artifact missing");
    assert_eq!(code(leitsatz(&out, &["--set", "paths.corpus=\"/does/not/exist.jsonl\"", "ingest"])), 3);
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\": \"x\"}\nnot json\n").unwrap();
    assert_eq!(code(leitsatz(&out, &["--set", &format!("paths.corpus={:?}", bad.display().to_string()), "ingest"])), 3);

    ok(&out, &["ingest"]);
    let unreachable = [
        "--set", "generation.endpoints.local.url=\"http://127.0.0.1:9\"",
        "--set", "generation.model_plain=\"local\"",
        "--set", "generation.retry_attempts=1",
        "summarize", "--approach", "model_plain",
    ];
    assert_eq!(code(leitsatz(&out, &unreachable)), 4);
    let remote_tokenizer = ["--set", "tokenizer.kind=\"service\"", "--set", "tokenizer.url=\"http://127.0.0.1:9\"", "stats"];
    ok(&out, &["split"]);
    assert_eq!(code(leitsatz(&out, &remote_tokenizer)), 4);

    let admin = [("LEITSATZ__SERVE__ADMIN_TOKEN", "adm")];
    assert_eq!(code(leitsatz_env(&out, &["serve"], &admin)), 3, "assignments missing");
    ok(&out, &["summarize", "--approach", "lexrank"]);
    ok(&out, &["assign"]);
    assert_eq!(code(leitsatz(&out, &["serve"])), 2, "no admin token");
    assert_eq!(code(leitsatz_env(&out, &["serve"], &admin)), 2, "reviewers without tokens");
}

#[test]
fn steps_are_skipped_when_inputs_and_params_are_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    offline_chain(&out);
    let before = artifacts(&out);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    for step in ["ingest", "split", "stats", "enrich", "summarize.lexrank", "score", "assign"] {
        let rec = &manifest["steps"][step];
        assert!(rec["params_hash"].is_string(), "{step}");
        assert!(!rec["artifacts"].as_object().unwrap().is_empty(), "{step}");
    }
    assert_eq!(manifest["steps"]["split"]["params"]["seed"], 42);

    let stderr = ok(&out, &["run"]);
    assert_eq!(stderr.matches("up to date").count(), 7, "{stderr}");
    assert_eq!(artifacts(&out), before);

    let stderr = ok(&out, &["--set", "lexrank.sentences=1", "summarize", "--approach", "lexrank"]);
    assert!(stderr.contains("wrote"), "{stderr}");
    let stderr = ok(&out, &["score"]);
    assert!(stderr.contains("wrote"), "changed summaries must rescore: {stderr}");

    let stderr = ok(&out, &["--force", "split"]);
    assert!(stderr.contains("wrote"));

    fs::write(out.join("splits.json"), "{}").unwrap();
    let stderr = ok(&out, &["split"]);
    assert!(stderr.contains("wrote"), "tampered artifact must be rebuilt: {stderr}");
}

#[test]
fn separate_runs_produce_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    offline_chain(&a);
    offline_chain(&b);
    let (fa, fb) = (artifacts(&a), artifacts(&b));
    assert!(fa.len() >= 12);
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        assert_eq!(bytes, &fb[name], "{name} differs");
    }
}

#[test]
fn xml_and_jsonl_ingest_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (j, x) = (dir.path().join("j"), dir.path().join("x"));
    ok(&j, &["ingest"]);
    ok(&x, &["--set", "paths.corpus=\"xml\"", "--set", "paths.corpus_format=\"xml-dir\"", "ingest"]);
    for name in ["corpus.jsonl", "reasons.jsonl", "extraction_report.json"] {
        assert_eq!(fs::read(j.join(name)).unwrap(), fs::read(x.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn environment_overrides_reach_the_steps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&out, &["ingest"]);
    ok(&out, &["summarize", "--approach", "lexrank"]);
    let o = leitsatz_env(&out, &["assign"], &[("LEITSATZ__ASSIGN__PER_ITEM", "2")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let assignments: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(out.join("assignments.json")).unwrap()).unwrap();
    assert_eq!(assignments.len(), 5);
    assert!(assignments.iter().all(|a| a["reviewers"].as_array().unwrap().len() == 2));
}

#[test]
fn enrich_tags_citations_and_writes_the_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&out, &["ingest"]);
    ok(&out, &["enrich"]);
    let tags: Vec<String> = serde_json::from_str(&fs::read_to_string(out.join("tag_vocabulary.json")).unwrap()).unwrap();
    assert_eq!(tags, ["<GS>", "</GS>", "<RS>", "</RS>"]);
    let enriched = fs::read_to_string(out.join("enriched.jsonl")).unwrap();
    assert!(enriched.contains("<GS> § "), "{enriched}");
    assert!(enriched.contains("<RS> "), "{enriched}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("entity_report.json")).unwrap()).unwrap();
    assert_eq!(report["source"], "detected");
    assert_eq!(report["documents"], 5);
}

fn http(port: u16, method: &str, path: &str, bearer: Option<&str>, body: &str) -> (u16, String) {
    use std::io::{Read, Write};
    let mut s = std::net::TcpStream::connect(("127.0.0.1", port)).unwrap();
    let auth = bearer.map(|t| format!("authorization: Bearer {t}\r\n")).unwrap_or_default();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nhost: localhost\r\ncontent-type: application/json\r\n{auth}content-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).unwrap();
    let status = raw[9..12].parse().unwrap();
    let body = raw.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, body)
}

struct Killed(std::process::Child);

impl Drop for Killed {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn serve_exposes_the_review_api() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&out, &["ingest"]);
    ok(&out, &["summarize", "--approach", "lexrank"]);
    ok(&out, &["assign"]);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_leitsatz"));
    cmd.arg("--config")
        .arg(sample_config())
        .arg("--set")
        .arg(format!("paths.output={:?}", out.display().to_string()))
        .args(["serve", "--bind", &format!("127.0.0.1:{port}")])
        .env("LEITSATZ__SERVE__ADMIN_TOKEN", "admin-secret")
        .stderr(std::process::Stdio::null());
    for i in 1..=5 {
        cmd.env(format!("LEITSATZ__SERVE__REVIEWER_TOKENS__rev{i}"), format!("token-{i}"));
    }
    let _server = Killed(cmd.spawn().unwrap());
    let deadline = std::time::Instant::now() + std::time::Duration::from_secs(10);
    while std::net::TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(std::time::Instant::now() < deadline, "server did not start");
        std::thread::sleep(std::time::Duration::from_millis(20));
    }

    let (status, body) = http(port, "POST", "/session", None, r#"{"token":"token-1"}"#);
    assert_eq!(status, 200, "{body}");
    let session: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(session["reviewer"], "rev1");
    let sid = session["session"].as_str().unwrap();

    // 5 summaries × 3 reviewers over 5 reviewers: 3 items each.
    let (_, body) = http(port, "GET", "/progress", Some(sid), "");
    assert_eq!(serde_json::from_str::<serde_json::Value>(&body).unwrap(), serde_json::json!({"done": 0, "remaining": 3}));
    let (status, body) = http(port, "GET", "/queue/next", Some(sid), "");
    assert_eq!(status, 200);
    assert!(!body.contains("lexrank"), "{body}");
    let item: serde_json::Value = serde_json::from_str(&body).unwrap();
    let verdict = serde_json::json!({
        "item_id": item["item_id"],
        "decisions": [true, true, false, false, true, true, false],
        "reasoning": "",
    });
    let (status, _) = http(port, "POST", "/verdicts", Some(sid), &verdict.to_string());
    assert_eq!(status, 201);
    let (status, export) = http(port, "GET", "/admin/export", Some("admin-secret"), "");
    assert_eq!(status, 200);
    assert_eq!(export.lines().count(), 1);
    assert!(out.join("review_store.jsonl").exists());
}

#[test]
fn model_summaries_go_through_the_generation_endpoint() {
    let generator = stub::serve(|req| {
        let tagged = req.body["input"].as_str().unwrap_or_default().contains("<GS>");
        let text = if tagged { "Nach <GS> § 1 BGB </GS> gilt das." } else { "Das gilt." };
        (200, serde_json::json!({ "text": text }).to_string())
    });
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&out, &["ingest"]);
    ok(&out, &["enrich"]);
    let endpoint = [
        "--set", &format!("generation.endpoints.stub.url={:?}", generator.base_url),
        "--set", "generation.endpoints.stub.api_key_env=\"LEITSATZ_TEST_KEY\"",
        "--set", "generation.model_plain=\"stub\"",
        "--set", "generation.model_enriched=\"stub\"",
    ];
    let key = [("LEITSATZ_TEST_KEY", "k-123")];
    for approach in ["model_plain", "model_enriched"] {
        let mut args = endpoint.to_vec();
        args.extend(["summarize", "--approach", approach]);
        let o = leitsatz_env(&out, &args, &key);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let requests = generator.requests.lock().unwrap();
    assert_eq!(requests.len(), 10);
    assert!(requests.iter().all(|r| r.path == "/generate"));
    assert!(requests.iter().all(|r| r.headers.contains(&("authorization".into(), "Bearer k-123".into()))));
    let enriched: Vec<_> = requests.iter().filter(|r| r.body["special_tokens"].as_array().unwrap().len() == 4).collect();
    assert_eq!(enriched.len(), 5);
    assert!(enriched.iter().all(|r| r.body["input"].as_str().unwrap().contains("<GS> ")));
    assert!(requests.iter().all(|r| r.body["max_new_tokens"] == 750 && r.body["decoding"] == "greedy"));

    let enriched_out = fs::read_to_string(out.join("summaries/model_enriched.jsonl")).unwrap();
    for line in enriched_out.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(rec["text"], "Nach § 1 BGB gilt das.");
        assert_eq!(rec["generation_params"]["endpoint"], "stub");
    }
}
