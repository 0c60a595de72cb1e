use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn crowdqc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdqc"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn fixture(name: &str) -> String {
    fixtures().join(name).to_str().unwrap().to_owned()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn postqc(out: &Path) -> Output {
    crowdqc(&[
        "postqc",
        "--responses",
        &fixture("responses_gd.jsonl"),
        "--ratings",
        &fixture("ratings_gd.csv"),
        "--expert",
        &fixture("table5_expert.csv"),
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn postqc_writes_reports_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(postqc(&a).status.success());
    assert!(postqc(&b).status.success());
    let names = [
        "quality.csv",
        "agreement.csv",
        "duplicates.csv",
        "fast_responses.csv",
        "expert_likert.csv",
        "summary.txt",
    ];
    for name in names {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name}");
    }
    let expert = read(&a.join("expert_likert.csv"));
    assert!(expert.contains("Total,175,79,96,72,NA,NA,NA,NA"), "{expert}");
    assert!(expert.contains("Average,NA,NA,NA,NA,3.88,2.12,1.44,4.40"), "{expert}");
    let quality = read(&a.join("quality.csv"));
    assert!(quality.lines().nth(1).unwrap().starts_with("290,68.28,31.72,"), "{quality}");
}

#[test]
fn robustness_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("qc.toml");
    std::fs::write(&config, "[qc]\nn = 3\ngibberish_threshold = 0.5\n").unwrap();
    let out = dir.path().join("rob");
    let run = || {
        crowdqc(&[
            "robustness",
            "--items",
            &fixture("robustness_items.jsonl"),
            "--corpus",
            &fixture("robustness_corpus.jsonl"),
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
    };
    let first = run();
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let summary = read(&out.join("robustness.csv"));
    let items = read(&out.join("robustness_items.csv"));
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some(",Authentic,Copied,Paraphrased"));
    assert!(lines.next().unwrap().starts_with("Detected,29,29,"));
    assert!(lines.next().unwrap().starts_with("Undetected,0,0,"));
    assert!(run().status.success());
    assert_eq!(read(&out.join("robustness.csv")), summary);
    assert_eq!(read(&out.join("robustness_items.csv")), items);
}

#[test]
fn demographics_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/table.csv");
    let r = crowdqc(&["demographics", "--roster", &fixture("roster_exp4.jsonl"), "--out", out.to_str().unwrap()]);
    assert!(r.status.success());
    let csv = read(&out);
    assert!(csv.starts_with("Variable,Choice,Cohort (n=26)\n"));
    assert!(csv.contains("Sex,Female,53.9 (14)\n"));
    assert!(csv.contains("Age,Range,23-70\n"));
}

#[test]
fn index_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus.idx");
    let r = crowdqc(&["index", "--corpus", &fixture("robustness_corpus.jsonl"), "--out", out.to_str().unwrap()]);
    assert!(r.status.success());
    let index = crowdqc_core::search::CorpusIndex::load(&out).unwrap();
    assert_eq!(index.len(), 29);
}

#[test]
fn missing_input_exits_two_naming_path() {
    let dir = tempfile::tempdir().unwrap();
    let r = crowdqc(&[
        "demographics",
        "--roster",
        "/nonexistent/roster.jsonl",
        "--out",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("/nonexistent/roster.jsonl"));
}

#[test]
fn schema_error_exits_one_naming_line() {
    let dir = tempfile::tempdir().unwrap();
    let roster = dir.path().join("roster.jsonl");
    std::fs::write(&roster, "{\"worker_id\": \"w1\"}\n{\"age\": 30}\n").unwrap();
    let r = crowdqc(&[
        "demographics",
        "--roster",
        roster.to_str().unwrap(),
        "--out",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("roster.jsonl:2"));
}

#[test]
fn invalid_qc_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("qc.toml");
    std::fs::write(&config, "gibberish_threshold = 1.5\n").unwrap();
    let r = crowdqc(&[
        "robustness",
        "--items",
        &fixture("robustness_items.jsonl"),
        "--corpus",
        &fixture("robustness_corpus.jsonl"),
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("gibberish_threshold"));
}

#[test]
fn usage_errors_and_help() {
    let r = crowdqc(&["frobnicate"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("Usage"));
    let r = crowdqc(&["postqc", "--bogus"]);
    assert_eq!(r.status.code(), Some(1));
    let r = crowdqc(&["--help"]);
    assert_eq!(r.status.code(), Some(0));
    let help = String::from_utf8_lossy(&r.stdout);
    for sub in ["serve", "index", "postqc", "robustness", "demographics"] {
        assert!(help.contains(sub), "{help}");
    }
}

#[test]
fn serve_with_missing_config_exits_two() {
    let r = crowdqc(&["serve", "--config", "/nonexistent/study.toml", "--port", "0"]);
    assert_eq!(r.status.code(), Some(2));
}

#[cfg(unix)]
#[test]
fn serve_shuts_down_cleanly_on_interrupt() {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpStream;
    use std::process::Stdio;

    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.toml");
    let log = dir.path().join("events.jsonl");
    std::fs::write(
        &config,
        format!(
            "questions_file = {:?}\nevent_log = {:?}\n\n[search]\nkind = \"corpus\"\ncorpus = {:?}\n",
            fixture("questions.json"),
            log.to_str().unwrap(),
            fixture("robustness_corpus.jsonl"),
        ),
    )
    .unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_crowdqc"))
        .args(["serve", "--config", config.to_str().unwrap(), "--port", "0"])
        .env("RUST_LOG", "warn")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut banner = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut banner).unwrap();
    let addr = banner.trim().strip_prefix("listening on http://").expect(&banner).to_owned();

    let body = r#"{"worker_id":"w1","question_id":"q01","session_id":"s1","text":"asdkf qwelkj zzxcv","elapsed_seconds":3,"submitted_at":"2024-03-01T10:00:00Z"}"#;
    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(
        stream,
        "POST /v1/validate HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut reply = String::new();
    stream.read_to_string(&mut reply).unwrap();
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    assert!(reply.contains("RejectGibberish"));

    let killed = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(killed.success());
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
    let events = read(&log);
    assert_eq!(events.lines().count(), 1);
    assert!(events.contains("\"event\":\"validated\""));
}
