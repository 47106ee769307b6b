use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

fn data() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn guide(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_guide")).args(args).env_remove("GUIDE_LLM_API_KEY").output().unwrap()
}

fn s(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

fn gen_replay(cassettes: &str, dir: &std::path::Path) -> (Output, String, String) {
    let (out, report) = (dir.join("mkdir.guide"), dir.join("report.json"));
    let man = data().join("man/mkdir.txt");
    let cassettes = data().join("cassettes").join(cassettes);
    let o = guide(&["gen", "mkdir", "--man", s(&man), "--replay", s(&cassettes), "--out", s(&out), "--report", s(&report)]);
    let read = |p: &std::path::Path| std::fs::read_to_string(p).unwrap_or_default();
    (o, read(&out), read(&report))
}

#[test]
fn replayed_generation_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (o1, g1, r1) = gen_replay("mkdir", a.path());
    let (o2, g2, r2) = gen_replay("mkdir", b.path());
    assert!(o1.status.success(), "{}", String::from_utf8_lossy(&o1.stderr));
    assert!(o2.status.success());
    assert!(g1.starts_with("command mkdir"));
    assert_eq!(g1, g2);
    assert_eq!(r1, r2);
    assert_eq!(o1.stderr, o2.stderr);
    let report: serde_json::Value = serde_json::from_str(&r1).unwrap();
    assert_eq!((report["passed"].as_u64(), report["total"].as_u64(), report["restarts"].as_u64()), (Some(20), Some(20), Some(0)));
}

#[test]
fn generation_prints_to_stdout() {
    let man = data().join("man/mkdir.txt");
    let cassettes = data().join("cassettes/mkdir-regenerate");
    let o = guide(&["gen", "mkdir", "--man", s(&man), "--replay", s(&cassettes)]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("command mkdir"));
    assert!(String::from_utf8(o.stderr).unwrap().contains("draft regenerations: 1"));
}

#[test]
fn missing_cassettes_fail() {
    let empty = tempfile::tempdir().unwrap();
    let man = data().join("man/mkdir.txt");
    let o = guide(&["gen", "mkdir", "--man", s(&man), "--replay", s(empty.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no recorded response"));

    let o = guide(&["gen", "mkdir", "--man", s(&man)]);
    assert_eq!(o.status.code(), Some(2), "a mode is required");
    let o = guide(&["gen", "mkdir", "--man", s(&man), "--live"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("GUIDE_LLM_API_KEY"));
}

#[test]
fn eval_matches_the_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.md");
    let corpus = data().join("corpus/mini.cm");
    let guidelines = data().join("guidelines");
    let o = guide(&["eval", "--corpus", s(&corpus), "--guidelines", s(&guidelines), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), std::fs::read_to_string(data().join("eval/mini_report.md")).unwrap());

    let o = guide(&["eval", "--corpus", s(&corpus), "--guidelines", s(&guidelines), "--seed", "0"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), std::fs::read_to_string(&out).unwrap());
}

#[test]
fn lint_reports_findings() {
    let o = guide(&["lint", s(&data().join("fixtures/print.guide"))]);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("Sequencing"));
    let o = guide(&["lint", s(&data().join("guidelines/grep.guide"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn serve_answers_http() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_guide"))
        .args(["serve", "--root", s(&data().join("fixtures/tree")), "--guidelines", s(&data().join("guidelines")), "--port", "0"])
        .arg("--replay")
        .arg(data().join("cassettes/server"))
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").unwrap_or_else(|| panic!("{line}")).to_string();
    let mut conn = TcpStream::connect(&addr).unwrap();
    write!(conn, "GET /api/status HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    conn.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.ends_with(r#"{"ai":true}"#), "{resp}");
}
