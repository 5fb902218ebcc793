use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn qforms(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qforms")).args(args).output().expect("spawn qforms")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

#[test]
fn link_of_hopf_rings() {
    let a = path("ring_a.json");
    let linked = stdout_json(&qforms(&["link", &a, &path("ring_b_linked.json")]));
    assert_eq!(linked["lk_mod2"], 1);
    let apart = stdout_json(&qforms(&["link", &a, &path("ring_b_apart.json"), "--seed", "3"]));
    assert_eq!(apart["lk_mod2"], 0);
}

#[test]
fn e2_of_disk_family() {
    let out = qforms(&["e2", &path("disk.json"), "--grid", "32"]);
    let page = stdout_json(&out);
    assert_eq!(
        page["ranks"],
        serde_json::json!({"0,0": 0, "0,1": 1, "1,0": 0, "1,1": 0, "2,0": 1, "2,1": 0})
    );
    let table = String::from_utf8_lossy(&out.stderr);
    assert!(table.contains("j=1"), "{table}");
}

#[test]
fn hopf_renders_table_and_json_out() {
    let dir = std::env::temp_dir().join(format!("qforms-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("hopf.json");
    let out = qforms(&["hopf", "--grid", "32", "--json-out", file.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("j=")).take(4).collect();
    assert_eq!(rows.len(), 4, "{text}");
    let cells = |row: &str| row.split('|').nth(1).unwrap().split_whitespace().map(str::to_owned).collect::<Vec<_>>();
    assert_eq!(cells(rows[0]), ["Z2", "0", "0", "0"]);
    assert_eq!(cells(rows[3]), ["0", "0", "0", "Z2"]);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    assert_eq!(report["collapse"]["total"], 0);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn prop1_is_byte_deterministic() {
    let args = ["prop1", "--seed", "11", "--trials", "2"];
    let (a, b) = (qforms(&args), qforms(&args));
    let reports = stdout_json(&a);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(reports.as_array().unwrap().len(), 2);
    for r in reports.as_array().unwrap() {
        assert_eq!((r["lk_c2_c1"].as_u64(), r["lk_c2_c3"].as_u64()), (Some(1), Some(1)));
    }
}

#[test]
fn exit_codes() {
    let non_generic = qforms(&["trace", &path("hopf_scalar_zeta.json"), "--j", "1"]);
    assert_eq!(non_generic.status.code(), Some(3), "{}", String::from_utf8_lossy(&non_generic.stderr));

    let malformed = qforms(&["e2", &path("malformed.json")]);
    assert_eq!(malformed.status.code(), Some(2));

    let missing = qforms(&["e2", &path("no_such_file.json")]);
    assert_eq!(missing.status.code(), Some(2));

    let coarse = qforms(&["lemma4", "--s", "0.93", "--grid", "8"]);
    assert_eq!(coarse.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&coarse.stderr).is_empty());
}
