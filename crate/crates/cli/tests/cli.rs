use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn mcmin(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_mcmin"))
        .args(args)
        .env_remove("RUST_LOG")
        .env_remove("MCMIN_THREADS")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    {
        let mut pipe = child.stdin.take().unwrap();
        if let Some(text) = stdin {
            pipe.write_all(text.as_bytes()).unwrap();
        }
    }
    child.wait_with_output().unwrap()
}

fn ok(args: &[&str], stdin: Option<&str>) -> String {
    let out = mcmin(args, stdin);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

fn error_doc(out: &Output) -> Value {
    let line = String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or_default().to_string();
    json(&line)
}

#[test]
fn fig8_local_pipeline() {
    let fig8 = ok(&["gen", "fig8"], None);
    let trace = json(&ok(&["minimise", "--algo", "local", "--eps2", "0.1"], Some(&fig8)));
    assert_eq!(trace["final_states"], 2);
    assert_eq!(trace["iterations"], 2);
    assert_eq!(trace["kind"], "trace");
}

#[test]
fn fig8_apr_input_order() {
    let fig8 = ok(&["gen", "fig8"], None);
    let trace = json(&ok(&["minimise", "--algo", "apr", "--eps2", "0.1", "--order", "input"], Some(&fig8)));
    assert_eq!(trace["final_states"], 4);
    assert_eq!(trace["iterations"], 0);
}

#[test]
fn explicit_order_file() {
    let dir = tempfile::tempdir().unwrap();
    let order = dir.path().join("order.txt");
    std::fs::write(&order, "0 2 1 3\n").unwrap();
    let arg = format!("file:{}", order.display());
    let trace = json(&ok(&["minimise", "fig8", "--algo", "apr", "--eps2", "0.1", "--order", &arg], None));
    assert_eq!(trace["final_states"], 3);
    assert_eq!(trace["iterations"], 1);
}

fn certificate_file(dir: &Path) -> (std::path::PathBuf, Value) {
    let trace = json(&ok(&["minimise", "fig8", "--algo", "local", "--eps2", "0.1", "--emit-witnesses"], None));
    let cert = trace["composed"].clone();
    let path = dir.join("cert.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cert).unwrap()).unwrap();
    (path, cert)
}

#[test]
fn verify_accepts_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let (path, mut cert) = certificate_file(dir.path());
    let verdict = json(&ok(&["verify", path.to_str().unwrap()], None));
    assert_eq!(verdict["passed"], true);

    // Move a full unit of mass in the first witness row.
    let row = cert["witness"][0].as_array_mut().unwrap();
    let target = row[0][0].as_u64().unwrap();
    row.clear();
    row.push(serde_json::json!([(target + 1) % 4, "1.0"]));
    std::fs::write(&path, serde_json::to_string(&cert).unwrap()).unwrap();
    let out = mcmin(&["verify", path.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_doc(&out)["error"]["exit_code"], 2);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn verify_reads_traces() {
    let trace = ok(&["minimise", "fig8", "--algo", "local", "--eps2", "0.1", "--emit-witnesses"], None);
    let verdict = json(&ok(&["verify"], Some(&trace)));
    assert_eq!(verdict["passed"], true);
    assert_eq!(verdict["checked"], 3);
}

#[test]
fn exit_codes_by_failure_class() {
    let out = mcmin(&["frobnicate"], None);
    assert_eq!(out.status.code(), Some(64));
    assert_eq!(error_doc(&out)["error"]["kind"], "usage");

    let out = mcmin(&["quotient", "/no/such/model.json"], None);
    assert_eq!(out.status.code(), Some(66));

    let bad = ok(&["gen", "fig8"], None).replacen("\"5.0000000000000000e-1\"", "\"0.7\"", 1);
    let out = mcmin(&["quotient"], Some(&bad));
    assert_eq!(out.status.code(), Some(65));
    assert!(error_doc(&out)["error"]["message"].as_str().unwrap().contains("row sums"));

    let out = mcmin(&["minimise", "fig8", "--algo", "local", "--eps2", "-1"], None);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn strict_mode_rejects_unknown_fields() {
    let text = ok(&["gen", "fig8"], None).replacen("\"labels\"", "\"colour\": 3,\n  \"labels\"", 1);
    assert_eq!(mcmin(&["--strict", "quotient"], Some(&text)).status.code(), Some(65));
    assert!(mcmin(&["quotient"], Some(&text)).status.success());
}

#[test]
fn quotient_of_fig1_without_skew() {
    let q = json(&ok(&["quotient", "fig1:0"], None));
    assert_eq!(q["states"], 2);
    assert_eq!(q["mapping"], serde_json::json!([0, 1, 0, 1]));
    let q = json(&ok(&["quotient", "fig1:0.1"], None));
    assert_eq!(q["states"], 4);
}

#[test]
fn prism_files() {
    let dir = tempfile::tempdir().unwrap();
    let tra = dir.path().join("toy.tra");
    std::fs::write(&tra, "4 6\n0 1 0.5\n0 2 0.5\n1 3 1\n2 3 1\n3 3 1\n3 3 0\n").unwrap();
    std::fs::write(dir.path().join("toy.lab"), "0=\"init\" 1=\"goal\"\n0: 0\n3: 1\n").unwrap();
    let q = json(&ok(&["quotient", tra.to_str().unwrap()], None));
    assert_eq!(q["states"], 3);
    assert_eq!(q["mapping"], serde_json::json!([0, 1, 1, 2]));
}

#[test]
fn generators() {
    for args in [
        vec!["gen", "fig1", "--eps", "0.05"],
        vec!["gen", "fig4"],
        vec!["gen", "example5"],
        vec!["gen", "subset-sum", "--p", "1,2,3", "--target", "4"],
        vec!["gen", "family-m", "--k", "3"],
        vec!["--seed", "7", "gen", "planted", "--m", "4", "--n", "32"],
    ] {
        let doc = json(&ok(&args, None));
        assert_eq!(doc["kind"], "lmc", "{args:?}");
    }
    let a = ok(&["--seed", "7", "gen", "planted", "--m", "4", "--n", "32"], None);
    let b = ok(&["gen", "planted", "--m", "4", "--n", "32", "--seed", "7"], None);
    assert_eq!(a, b);
    assert_eq!(mcmin(&["gen", "family-m", "--k", "3", "--eps", "0.5"], None).status.code(), Some(64));
}

#[test]
fn perturb_respects_the_envelope() {
    let out = ok(&["perturb", "planted:4:32:3", "--eps", "0.01", "--delta", "0.05", "--seed", "3"], None);
    let truth = ok(&["--seed", "3", "gen", "planted", "--m", "4", "--n", "32"], None);
    let rows = |doc: &Value| -> Vec<Vec<(u64, f64)>> {
        doc["states"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| {
                s["transitions"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|e| (e[0].as_u64().unwrap(), e[1].as_str().unwrap().parse().unwrap()))
                    .collect()
            })
            .collect()
    };
    let (a, b) = (rows(&json(&out)), rows(&json(&truth)));
    for (ra, rb) in a.iter().zip(&b) {
        let l1: f64 = rb
            .iter()
            .map(|&(t, p)| (p - ra.iter().find(|e| e.0 == t).map_or(0.0, |e| e.1)).abs())
            .sum();
        assert!(l1 <= 0.02 + 1e-9);
    }
    assert_eq!(out, ok(&["perturb", "planted:4:32:3", "--eps", "0.01", "--seed", "3"], None));
}

#[test]
fn bench_tables() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    std::fs::write(
        &manifest,
        r#"{"schema_version": 1, "kind": "manifest", "experiments": [
            {"model": "planted:4:32:3", "eps": 0.001, "eps2": [0.002, 0.1], "seeds": [1, 2], "algorithm": "both"}
        ]}"#,
    )
    .unwrap();
    let m = manifest.to_str().unwrap();
    let tsv_path = dir.path().join("out.tsv");
    let json_path = dir.path().join("out.json");
    let first = ok(&["--threads", "2", "bench", m, "--tsv-out", tsv_path.to_str().unwrap(), "--json-out", json_path.to_str().unwrap()], None);
    let second = ok(&["bench", m], None);
    let strip = |t: &str| t.lines().map(|l| l.rsplit_once('\t').unwrap().0.to_string()).collect::<Vec<_>>();
    assert_eq!(strip(&first), strip(&second));
    assert_eq!(first, std::fs::read_to_string(&tsv_path).unwrap());
    let doc = json(&std::fs::read_to_string(&json_path).unwrap());
    assert_eq!(doc["rows"].as_array().unwrap().len(), 2 * (3 + 4));
    let lines: Vec<&str> = first.lines().collect();
    assert!(lines[0].starts_with("model\tseed\tvariant"));
    assert!(lines.iter().any(|l| l.contains("\tM/~\t")));
    for l in lines.iter().filter(|l| l.contains("\tresult\t")) {
        let cols: Vec<&str> = l.split('\t').collect();
        assert_eq!(cols[9], "true", "{l}");
    }
}

#[test]
fn empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    std::fs::write(&manifest, r#"{"schema_version": 1, "kind": "manifest", "experiments": []}"#).unwrap();
    let out = ok(&["bench", manifest.to_str().unwrap()], None);
    assert_eq!(out.lines().count(), 1);
    let doc = json(&ok(&["--format", "json", "bench", manifest.to_str().unwrap()], None));
    assert_eq!(doc["rows"], serde_json::json!([]));
}
