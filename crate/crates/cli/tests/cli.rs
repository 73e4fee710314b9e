use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn framekit(args: &[&str], stdin: Option<&[u8]>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_framekit"))
        .args(args)
        .env_remove("FRAMEKIT_SEARCH_TRIALS")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn framekit");
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or_default()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

const ONB: &str = r#"{"dimension": 2, "vectors": [[1, 0], [0, 1]]}"#;

#[test]
fn analyze_onb() {
    let out = framekit(&["analyze"], Some(ONB.as_bytes()));
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["kind"], "analyze");
    assert_eq!(v["result"]["bounds"]["lower"].as_f64(), Some(1.0));
    assert_eq!(v["result"]["bounds"]["upper"].as_f64(), Some(1.0));
}

#[test]
fn partition_then_verify_and_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "onb.json", ONB);
    let cert = dir.path().join("cert.json");
    let out = framekit(&["partition", &input, "--mode", "exhaustive", "-o", cert.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let out = framekit(&["verify", cert.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["ok"], true);

    let mut env: Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    env["result"]["assignment"][1] = Value::from(1);
    let tampered = write(dir.path(), "tampered.json", &env.to_string());
    let out = framekit(&["verify", &tampered], None);
    assert_eq!(out.status.code(), Some(1));
    let report = json(&out);
    assert_eq!(report["ok"], false);
    assert!(!report["mismatches"].as_array().unwrap().is_empty());
}

#[test]
fn fourier_demo_pipes_into_discretize() {
    let demo = framekit(&["demo", "fourier", "--M", "8", "--support", "0,1,2"], None);
    assert_eq!(demo.status.code(), Some(0));
    let out = framekit(&["discretize", "--epsilon", "0.25"], Some(&demo.stdout));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = &json(&out)["result"];
    let lo = r["achieved_bounds"][0].as_f64().unwrap();
    let hi = r["achieved_bounds"][1].as_f64().unwrap();
    let w = &r["guaranteed_window"];
    assert!(lo > 0.0);
    assert!(lo >= w[0].as_f64().unwrap() - 1e-9 && hi <= w[1].as_f64().unwrap() + 1e-9);
    assert_eq!(r["within_guaranteed_window"], true);

    let verified = framekit(&["verify"], Some(&out.stdout));
    assert_eq!(verified.status.code(), Some(0));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let h = 0.125f64.sqrt();
    let vecs: Vec<String> = (0..8).map(|i| format!("[{h}, {}]", if i % 2 == 0 { h } else { -h })).collect();
    let frame = format!(r#"{{"dimension": 2, "vectors": [{}]}}"#, vecs.join(", "));
    let args = ["partition", "--mode", "randomized", "--seed", "7", "--trials", "2000"];
    let a = framekit(&args, Some(frame.as_bytes()));
    let b = framekit(&args, Some(frame.as_bytes()));
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["parameters"]["search"]["seed"], 7);
    assert_eq!(v["parameters"]["search"]["trials"], 2000);
}

#[test]
fn trials_default_comes_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_framekit"))
        .args(["partition", "--mode", "randomized"])
        .env("FRAMEKIT_SEARCH_TRIALS", "321")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .and_then(|mut c| {
            c.stdin.take().unwrap().write_all(ONB.as_bytes())?;
            c.wait_with_output()
        })
        .unwrap();
    assert_eq!(json(&out)["parameters"]["search"]["trials"], 321);
}

#[test]
fn exit_codes_by_error_class() {
    let out = framekit(&["analyze"], Some(b"{not json"));
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    // norms above one are not Bessel-bounded by 1
    let big = r#"{"dimension": 1, "vectors": [[2.0], [0.0]]}"#;
    let out = framekit(&["partition"], Some(big.as_bytes()));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let many: Vec<String> = (0..20).map(|_| "[0.2]".to_owned()).collect();
    let wide = format!(r#"{{"dimension": 1, "vectors": [{}]}}"#, many.join(","));
    let out = framekit(&["partition", "--mode", "exhaustive"], Some(wide.as_bytes()));
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn lyapunov_uniform_weights_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "onb.json", ONB);
    let csv = dir.path().join("s.csv");
    let out = framekit(&["lyapunov", &input, "--weights", "uniform:0.5", "--csv", csv.to_str().unwrap()], None);
    assert!(matches!(out.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("field,value\nkind,lyapunov\n"));
    assert!(text.contains("\ndeviation,"));
}

#[test]
fn gabor_and_wavelet_demos_analyze() {
    for demo in [vec!["demo", "gabor", "--window", "1,0,0"], vec!["demo", "wavelet", "--K", "1"]] {
        let model = framekit(&demo, None);
        assert_eq!(model.status.code(), Some(0), "{}", String::from_utf8_lossy(&model.stderr));
        let out = framekit(&["analyze"], Some(&model.stdout));
        assert_eq!(out.status.code(), Some(0));
        assert!(json(&out)["result"]["bounds"]["lower"].as_f64().unwrap() > 0.0);
    }
}

const SCHEMAS: [&str; 4] = ["frame-system", "continuous-model", "envelope", "verify-report"];
const SCHEMA_BASE: &str = "file:///framekit/schemas/";

fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../docs/schemas/{name}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_schema(name: &str, doc: &Value) {
    let registry = SCHEMAS
        .iter()
        .fold(jsonschema::Registry::new(), |r, n| r.add(format!("{SCHEMA_BASE}{n}.schema.json"), schema(n)).unwrap())
        .prepare()
        .unwrap();
    let validator =
        jsonschema::options().with_base_uri(SCHEMA_BASE).with_registry(&registry).build(&schema(name)).unwrap();
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{e} at {}", e.instance_path())).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

fn schema_rejects(name: &str, doc: &Value) -> bool {
    std::panic::catch_unwind(|| assert_schema(name, doc)).is_err()
}

#[test]
fn documents_match_the_shipped_schemas() {
    assert_schema("frame-system", &serde_json::from_str(ONB).unwrap());
    let demos = [
        vec!["demo", "fourier", "--M", "6", "--support", "0,2"],
        vec!["demo", "fourier", "--continuous"],
        vec!["demo", "wavelet", "--K", "1", "--per-octave", "1"],
    ];
    for d in demos {
        assert_schema("continuous-model", &json(&framekit(&d, None)));
    }
    let gabor = framekit(&["demo", "gabor"], None);
    assert_schema("frame-system", &json(&gabor));

    let runs: [(&[&str], &[u8]); 4] = [
        (&["analyze"], ONB.as_bytes()),
        (&["partition", "--r", "2"], ONB.as_bytes()),
        (&["lyapunov", "--weights", "uniform:0.5"], ONB.as_bytes()),
        (&["sample", "--epsilon", "0.5"], ONB.as_bytes()),
    ];
    for (args, input) in runs {
        let out = framekit(args, Some(input));
        let env = json(&out);
        assert_schema("envelope", &env);
        let report = framekit(&["verify"], Some(&out.stdout));
        assert_schema("verify-report", &json(&report));
    }

    let mut env = json(&framekit(&["analyze"], Some(ONB.as_bytes())));
    env["kind"] = Value::from("bogus");
    assert!(schema_rejects("envelope", &env));
    let mixed = serde_json::json!({"dimension": 1, "cells": [], "vectors": [], "generator": {"kind": "fourier", "modulus": 2, "support": [0]}});
    assert!(schema_rejects("continuous-model", &mixed));
    assert!(schema_rejects("frame-system", &serde_json::json!({"dimension": 2, "vectors": [[[1, 0, 0]]]})));
}
